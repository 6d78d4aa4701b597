"""Compare the compiled and numpy grid kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--h 1e-3] [--steps 2000]

Times one microscopic step kernel (deposit + projection) on the running
example window, then a short fused micro run under each backend.
"""
import argparse
import importlib
import os
import time

import numpy as np

from heatbath import kernels
from heatbath.dilation import DilationBasis, window_samples


def time_kernel(fn, F, h, reps):
    m, d, k = F.shape
    buf = np.random.default_rng(0).standard_normal((m + reps + 2, d))
    c = np.full(k, 1e-3)
    start = reps
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(buf, start, F, c, c, h)
        start -= 1
    return (time.perf_counter() - t0) / reps


def time_run(backend, h, steps):
    os.environ.pop("HEATBATH_PURE_PYTHON", None)
    if backend == "python":
        os.environ["HEATBATH_PURE_PYTHON"] = "1"
    import heatbath.micro as micro

    importlib.reload(kernels)
    importlib.reload(micro)
    from heatbath.model import running_example

    spec = running_example()
    basis = DilationBasis.running_example()
    cfg = micro.MicroConfig(h=h, T=steps * h)
    st = micro.init_deterministic(spec, basis, np.array([1.0, 0.0]), np.array([1.0, 0, 0]), cfg)
    t0 = time.perf_counter()
    micro.final_state(spec, basis, st, cfg)
    return time.perf_counter() - t0, kernels.BACKEND


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--h", type=float, default=1e-3)
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()
    basis = DilationBasis.running_example()
    F = np.ascontiguousarray(window_samples(basis, args.h))
    print(f"window cells m = {F.shape[0]}, h = {args.h:g}")
    found = kernels.backends()
    res = {}
    for name, fn in found.items():
        res[name] = time_kernel(fn, F, args.h, args.steps)
        print(f"kernel  {name:7s} {res[name] * 1e6:9.1f} us/step")
    if len(res) == 2:
        print(f"kernel speedup (python / cython): {res['python'] / res['cython']:.2f}x")
    for name in found:
        secs, used = time_run(name, args.h, args.steps)
        print(f"micro   {used:7s} {secs:9.3f} s for {args.steps} steps")


if __name__ == "__main__":
    main()
