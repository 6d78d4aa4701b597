"""Command-line front end.

Every command writes its result to ``--out`` (CSV for trajectories, JSON for
reports) together with ``<out>.manifest.json``; without ``--out`` the result
goes to stdout. Exit status: 0 success, 1 failed verification, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from .errors import ConfigError, HeatBathError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="TOML system file (default: packaged running example)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output file; a manifest is written next to it")
    common.add_argument("--threads", type=_positive_int, default=None, help="cap on worker threads")

    p = argparse.ArgumentParser(prog="heatbath", description="Oscillator + heat bath simulator and checks")
    p.add_argument("--version", action="version", version=f"heatbath {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a trajectory").add_subparsers(dest="target", required=True)
    m = sim.add_parser("micro", parents=[common], help="grid simulation of oscillator + bath")
    m.add_argument("--h", type=float, default=1e-3)
    m.add_argument("--T", type=float, default=10.0)
    m.add_argument("--z0", type=_floats, default=None)
    m.add_argument("--w0", type=_floats, default=None)
    m.add_argument("--thermal", action="store_true", help="add a thermal bath field orthogonal to W")
    m.add_argument("--stride", type=_positive_int, default=1)
    m = sim.add_parser("macro", parents=[common], help="coarse-grained (z, w, e) dynamics")
    m.add_argument("--mode", choices=("ode", "sde"), default="ode")
    m.add_argument("--scheme", default=None, help="rk4 (ode) or euler-maruyama|milstein|semi-implicit-w")
    m.add_argument("--dt", type=float, default=1e-3)
    m.add_argument("--T", type=float, default=10.0)
    m.add_argument("--z0", type=_floats, default=None)
    m.add_argument("--w0", type=_floats, default=None)
    m.add_argument("--stride", type=_positive_int, default=1)

    ver = sub.add_parser("verify", help="structural checks").add_subparsers(dest="target", required=True)
    v = ver.add_parser("compression", parents=[common])
    v.add_argument("--times", type=_floats, default=[round(0.1 * k, 10) for k in range(1, 51)])
    v.add_argument("--tol", type=float, default=1e-10)
    v.add_argument("--quad-tol", type=float, default=1e-7)
    v.add_argument("--y-max", type=float, default=30.0)
    v = ver.add_parser("ou", parents=[common])
    v.add_argument("--paths", type=_positive_int, default=20000)
    v.add_argument("--lag", type=float, default=0.7)
    v.add_argument("--dt", type=float, default=0.1)
    v.add_argument("--beta", type=float, default=None, help="override the configured beta")
    v.add_argument("--n-se", type=float, default=4.0)
    v.add_argument("--micro", action="store_true", help="also test the projected thermal grid bath")
    v.add_argument("--micro-paths", type=_positive_int, default=20000)
    v.add_argument("--h", type=float, default=1e-3)
    v = ver.add_parser("structure", parents=[common])
    v.add_argument("--states", type=_positive_int, default=1000)
    v.add_argument("--transforms", type=_positive_int, default=20)

    c = sub.add_parser("compare-micro-macro", parents=[common], help="deviation of micro from macro ODE")
    c.add_argument("--h", type=float, default=1e-3)
    c.add_argument("--T", type=float, default=10.0)
    c.add_argument("--z0", type=_floats, default=None)
    c.add_argument("--w0", type=_floats, default=None)
    c.add_argument("--tol", type=float, default=5e-3)

    ens = sub.add_parser("ensemble", help="statistical checks").add_subparsers(dest="target", required=True)
    e = ens.add_parser("logz", parents=[common])
    e.add_argument("--n", type=_ints, default=[10**4, 10**5, 10**6])
    e.add_argument("--beta", type=float, default=1.0)
    e.add_argument("--e", type=float, default=0.7)
    e = ens.add_parser("equivalence", parents=[common])
    e.add_argument("--n", type=_positive_int, default=2000)
    e.add_argument("--k", type=_positive_int, default=3)
    e.add_argument("--R", type=float, default=1.0)
    e.add_argument("--samples", type=_positive_int, default=50000)
    e = ens.add_parser("variance", parents=[common])
    e.add_argument("--n", type=_ints, default=[10, 100, 1000])
    e.add_argument("--R", type=float, default=1.0)
    e.add_argument("--samples", type=_positive_int, default=20000)
    e.add_argument("--factor", type=float, default=1.5)
    e = ens.add_parser("invariance", parents=[common])
    e.add_argument("--T", type=float, default=5.0)
    e.add_argument("--dt", type=float, default=1e-3)
    e.add_argument("--samples", type=_positive_int, default=10000)
    e.add_argument("--scheme", default="milstein")
    e.add_argument("--zero-noise", action="store_true", help="negative control: drop Sigma, keep D")
    return p


# -- output helpers -------------------------------------------------------------


def _round(obj, digits=12):
    if isinstance(obj, float):
        return obj if not math.isfinite(obj) else float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: _round(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v, digits) for v in obj]
    if hasattr(obj, "tolist"):
        return _round(obj.tolist(), digits)
    if hasattr(obj, "item"):
        return _round(obj.item(), digits)
    return obj


def _csv_text(header, rows):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([x if isinstance(x, str) else "%.17g" % x for x in r])
    return buf.getvalue()


def _summary(passed, **values):
    """One ``key=value`` status line on stderr; stdout may carry the data."""
    parts = [f"passed={'true' if passed else 'false'}"] + [f"{k}={v:.6e}" for k, v in values.items()]
    print(" ".join(parts), file=sys.stderr)


def _json_text(report):
    return json.dumps(_round(report), indent=2, sort_keys=False) + "\n"


class _Ctx:
    def __init__(self, args, argv):
        self.args = args
        self.argv = argv
        self.t0 = time.time()
        self.loaded = None

    def load(self):
        from .config import default_config_path, load_config

        path = self.args.config
        if path is not None and not Path(path).exists():
            packaged = default_config_path().parent / Path(path).name
            if packaged.exists():
                path = packaged
        self.loaded = load_config(path)
        return self.loaded

    def emit(self, text, kind):
        out = self.args.out
        if out is None:
            sys.stdout.write(text)
            return
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        from .config import describe

        manifest = {
            "tool": "heatbath",
            "version": __version__,
            "command": self.argv,
            "subcommand": " ".join(
                x for x in (self.args.command, getattr(self.args, "target", None)) if x
            ),
            "config": str(self.loaded.path) if self.loaded else None,
            "system": describe(self.loaded.spec) if self.loaded else None,
            "seed": self.args.seed,
            "arguments": {k: v for k, v in sorted(vars(self.args).items())},
            "output": str(out),
            "format": kind,
            "wall_clock_s": round(time.time() - self.t0, 3),
        }
        Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _initial(spec, z0, w0):
    import numpy as np

    z = np.zeros(2 * spec.n) if z0 is None else np.asarray(z0, dtype=float)
    if z0 is None:
        z[0] = 1.0
    w = np.zeros(spec.d) if w0 is None else np.asarray(w0, dtype=float)
    if w0 is None:
        w[0] = 1.0
    if z.shape != (2 * spec.n,) or w.shape != (spec.d,):
        raise ConfigError(f"--z0 needs {2 * spec.n} numbers and --w0 needs {spec.d}")
    return z, w


# -- commands -------------------------------------------------------------------


def _simulate_micro(ctx):
    from . import micro

    a = ctx.args
    cfg = ctx.load()
    z0, w0 = _initial(cfg.spec, a.z0, a.w0)
    mc = micro.MicroConfig(h=a.h, T=a.T, thermal=a.thermal, seed=a.seed, stride=a.stride)
    init = (micro.init_thermal if a.thermal else micro.init_deterministic)(cfg.spec, cfg.basis, z0, w0, mc)
    traj = micro.run(cfg.spec, cfg.basis, init, mc)
    ctx.emit(_csv_text(*traj.to_rows()), "csv")
    return EXIT_OK


def _simulate_macro(ctx):
    from . import macrodyn
    from .model import build_derived

    a = ctx.args
    cfg = ctx.load()
    der = build_derived(cfg.spec, warn=False)
    z0, w0 = _initial(cfg.spec, a.z0, a.w0)
    scheme = a.scheme or ("rk4" if a.mode == "ode" else "euler-maruyama")
    if (a.mode == "ode") != (scheme == "rk4"):
        raise ConfigError(f"scheme {scheme!r} does not fit mode {a.mode!r}")
    ic = macrodyn.IntegratorConfig(dt=a.dt, scheme=scheme, seed=a.seed, stride=a.stride)
    init = macrodyn.MacroState(0.0, z0, w0, 0.0)
    if a.mode == "ode":
        traj = macrodyn.run_ode(cfg.spec, der, init, ic, a.T)
    else:
        traj = macrodyn.run_sde(cfg.spec, der, init, ic, a.T)
    ctx.emit(_csv_text(*traj.to_rows()), "csv")
    return EXIT_OK


def _verify_compression(ctx):
    import numpy as np

    from .dilation import DilationBasis, verify_compression, verify_dilation_identity

    a = ctx.args
    cfg = ctx.load()
    basis = cfg.basis
    closed = verify_compression(basis, a.times, tol=a.tol)
    quad = verify_compression(DilationBasis.general(basis.D), a.times, tol=a.quad_tol, quad_tol=1e-10)
    ident = verify_dilation_identity(basis.D, a.y_max, tol=1e-10)
    rows = np.column_stack([closed.times, closed.errors, quad.errors])
    ctx.emit(_csv_text(["t", f"error_{basis.mode}", "error_quadrature"], rows), "csv")
    passed = closed.passed and quad.passed and ident <= 1e-8
    _summary(passed, max_error=closed.max_error, max_error_quadrature=quad.max_error,
             dilation_identity=ident)
    return EXIT_OK if passed else EXIT_FAIL


def _verify_ou(ctx):
    import numpy as np

    from . import micro, ou

    a = ctx.args
    cfg = ctx.load()
    beta = a.beta if a.beta is not None else cfg.spec.beta
    lag_steps = int(round(a.lag / a.dt))
    if lag_steps < 1 or abs(lag_steps * a.dt - a.lag) > 1e-12:
        raise ConfigError("--lag must be a positive multiple of --dt")
    params = ou.make_params(cfg.spec.D, beta, a.dt)
    V = np.stack([p.values for p in ou.simulate_paths(params, lag_steps, a.paths, a.seed)])
    target = ou.covariance(cfg.spec.D, beta, 0.0, a.lag)
    tests = [("exact", ou.estimate_covariance(V, lag_steps), a.n_se)]
    if a.micro:
        w0, w1 = micro.bath_projection_ensemble(cfg.basis, beta, a.h, a.lag, a.micro_paths, a.seed)
        tests.append(("micro", ou.lag_products(w1, w0), 5.0))
    rows, passed, worst = [], True, 0.0
    for name, est, n_se in tests:
        zs = np.abs(est.mean - target) / est.se
        passed = passed and bool(zs.max() <= n_se)
        worst = max(worst, float(zs.max()))
        for i, j in np.ndindex(target.shape):
            rows.append([name, i, j, est.mean[i, j], target[i, j], est.se[i, j], zs[i, j]])
    ctx.emit(_csv_text(["source", "i", "j", "empirical", "analytic", "se", "z"], rows), "csv")
    _summary(passed, beta=beta, lag=a.lag, max_z=worst)
    return EXIT_OK if passed else EXIT_FAIL


def _verify_structure(ctx):
    import numpy as np

    from . import generic, macrodyn
    from .model import build_derived
    from .rng import named_rng

    a = ctx.args
    cfg = ctx.load()
    spec = cfg.spec
    der = build_derived(spec, warn=False)
    S = generic.GenericStructure(spec, der)
    rng = named_rng(a.seed, "structure")
    Y = generic.random_states(spec, a.states, rng)
    rep = generic.check_structure(S, Y)

    def drift(y, sde):
        z, w, _ = S.split(y)
        dz, dw, de = macrodyn.drift_det(spec, der, z, w)
        if sde:
            de = de - np.trace(spec.D) / spec.beta
        return np.concatenate([dz, dw, [de]])

    rep.checks.append(generic.check_drift(S, Y, lambda y: drift(y, False)))
    rep.checks.append(generic.check_drift(S, Y, lambda y: drift(y, True), with_divK=True))
    rates = [generic.energy_entropy_rates(S, y, generic.assemble_drift(S, y)) for y in Y]
    dE = max(abs(r[0]) for r in rates)
    dS = min(r[1] for r in rates)
    rep.checks.append(generic.CheckResult("energy_rate", dE, generic.ALGEBRAIC_TOL))
    rep.checks.append(generic.CheckResult("entropy_rate_negative_part", max(0.0, -dS), generic.ALGEBRAIC_TOL))
    N = S.dim
    transforms = []
    for i in range(a.transforms):
        A = rng.standard_normal((N, N)) + 2.0 * np.eye(N)
        phi, dphi, inv = generic.linear_map(A, rng.standard_normal(N))
        t = generic.transform_structure(S, phi, dphi, Y[:20], inv)
        transforms.append(t)
    worst = {}
    for t in transforms:
        for c in t.checks:
            if c.name not in worst or c.max_error > worst[c.name].max_error:
                worst[c.name] = c
    report = rep.to_dict()
    report["transformed"] = {
        "maps": a.transforms,
        "states_per_map": min(20, a.states),
        "passed": all(t.passed for t in transforms),
        "checks": [{"name": c.name, "max_error": c.max_error, "tol": c.tol, "passed": c.passed}
                   for c in worst.values()],
    }
    report["passed"] = rep.passed and report["transformed"]["passed"]
    ctx.emit(_json_text(report), "json")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _compare(ctx):
    import numpy as np

    from . import macrodyn, micro
    from .model import build_derived

    a = ctx.args
    cfg = ctx.load()
    spec = cfg.spec
    z0, w0 = _initial(spec, a.z0, a.w0)
    mc = micro.MicroConfig(h=a.h, T=a.T)
    mt = micro.run(spec, cfg.basis, micro.init_deterministic(spec, cfg.basis, z0, w0, mc), mc)
    der = build_derived(spec, warn=False)
    Mt = macrodyn.run_ode(spec, der, macrodyn.MacroState(0.0, z0, w0, 0.0),
                          macrodyn.IntegratorConfig(dt=a.h), a.T)
    dev = np.linalg.norm(np.hstack([mt.z - Mt.z, mt.w - Mt.w]), axis=1)
    rows = np.column_stack([mt.t, dev, np.abs(mt.z - Mt.z), np.abs(mt.w - Mt.w)])
    header = (["t", "dev"] + [f"dz{i}" for i in range(2 * spec.n)] + [f"dw{j}" for j in range(spec.d)])
    max_dev = float(dev.max())
    if a.out is not None:
        ctx.emit(_csv_text(header, rows), "csv")
    sys.stdout.write(f"max_dev={max_dev:.6e}\n")
    return EXIT_OK if max_dev <= a.tol else EXIT_FAIL


def _ens_logz(ctx):
    from . import ensemble as E

    a = ctx.args
    rows = []
    for n in a.n:
        g = E.normalized_gap(n, a.beta, a.e)
        rows.append({"n": n, "logZ": E.microcanonical_logZ(n, a.beta, a.e),
                     "C": E.microcanonical_C(a.beta, n), "gap": g, "n_gap": n * g})
    limit = E.gap_limit(a.beta, a.e)
    rel = [abs(r["n_gap"] / limit - 1.0) if limit != 0 else abs(r["n_gap"]) for r in rows]
    big = max(rows, key=lambda r: r["n"])
    report = {"beta": a.beta, "e": a.e, "rows": rows, "n_gap_limit": limit,
              "max_rel_dev_n_gap": max(rel), "gap_at_largest_n": big["gap"],
              "passed": bool(max(rel) <= 0.01 and abs(big["gap"]) <= 1e-5)}
    ctx.emit(_json_text(report), "json")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _ens_equivalence(ctx):
    import numpy as np

    from . import ensemble as E
    from .rng import named_rng

    a = ctx.args
    s = E.sphere_sample(a.n, a.R, a.samples, named_rng(a.seed, "sphere"), k=a.k)
    cov_dev = float(np.max(np.abs(s.cov - a.R * np.eye(a.k))))
    kurt = float(np.max(np.abs(s.excess_kurtosis)))
    report = s.to_dict()
    report.update({"max_cov_dev": cov_dev, "max_abs_excess_kurtosis": kurt,
                   "passed": bool(cov_dev <= 0.02 and kurt <= 0.1)})
    ctx.emit(_json_text(report), "json")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _ens_variance(ctx):
    from . import ensemble as E
    from .rng import named_rng

    a = ctx.args
    rows = E.variance_bound_check(a.n, a.R, a.samples, named_rng(a.seed, "variance"), factor=a.factor)
    report = {"R": a.R, "factor": a.factor,
              "rows": [{"n": r.n, "estimate": r.estimate, "se": r.se, "bound": r.bound,
                        "ratio": r.ratio, "passed": r.passed} for r in rows],
              "passed": all(r.passed for r in rows)}
    ctx.emit(_json_text(report), "json")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _ens_invariance(ctx):
    from . import ensemble as E
    from .model import build_derived

    a = ctx.args
    cfg = ctx.load()
    der = build_derived(cfg.spec, warn=False)
    rep = E.invariance_test(cfg.spec, der, a.T, a.dt, a.samples, a.seed, scheme=a.scheme,
                            zero_noise=a.zero_noise)
    report = {"T": a.T, "dt": a.dt, "samples": a.samples, "scheme": a.scheme,
              "zero_noise": a.zero_noise, **rep.to_dict()}
    ctx.emit(_json_text(report), "json")
    return EXIT_OK if rep.passed else EXIT_FAIL


_DISPATCH = {
    ("simulate", "micro"): _simulate_micro,
    ("simulate", "macro"): _simulate_macro,
    ("verify", "compression"): _verify_compression,
    ("verify", "ou"): _verify_ou,
    ("verify", "structure"): _verify_structure,
    ("compare-micro-macro", None): _compare,
    ("ensemble", "logz"): _ens_logz,
    ("ensemble", "equivalence"): _ens_equivalence,
    ("ensemble", "variance"): _ens_variance,
    ("ensemble", "invariance"): _ens_invariance,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    if args.threads is not None:
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    ctx = _Ctx(args, argv)
    handler = _DISPATCH[(args.command, getattr(args, "target", None))]
    try:
        return handler(ctx)
    except ConfigError as exc:
        print(f"heatbath: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HeatBathError, ValueError) as exc:
        print(f"heatbath: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
