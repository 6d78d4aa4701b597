"""TOML system configuration.

Schema (all top-level keys)::

    n = 1                      # positions
    d = 3                      # bath dimension
    beta = 1.0
    D = [..]                   # d*d numbers, row-major (optional for the running example)
    C = [..]                   # d*n numbers, row-major
    potential = "quadratic"    # or "quartic"
    stiffness = 1.0            # k in V = k/2 |q|^2 + g/4 sum q_i^4
    quartic = 0.0              # g

    [bath]
    mode = "running-example"   # or "general"
    theta1 = 1.0               # running example only
    theta2 = 0.5
    varsigma = 2.0
    tail_tol = 1e-13           # truncation: exp(-2 alpha Y_max) <= tail_tol
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .dilation import DilationBasis
from .errors import ConfigError
from .model import Potential, SystemSpec, running_example_D

_TOP_KEYS = {"n", "d", "beta", "D", "C", "potential", "stiffness", "quartic", "bath"}
_BATH_KEYS = {"mode", "theta1", "theta2", "varsigma", "tail_tol"}


@dataclass(frozen=True)
class LoadedConfig:
    path: str
    spec: SystemSpec
    basis: DilationBasis
    raw: dict


def default_config_path() -> Path:
    return Path(str(resources.files("heatbath") / "data" / "default.cfg"))


def _line_of(text, key):
    m = re.search(rf"^\s*{re.escape(key)}\s*=", text, flags=re.M)
    if m is None:
        return None, None
    line = text.count("\n", 0, m.start()) + 1
    col = m.start() - (text.rfind("\n", 0, m.start()) + 1) + 1
    return line, col


def parse_config(text: str, path: str = "<string>") -> LoadedConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        msg = re.sub(r"\s*\(at line \d+, column \d+\)", "", str(exc))
        raise ConfigError(f"{path}: {msg}", line, col) from None

    def fail(msg, key):
        raise ConfigError(f"{path}: {msg}", *_line_of(text, key))

    for key in raw:
        if key not in _TOP_KEYS:
            fail(f"unknown key {key!r}", key)
    bath = raw.get("bath", {})
    if not isinstance(bath, dict):
        fail("'bath' must be a table", "bath")
    for key in bath:
        if key not in _BATH_KEYS:
            fail(f"unknown bath key {key!r}", key)

    for key in ("n", "d", "C"):
        if key not in raw:
            raise ConfigError(f"{path}: missing required key {key!r}")
    n, d = raw["n"], raw["d"]
    if not isinstance(n, int) or n < 1:
        fail("n must be a positive integer", "n")
    if not isinstance(d, int) or d < 1:
        fail("d must be a positive integer", "d")
    beta = float(raw.get("beta", 1.0))
    if beta <= 0:
        fail("beta must be positive", "beta")

    mode = bath.get("mode", "general")
    tail_tol = float(bath.get("tail_tol", 1e-13))
    if mode == "running-example":
        if d != 3:
            fail("the running-example bath has d = 3", "d")
        thetas = tuple(float(bath.get(k, v)) for k, v in (("theta1", 1.0), ("theta2", 0.5), ("varsigma", 2.0)))
        D_expected = running_example_D(*thetas)
        if "D" in raw:
            D = _matrix(raw["D"], d, d, "D", fail)
            if not np.allclose(D, D_expected, atol=1e-14):
                fail("D disagrees with the running-example parameters", "D")
        D = D_expected
    elif mode == "general":
        if "D" not in raw:
            raise ConfigError(f"{path}: missing required key 'D'")
        D = _matrix(raw["D"], d, d, "D", fail)
        thetas = None
    else:
        fail(f"unknown bath mode {mode!r}", "mode")

    C = _matrix(raw["C"], d, n, "C", fail)
    try:
        pot = Potential(raw.get("potential", "quadratic"), float(raw.get("stiffness", 1.0)),
                        float(raw.get("quartic", 0.0)))
    except ConfigError as exc:
        fail(str(exc), "potential")
    spec = SystemSpec(n=n, d=d, D=D, C_mat=C, beta=beta, potential=pot)
    if mode == "running-example":
        basis = DilationBasis.running_example(*thetas, tail_tol=tail_tol)
    else:
        basis = DilationBasis.general(D, tail_tol=tail_tol)
    return LoadedConfig(path=str(path), spec=spec, basis=basis, raw=raw)


def _matrix(values, rows, cols, key, fail):
    try:
        a = np.asarray(values, dtype=float)
    except (TypeError, ValueError):
        fail(f"{key} must be a list of numbers", key)
    if a.size != rows * cols:
        fail(f"{key} needs {rows * cols} entries (row-major {rows}x{cols}), got {a.size}", key)
    return a.reshape(rows, cols)


def load_config(path=None) -> LoadedConfig:
    p = Path(path) if path is not None else default_config_path()
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p))


def describe(spec: SystemSpec) -> dict:
    """JSON-friendly echo of a system definition."""
    return {
        "n": spec.n,
        "d": spec.d,
        "beta": spec.beta,
        "D": spec.D.tolist(),
        "C": spec.C_mat.tolist(),
        "potential": spec.potential.name,
        "stiffness": spec.potential.stiffness,
        "quartic": spec.potential.quartic,
    }
