"""Microscopic simulator: oscillator + transport bath on a grid.

The bath is carried in the shifted variable ``zeta = eta + C q``, which obeys
``zeta' = J_B zeta + C z'``. Over one step of length ``dt = h`` the transport
group is an exact translation by one cell, so the grid is stored in the
co-moving frame: shifting only advances ``left`` by ``h`` and no value is ever
interpolated. All discretisation error sits in the coupling step and in the
grid quadrature of the projections.

The source ``int_0^h S_{h-s} C z'(s) ds`` of one step is deposited with the
trapezoid rule in ``s``: half of ``C dq`` before the one-cell shift and half
after it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .dilation import GridField, window_cells, window_samples
from .errors import GridCoverageError, ShapeError
from .model import (
    coupling,
    grad_hamiltonian_zw,
    hamiltonian_A,
    hamiltonian_zw,
    poisson_apply,
    split_z,
)
from .rng import path_rng
from .trajectory import Trajectory


@dataclass(frozen=True)
class MicroConfig:
    h: float
    T: float
    thermal: bool = False
    seed: int = 0
    stride: int = 1

    @property
    def dt(self):
        return self.h

    @property
    def n_steps(self):
        return int(round(self.T / self.h))


@dataclass(frozen=True)
class MicroState:
    t: float
    z: np.ndarray
    zeta: GridField


@dataclass(frozen=True)
class _Window:
    F: np.ndarray  # (m, d, d) basis samples on [-m h, 0]
    gram_inv: np.ndarray  # inverse of the discrete Gram matrix h F^T F

    @property
    def m(self):
        return self.F.shape[0]


_WINDOWS: dict = {}


def _window(basis, h):
    key = (id(basis), h)
    win = _WINDOWS.get(key)
    if win is None or win[0] is not basis:
        F = np.ascontiguousarray(window_samples(basis, h))
        m, d, _ = F.shape
        Ff = F.reshape(m * d, -1)
        G = h * Ff.T @ Ff
        win = (basis, _Window(F, np.linalg.inv(G)))
        _WINDOWS[key] = win
    return win[1]


def _storage(basis, config):
    """Window size, left padding and total cell count.

    The left padding lets the window slide for ``T / h`` steps; one spare cell
    right of 0 receives the pre-shift half deposit that leaves the window.
    """
    m = window_cells(basis, config.h)
    pad = config.n_steps + 1
    return m, pad, pad + m + 1


def _window_start(field, m):
    stop = int(math.floor(-field.left / field.h + 0.5))
    start = stop - m
    if start < 0 or stop >= field.values.shape[0]:
        raise GridCoverageError(
            f"bath grid [{field.left:g}, {field.right:g}] no longer covers the observation window"
        )
    return start


def init_deterministic(spec, basis, z0, w0, config: MicroConfig):
    """Bath starts in W: ``eta_0 = sum_j w0_j f_j``, so ``zeta_0 = sum_j (w0 + C q0)_j f_j``."""
    z0 = np.asarray(z0, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    if z0.shape != (2 * spec.n,) or w0.shape != (spec.d,):
        raise ShapeError("z0 or w0 has the wrong shape")
    if basis.d != spec.d:
        raise ShapeError("basis and system disagree on d")
    m, pad, N = _storage(basis, config)
    win = _window(basis, config.h)
    vals = np.zeros((N, spec.d))
    q0, _ = split_z(spec, z0)
    vals[pad : pad + m] = win.F @ (w0 + coupling(spec, q0))
    return MicroState(0.0, z0.copy(), GridField(-(pad + m) * config.h, config.h, vals))


def init_thermal(spec, basis, z0, w0, config: MicroConfig, rng=None):
    """Deterministic start plus a thermal field orthogonal to W.

    Raw cell values are i.i.d. ``N(0, 1/(beta h))``, so grid inner products
    ``<g, raw>`` have variance ``|g|^2 / beta``. The discrete projection onto
    ``span{f_j}`` is then removed from the whole window.
    """
    if rng is None:
        rng = path_rng(config.seed, 0)
    state = init_deterministic(spec, basis, z0, w0, config)
    m, pad, N = _storage(basis, config)
    raw = rng.standard_normal((N, spec.d)) / math.sqrt(spec.beta * config.h)
    _remove_projection(raw, pad, basis, config.h)
    vals = state.zeta.values + raw
    return replace(state, zeta=replace(state.zeta, values=vals))


def _remove_projection(raw, start, basis, h):
    win = _window(basis, h)
    m, d, k = win.F.shape
    Ff = win.F.reshape(m * d, k)
    seg = raw[start : start + m].reshape(m * d)
    coeff = win.gram_inv @ (h * (seg @ Ff))
    seg -= Ff @ coeff


def _rhs(spec, z, w):
    gz, _ = grad_hamiltonian_zw(spec, z, w)
    return poisson_apply(spec, z, gz)


def _heun(spec, z, w, dt):
    k1 = _rhs(spec, z, w)
    k2 = _rhs(spec, z + dt * k1, w)
    return z + 0.5 * dt * (k1 + k2)


def observe(state, spec, basis):
    """``w = P zeta - C q``."""
    win = _window(basis, state.zeta.h)
    start = _window_start(state.zeta, win.m)
    zero = np.zeros(win.F.shape[2])
    Pz = kernels.deposit_project(state.zeta.values, start, win.F, zero, zero, state.zeta.h)
    q, _ = split_z(spec, state.z)
    return Pz - coupling(spec, q)


def step(state: MicroState, spec, basis):
    """One step of length ``h``; returns a new state and leaves ``state`` untouched."""
    h = state.zeta.h
    win = _window(basis, h)
    vals = state.zeta.values.copy()
    start = _window_start(state.zeta, win.m)
    zero = np.zeros(win.F.shape[2])
    q, _ = split_z(spec, state.z)
    w = kernels.deposit_project(vals, start, win.F, zero, zero, h) - coupling(spec, q)
    z_new = _heun(spec, state.z, w, h)
    field = GridField(state.zeta.left + h, h, vals)
    start = _window_start(field, win.m)
    half = np.ascontiguousarray(0.5 * coupling(spec, split_z(spec, z_new)[0] - q))
    kernels.deposit_project(vals, start, win.F, half, half, h)
    return MicroState(state.t + h, z_new, field)


def total_energy(state, spec, basis):
    """``H_A(z) + |eta|^2/2 + <C q, eta>`` on the grid with ``eta = zeta - C q``."""
    h = state.zeta.h
    win = _window(basis, h)
    start = _window_start(state.zeta, win.m)
    q, _ = split_z(spec, state.z)
    cq = coupling(spec, q)
    eta = state.zeta.values.copy()
    cq_field = win.F @ cq
    eta[start : start + win.m] -= cq_field
    return float(
        hamiltonian_A(spec, state.z)
        + 0.5 * h * np.sum(eta * eta)
        + h * np.sum(cq_field * eta[start : start + win.m])
    )


def run(spec, basis, init: MicroState, config: MicroConfig, n_steps=None):
    """Iterate :func:`step` (fused, in place on a private copy of the grid).

    Returns a :class:`Trajectory` with ``t, z, w`` and the column ``H_zw``,
    recorded every ``config.stride`` steps and at the final time.
    """
    h = config.h
    if abs(init.zeta.h - h) > 1e-15 * h:
        raise ShapeError("config.h differs from the grid spacing")
    n_steps = config.n_steps if n_steps is None else n_steps
    win = _window(basis, h)
    vals = init.zeta.values.copy()
    start = _window_start(init.zeta, win.m)
    if start - n_steps < 0:
        raise GridCoverageError(
            f"grid padding covers {start} steps, {n_steps} requested"
        )
    z = init.z.copy()
    c = np.zeros(spec.d)
    ts, zs, ws = [], [], []
    deposit = kernels.deposit_project
    F = win.F
    for k in range(n_steps + 1):
        q = z[: spec.n]
        w = deposit(vals, start, F, c, c, h) - coupling(spec, q)
        if k % config.stride == 0 or k == n_steps:
            ts.append(init.t + k * h)
            zs.append(z.copy())
            ws.append(w)
        if k == n_steps:
            break
        z_new = _heun(spec, z, w, h)
        c = np.ascontiguousarray(0.5 * coupling(spec, z_new[: spec.n] - q))
        z = z_new
        start -= 1
    zs, ws = np.array(zs), np.array(ws)
    return Trajectory(np.array(ts), zs, ws, {"H_zw": hamiltonian_zw(spec, zs, ws)})


def final_state(spec, basis, init: MicroState, config: MicroConfig, n_steps=None):
    """State after ``n_steps`` steps, built with the same fused loop as :func:`run`."""
    h = config.h
    n_steps = config.n_steps if n_steps is None else n_steps
    win = _window(basis, h)
    vals = init.zeta.values.copy()
    start = _window_start(init.zeta, win.m)
    if start - n_steps < 0:
        raise GridCoverageError(f"grid padding covers {start} steps, {n_steps} requested")
    z = init.z.copy()
    c = np.zeros(spec.d)
    for _ in range(n_steps):
        q = z[: spec.n]
        w = kernels.deposit_project(vals, start, win.F, c, c, h) - coupling(spec, q)
        z_new = _heun(spec, z, w, h)
        c = np.ascontiguousarray(0.5 * coupling(spec, z_new[: spec.n] - q))
        z = z_new
        start -= 1
    kernels.deposit_project(vals, start, win.F, c, c, h)
    return MicroState(init.t + n_steps * h, z, GridField(init.zeta.left + n_steps * h, h, vals))


def run_kernel(spec, z0, w0, Y_path, stride=1):
    """Integrate the closed memory-kernel form of the z-equation.

    The projected bath splits as ``w = u + m - C q + Y`` with the free decay
    ``u' = -D u``, ``u(0) = w0 + C q0``, the memory ``m' = -D m + C q'``,
    ``m(0) = 0``, and the noise ``Y`` given on the integration grid (zero for
    deterministic data). Classical RK4 with ``Y`` linearly interpolated at half
    steps.
    """
    times = np.asarray(Y_path.times, dtype=float)
    Y = np.asarray(Y_path.values, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != spec.d or len(times) < 2:
        raise ShapeError("Y_path must hold an (N, d) array on at least two times")
    dt = times[1] - times[0]
    if not np.allclose(np.diff(times), dt, rtol=1e-9, atol=0.0):
        raise ShapeError("Y_path must be on a uniform grid")
    n = spec.n
    D, C = spec.D, spec.C_mat
    z = np.asarray(z0, dtype=float).copy()
    u = np.asarray(w0, dtype=float) + C @ z[:n]
    mem = np.zeros(spec.d)

    def rhs(z, u, mem, y):
        w = u + mem - C @ z[:n] + y
        dz = _rhs(spec, z, w)
        return dz, -D @ u, -D @ mem + C @ dz[:n]

    ts, zs, ws = [], [], []
    N = len(times) - 1
    for k in range(N + 1):
        w = u + mem - C @ z[:n] + Y[k]
        if k % stride == 0 or k == N:
            ts.append(times[k])
            zs.append(z.copy())
            ws.append(w)
        if k == N:
            break
        ymid = 0.5 * (Y[k] + Y[k + 1])
        a = rhs(z, u, mem, Y[k])
        b = rhs(z + 0.5 * dt * a[0], u + 0.5 * dt * a[1], mem + 0.5 * dt * a[2], ymid)
        c = rhs(z + 0.5 * dt * b[0], u + 0.5 * dt * b[1], mem + 0.5 * dt * b[2], ymid)
        e = rhs(z + dt * c[0], u + dt * c[1], mem + dt * c[2], Y[k + 1])
        z = z + dt / 6 * (a[0] + 2 * b[0] + 2 * c[0] + e[0])
        u = u + dt / 6 * (a[1] + 2 * b[1] + 2 * c[1] + e[1])
        mem = mem + dt / 6 * (a[2] + 2 * b[2] + 2 * c[2] + e[2])
    zs, ws = np.array(zs), np.array(ws)
    return Trajectory(np.array(ts), zs, ws, {"H_zw": hamiltonian_zw(spec, zs, ws)})


def bath_projection_ensemble(basis, beta, h, lag, count, seed, start=0, block=64):
    """Projected thermal bath at times 0 and ``lag`` with the coupling switched off.

    With ``C = 0`` a microscopic step moves the bath by one cell and nothing
    else, so ``lag / h`` steps are exactly a shift of the window. Each path
    ``i`` draws ``w0`` from the stationary law ``N(0, I/beta)`` and then the
    raw grid noise of :func:`init_thermal`, both from the stream
    ``(seed, start + i)``. Paths are processed in blocks of ``block``.

    Returns ``(w_0, w_lag)``, two arrays of shape ``(count, d)``.
    """
    win = _window(basis, h)
    m, d, k = win.F.shape
    shift = int(round(lag / h))
    N = m + shift
    Ff = win.F.reshape(m * d, k)
    out0 = np.empty((count, k))
    out1 = np.empty((count, k))
    scale = 1.0 / math.sqrt(beta * h)
    raw = np.empty((block, N, d))
    w0 = np.empty((block, k))
    for b0 in range(0, count, block):
        nb = min(block, count - b0)
        for r in range(nb):
            g = path_rng(seed, start + b0 + r)
            w0[r] = g.standard_normal(k) / math.sqrt(beta)
            raw[r] = g.standard_normal((N, d))
        R = raw[:nb]
        R *= scale
        seg = R[:, shift:].reshape(nb, m * d)
        coeff = (h * (seg @ Ff)) @ win.gram_inv.T
        seg -= coeff @ Ff.T
        seg += w0[:nb] @ Ff.T
        out0[b0 : b0 + nb] = h * (seg @ Ff)
        out1[b0 : b0 + nb] = h * (R[:, :m].reshape(nb, m * d) @ Ff)
    return out0, out1
