"""Coarse-grained dynamics of ``(z, w, e)``.

Deterministic::

    z' = J_A (grad H_A + C^T w)
    w' = -D (w + C q)
    e' = <D (w + C q), w + C q>

Stochastic (Ito)::

    dw = -D (w + C q) dt + Sigma dB
    de = [<D v, v> - tr(D)/beta] dt - <v, Sigma dB>,   v = w + C q

All state arrays may carry a leading ensemble axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import coupling, grad_hamiltonian_zw, hamiltonian_zw, poisson_apply, split_z
from .rng import PathStreams
from .trajectory import Trajectory

SDE_SCHEMES = ("euler-maruyama", "milstein", "semi-implicit-w")


@dataclass(frozen=True)
class MacroState:
    t: float
    z: np.ndarray
    w: np.ndarray
    e: np.ndarray | float = 0.0


@dataclass(frozen=True)
class IntegratorConfig:
    """``scheme`` is ``rk4`` for the ODE or one of :data:`SDE_SCHEMES`.

    ``milstein`` is Euler-Maruyama plus the second-order Ito term of the
    energy variable, ``-(|Sigma dB|^2 - tr(Sigma Sigma^T) dt)/2``. The noise
    in ``z`` and ``w`` is additive, so this is the full Milstein scheme and
    keeps the GENERIC energy to first order pathwise.
    """

    dt: float
    scheme: str = "rk4"
    seed: int = 0
    stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("rk4",) + SDE_SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")


def drift_det(spec, derived, z, w):
    """Right-hand side ``(dz, dw, de)`` of the deterministic system."""
    q, _ = split_z(spec, z)
    v = np.asarray(w, dtype=float) + coupling(spec, q)
    gz, _ = grad_hamiltonian_zw(spec, z, w)
    dz = poisson_apply(spec, z, gz)
    dw = -v @ spec.D.T
    de = np.sum((v @ derived.D_sym.T) * v, axis=-1)
    return dz, dw, de


def energy_gen(spec, z, w, e):
    return hamiltonian_zw(spec, z, w) + e


def step_ode(state: MacroState, spec, derived, config: IntegratorConfig) -> MacroState:
    dt = config.dt
    z, w, e = state.z, state.w, state.e
    k1 = drift_det(spec, derived, z, w)
    k2 = drift_det(spec, derived, z + 0.5 * dt * k1[0], w + 0.5 * dt * k1[1])
    k3 = drift_det(spec, derived, z + 0.5 * dt * k2[0], w + 0.5 * dt * k2[1])
    k4 = drift_det(spec, derived, z + dt * k3[0], w + dt * k3[1])
    upd = [dt / 6 * (a + 2 * b + 2 * c + d) for a, b, c, d in zip(k1, k2, k3, k4)]
    return MacroState(state.t + dt, z + upd[0], w + upd[1], e + upd[2])


def step_sde(state: MacroState, spec, derived, config: IntegratorConfig, rng=None, dB=None):
    """One Ito step. ``dB`` (same shape as ``w``) overrides drawing from ``rng``.

    The same increment enters ``w`` and ``e``; drifts are evaluated at the
    pre-step state.
    """
    dt = config.dt
    z, w, e = state.z, np.asarray(state.w, dtype=float), state.e
    if dB is None:
        dB = rng.standard_normal(w.shape) * np.sqrt(dt)
    Sigma = derived.Sigma
    q, _ = split_z(spec, z)
    cq = coupling(spec, q)
    v = w + cq
    dz, dw, de = drift_det(spec, derived, z, w)
    noise = dB @ Sigma.T
    de_total = (de - np.trace(spec.D) / spec.beta) * dt - np.sum(v * noise, axis=-1)
    if config.scheme == "milstein":
        qv = np.trace(Sigma @ Sigma.T) * dt
        de_total = de_total - 0.5 * (np.sum(noise * noise, axis=-1) - qv)
    if config.scheme == "semi-implicit-w":
        A = np.eye(spec.d) + dt * spec.D
        rhs = w - dt * cq @ spec.D.T + noise
        w_new = np.linalg.solve(A, rhs.T).T if rhs.ndim > 1 else np.linalg.solve(A, rhs)
    else:
        w_new = w + dw * dt + noise
    return MacroState(state.t + dt, z + dz * dt, w_new, e + de_total)


def _record(spec, derived, states):
    t = np.array([s.t for s in states])
    z = np.array([s.z for s in states])
    w = np.array([s.w for s in states])
    e = np.array([np.asarray(s.e, dtype=float) for s in states])
    E = energy_gen(spec, z, w, e)
    return Trajectory(t, z, w, {"e": e, "E_gen": E, "S_gen": spec.beta * e})


def run_ode(spec, derived, init: MacroState, config: IntegratorConfig, T):
    n_steps = int(round(T / config.dt))
    state = init
    rec = [state]
    for k in range(1, n_steps + 1):
        state = step_ode(state, spec, derived, config)
        if k % config.stride == 0 or k == n_steps:
            rec.append(state)
    return _record(spec, derived, rec)


def run_sde(spec, derived, init: MacroState, config: IntegratorConfig, T, count=None,
            start=0, block=256):
    """Euler-type integration of the SDE.

    With ``count`` given, ``init`` is broadcast (or must already be batched)
    to ``count`` paths; path ``i`` takes its increments from the stream
    ``(config.seed, start + i)``. Without ``count`` a single path uses
    stream ``(config.seed, start)``. Recorded arrays have the time axis first.
    """
    single = count is None
    M = 1 if single else count
    z = np.broadcast_to(np.asarray(init.z, dtype=float), (M, 2 * spec.n)).copy()
    w = np.broadcast_to(np.asarray(init.w, dtype=float), (M, spec.d)).copy()
    e = np.broadcast_to(np.asarray(init.e, dtype=float), (M,)).copy()
    state = MacroState(init.t, z, w, e)
    n_steps = int(round(T / config.dt))
    streams = PathStreams(config.seed, M, start)
    sq = np.sqrt(config.dt)
    rec = [state]
    k = 0
    while k < n_steps:
        nb = min(block, n_steps - k)
        xi = streams.normals(nb, spec.d)
        for b in range(nb):
            state = step_sde(state, spec, derived, config, dB=xi[b] * sq)
            k += 1
            if k % config.stride == 0 or k == n_steps:
                rec.append(state)
    traj = _record(spec, derived, rec)
    if single:
        traj.z, traj.w = traj.z[:, 0], traj.w[:, 0]
        traj.columns = {key: val[:, 0] for key, val in traj.columns.items()}
    return traj


def final_sde(spec, derived, init: MacroState, config: IntegratorConfig, T, count, start=0, block=256):
    """Like :func:`run_sde` but keeps only the terminal ensemble state."""
    M = count
    z = np.broadcast_to(np.asarray(init.z, dtype=float), (M, 2 * spec.n)).copy()
    w = np.broadcast_to(np.asarray(init.w, dtype=float), (M, spec.d)).copy()
    e = np.broadcast_to(np.asarray(init.e, dtype=float), (M,)).copy()
    state = MacroState(init.t, z, w, e)
    n_steps = int(round(T / config.dt))
    streams = PathStreams(config.seed, M, start)
    sq = np.sqrt(config.dt)
    k = 0
    while k < n_steps:
        nb = min(block, n_steps - k)
        xi = streams.normals(nb, spec.d)
        for b in range(nb):
            state = step_sde(state, spec, derived, config, dB=xi[b] * sq)
        k += nb
    return state
