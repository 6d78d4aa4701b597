"""Exact simulation of the W-valued Ornstein-Uhlenbeck process ``dY = -DY dt + Sigma dB``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, lapack, solve_continuous_lyapunov

from .errors import FactorizationError, ShapeError
from .model import sym_sqrt
from .rng import PathStreams

INDEFINITE_TOL = 1e-10


def _factor(Q):
    """``L`` with ``L L^T = Q`` for a PSD ``Q``.

    Plain Cholesky first; semidefinite matrices go through LAPACK's pivoted
    Cholesky (``?pstrf``).
    """
    Q = 0.5 * (Q + Q.T)
    lam_min = np.linalg.eigvalsh(Q).min() if Q.size else 0.0
    if lam_min < -INDEFINITE_TOL:
        raise FactorizationError(f"step covariance is indefinite (eigenvalue {lam_min:.3e})")
    try:
        return np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        pass
    c, piv, rank, info = lapack.dpstrf(Q, lower=1, tol=-1.0)
    if info < 0:  # pragma: no cover
        raise FactorizationError(f"dpstrf failed with info={info}")
    L = np.tril(c)
    L[:, rank:] = 0.0
    P = np.eye(Q.shape[0])[:, piv - 1]
    return P @ L


@dataclass(frozen=True)
class OUParams:
    D: np.ndarray
    beta: float
    Sigma: np.ndarray
    dt: float
    E: np.ndarray
    Q: np.ndarray
    L: np.ndarray

    @property
    def d(self):
        return self.D.shape[0]


def make_params(D, beta, dt, Sigma=None):
    """Precompute the one-step transition ``y' = E y + L xi``.

    With the thermal noise ``Sigma Sigma^T = (D + D^T)/beta`` the step
    covariance has the closed form ``(I - E E^T)/beta``. Any other ``Sigma``
    (for instance zero) goes through the stationary Lyapunov equation.
    """
    D = np.asarray(D, dtype=float)
    d = D.shape[0]
    E = expm(-dt * D)
    if Sigma is None:
        Sigma = sym_sqrt((D + D.T) / beta)
        Q = (np.eye(d) - E @ E.T) / beta
    else:
        Sigma = np.asarray(Sigma, dtype=float)
        P = solve_continuous_lyapunov(D, Sigma @ Sigma.T)
        Q = P - E @ P @ E.T
    Q = 0.5 * (Q + Q.T)
    return OUParams(D=D, beta=float(beta), Sigma=Sigma, dt=float(dt), E=E, Q=Q, L=_factor(Q))


def exact_step(params: OUParams, y, rng=None, xi=None):
    """Exact Gaussian transition over ``params.dt``; ``y`` may be batched ``(..., d)``."""
    y = np.asarray(y, dtype=float)
    if xi is None:
        xi = rng.standard_normal(y.shape)
    return y @ params.E.T + xi @ params.L.T


def sample_stationary(params: OUParams, rng, size=None):
    shape = (params.d,) if size is None else (size, params.d)
    return rng.standard_normal(shape) / np.sqrt(params.beta)


def covariance(D, beta, s, t):
    """``E[Y_t (x) Y_s]`` of the stationary process."""
    D = np.asarray(D, dtype=float)
    if t >= s:
        return expm(-(t - s) * D) / beta
    return expm(-(s - t) * D.T) / beta


@dataclass(frozen=True)
class OUPath:
    times: np.ndarray
    values: np.ndarray
    seed: int

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ShapeError("times and values differ in length")


def simulate_paths(params: OUParams, n_steps, count, seed, y0=None, start=0):
    """Stationary (or ``y0``-started) paths on the grid ``k dt``.

    Path ``i`` uses the stream ``(seed, start + i)``: its stationary start and
    its increments are drawn from that stream only.
    """
    streams = PathStreams(seed, count, start)
    d = params.d
    noise = streams.normals(n_steps + 1, d)  # (steps+1, count, d)
    vals = np.empty((n_steps + 1, count, d))
    if y0 is None:
        vals[0] = noise[0] / np.sqrt(params.beta)
    else:
        vals[0] = np.broadcast_to(np.asarray(y0, dtype=float), (count, d))
    for k in range(n_steps):
        vals[k + 1] = exact_step(params, vals[k], xi=noise[k + 1])
    times = params.dt * np.arange(n_steps + 1)
    return [OUPath(times, vals[:, i, :].copy(), seed) for i in range(count)]


def _stack(paths):
    if isinstance(paths, np.ndarray):
        if paths.ndim != 3:
            raise ShapeError("expected an array of shape (paths, times, d)")
        return paths
    if not paths:
        raise ShapeError("no paths given")
    t0 = paths[0].times
    for p in paths:
        if p.times.shape != t0.shape or not np.array_equal(p.times, t0):
            raise ShapeError("paths do not share a time grid")
    return np.stack([p.values for p in paths])


@dataclass(frozen=True)
class CovarianceEstimate:
    mean: np.ndarray
    se: np.ndarray
    count: int


def estimate_covariance(paths, lag_index, base_index=0):
    """Empirical ``E[Y_t (x) Y_s]`` with ``s = times[base]``, ``t = times[base + lag]``.

    Standard errors are per-entry sample standard deviations of the products
    over ``sqrt(M)``; paths are assumed independent.
    """
    V = _stack(paths)
    if not 0 <= base_index + lag_index < V.shape[1]:
        raise ShapeError("lag index outside the time grid")
    yt = V[:, base_index + lag_index, :]
    ys = V[:, base_index, :]
    prod = yt[:, :, None] * ys[:, None, :]
    M = prod.shape[0]
    se = prod.std(axis=0, ddof=1) / np.sqrt(M) if M > 1 else np.zeros(prod.shape[1:])
    return CovarianceEstimate(prod.mean(axis=0), se, M)


def lag_products(yt, ys):
    """Covariance estimate from paired samples ``(M, d)`` at two times."""
    prod = yt[:, :, None] * ys[:, None, :]
    M = prod.shape[0]
    return CovarianceEstimate(prod.mean(axis=0), prod.std(axis=0, ddof=1) / np.sqrt(M), M)


def asymmetry(yt, ys):
    """Largest ``|C_ij - C_ji|`` of the lag covariance in standard-error units.

    The standard error comes from the per-path differences
    ``yt_i ys_j - yt_j ys_i`` so the correlation of the two entries is kept.
    """
    diff = yt[:, :, None] * ys[:, None, :] - yt[:, None, :] * ys[:, :, None]
    M = diff.shape[0]
    mean = diff.mean(axis=0)
    se = diff.std(axis=0, ddof=1) / np.sqrt(M)
    iu = np.triu_indices(diff.shape[1], 1)
    return float(np.max(np.abs(mean[iu]) / se[iu]))
