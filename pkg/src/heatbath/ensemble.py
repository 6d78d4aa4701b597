"""Invariant measures and microcanonical statistics.

* ``mu_beta_Z`` on Z has density proportional to ``exp(-beta U(z))`` with the
  effective energy ``U(z) = H_A(z) - |C q|^2 / 2``; it is sampled by a
  vectorised random-walk Metropolis chain.
* ``nu_beta`` on Z x W is ``mu_beta_Z(dz) N(-C q, I/beta)(dw)``.
* The microcanonical shell is the sphere of radius ``sqrt(n R)`` in R^n.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConvergenceError, DivergenceError, DomainError, ShapeError
from .model import confinement_ok, coupling, hamiltonian_A, split_z

log = logging.getLogger(__name__)

RHAT_MAX = 1.05


@dataclass(frozen=True)
class MeasureSpec:
    """Which measure to sample and the Metropolis controls.

    ``which`` is ``"mu_beta_Z"``, ``"nu_beta"`` or ``"sphere"``; the sphere
    uses ``n`` and ``R`` instead of ``spec``.
    """

    which: str
    spec: object = None
    n: int | None = None
    R: float = 1.0
    step: float = 1.6
    burn_in: int = 10_000
    thin: int = 10
    chains: int = 100
    min_per_chain: int = 100

    def __post_init__(self):
        if self.which not in ("mu_beta_Z", "nu_beta", "sphere"):
            raise ValueError(f"unknown measure {self.which!r}")
        if self.which != "sphere" and self.spec is None:
            raise ValueError("a SystemSpec is required")
        if self.which == "sphere" and (self.n is None or self.n < 1 or not self.R > 0):
            raise ValueError("the sphere needs n >= 1 and R > 0")


def effective_energy(spec, z):
    q, _ = split_z(spec, z)
    cq = coupling(spec, q)
    return hamiltonian_A(spec, z) - 0.5 * np.sum(cq * cq, axis=-1)


def split_rhat(draws):
    """Split-R-hat per coordinate for ``draws`` of shape ``(chains, samples, dim)``."""
    draws = np.asarray(draws, dtype=float)
    c, s, _ = draws.shape
    half = s // 2
    if half < 2:
        raise ShapeError("split-R-hat needs at least four draws per chain")
    x = np.concatenate([draws[:, :half], draws[:, half : 2 * half]], axis=0)
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean(axis=0)
    B = half * means.var(axis=0, ddof=1)
    var_plus = (half - 1) / half * W + B / half
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(var_plus / W)


@dataclass(frozen=True)
class ChainResult:
    samples: np.ndarray
    acceptance: float
    rhat: np.ndarray


def _metropolis(mspec: MeasureSpec, count, rng, escape_window=10_000):
    spec = mspec.spec
    beta = spec.beta
    dim = 2 * spec.n
    chains = max(1, min(mspec.chains, count // mspec.min_per_chain))
    per_chain = -(-count // chains)
    scale = mspec.step / math.sqrt(beta)
    x = rng.standard_normal((chains, dim)) / math.sqrt(beta)
    U = effective_energy(spec, x)
    n_total = mspec.burn_in + per_chain * mspec.thin
    kept = np.empty((chains, per_chain, dim))
    accepted = 0
    checkpoints = []
    for it in range(n_total):
        prop = x + scale * rng.standard_normal(x.shape)
        Up = effective_energy(spec, prop)
        ok = np.log(rng.random(chains)) < -beta * (Up - U)
        x = np.where(ok[:, None], prop, x)
        U = np.where(ok, Up, U)
        accepted += int(ok.sum())
        if not np.all(np.isfinite(U)):
            raise DivergenceError("effective energy became non-finite: the target is not integrable")
        if it % 1000 == 999:
            checkpoints.append(float(np.median(U)))
            recent = checkpoints[-(escape_window // 1000) :]
            if len(recent) == escape_window // 1000 and all(
                b < a for a, b in zip(recent, recent[1:])
            ) and recent[-1] < recent[0] - 10.0 * dim / beta:
                raise DivergenceError(
                    "chains escape with monotonically falling energy: the target is not integrable"
                )
        j = it - mspec.burn_in
        if j >= 0 and j % mspec.thin == mspec.thin - 1:
            kept[:, j // mspec.thin] = x
    acc = accepted / (n_total * chains)
    rhat = split_rhat(kept)
    log.info("metropolis: %d chains, acceptance %.3f, max split-R-hat %.4f", chains, acc, rhat.max())
    flat = kept.transpose(1, 0, 2).reshape(-1, dim)[:count]
    return ChainResult(flat, acc, rhat)


def sample_mu_beta_Z(mspec: MeasureSpec, count, rng, return_diagnostics=False):
    """Random-walk Metropolis samples of ``mu_beta_Z``, shape ``(count, 2n)``.

    Raises :class:`ConvergenceError` when the split-R-hat of any coordinate is
    not below 1.05 and :class:`DivergenceError` when the chains run away.
    """
    if not confinement_ok(mspec.spec):
        log.warning("V(q) - |Cq|^2/2 is not confining; expect a DivergenceError")
    res = _metropolis(mspec, count, rng)
    if not np.all(res.rhat < RHAT_MAX):
        raise ConvergenceError(f"split-R-hat {np.nanmax(res.rhat):.4f} >= {RHAT_MAX}")
    return res if return_diagnostics else res.samples


def sample_nu_beta(mspec: MeasureSpec, count, rng):
    """Pairs ``(z, w)`` with ``w = -C q + xi / sqrt(beta)``."""
    spec = mspec.spec
    z = sample_mu_beta_Z(mspec, count, rng)
    q, _ = split_z(spec, z)
    w = -coupling(spec, q) + rng.standard_normal((count, spec.d)) / math.sqrt(spec.beta)
    return z, w


# -- microcanonical shell ---------------------------------------------------


def _check_radius(n, beta, e):
    if n < 1 or not beta > 0:
        raise DomainError("need n >= 1 and beta > 0")
    if not n / beta + 2 * e > 0:
        raise DomainError(f"squared radius n/beta + 2e = {n / beta + 2 * e:g} is not positive")


def log_sphere_area(n, r2):
    """``log(n omega_n r^(n-1))`` for ``r2 = r^2``; ``omega_n`` is the unit-ball volume."""
    log_omega = 0.5 * n * math.log(math.pi) - math.lgamma(0.5 * n + 1)
    return math.log(n) + log_omega + 0.5 * (n - 1) * math.log(r2)


def microcanonical_logZ(n, beta, e):
    """``log(n omega_n) + (n - 2)/2 log(n/beta + 2e)``."""
    _check_radius(n, beta, e)
    log_omega = 0.5 * n * math.log(math.pi) - math.lgamma(0.5 * n + 1)
    return math.log(n) + log_omega + 0.5 * (n - 2) * math.log(n / beta + 2 * e)


def microcanonical_C(beta, n):
    """Normalisation ``log(n omega_n) + (n - 2)/2 log(n/beta)``."""
    return microcanonical_logZ(n, beta, 0.0)


def normalized_gap(n, beta, e):
    """``log Z - C(beta, n) - beta e``, evaluated without cancellation."""
    _check_radius(n, beta, e)
    return 0.5 * (n - 2) * math.log1p(2 * beta * e / n) - beta * e


def gap_limit(beta, e):
    """Limit of ``n * normalized_gap(n, beta, e)``."""
    return -(2 * beta * e + (beta * e) ** 2)


@dataclass(frozen=True)
class SphereStats:
    n: int
    R: float
    count: int
    mean: np.ndarray
    mean_se: np.ndarray
    cov: np.ndarray
    cov_se: np.ndarray
    excess_kurtosis: np.ndarray
    kurtosis_se: float

    def to_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def sphere_points(n, R, count, rng):
    """Uniform points on the sphere of radius ``sqrt(n R)`` in R^n, shape ``(count, n)``."""
    g = rng.standard_normal((count, n))
    g *= math.sqrt(n * R) / np.linalg.norm(g, axis=1, keepdims=True)
    return g


def sphere_sample(n, R, count, rng, k=3, chunk=None):
    """Moments of the first ``k`` coordinates of uniform sphere points."""
    if not 1 <= k <= n:
        raise ShapeError("need 1 <= k <= n")
    chunk = chunk or max(1, min(count, 2_000_000 // n))
    parts = []
    done = 0
    while done < count:
        m = min(chunk, count - done)
        parts.append(sphere_points(n, R, m, rng)[:, :k])
        done += m
    x = np.concatenate(parts)
    M = x.shape[0]
    mean = x.mean(axis=0)
    prod = x[:, :, None] * x[:, None, :]
    cov = prod.mean(axis=0)
    m2 = np.mean(x * x, axis=0)
    m4 = np.mean(x**4, axis=0)
    return SphereStats(
        n=n,
        R=R,
        count=M,
        mean=mean,
        mean_se=x.std(axis=0, ddof=1) / math.sqrt(M),
        cov=cov,
        cov_se=prod.std(axis=0, ddof=1) / math.sqrt(M),
        excess_kurtosis=m4 / m2**2 - 3.0,
        kurtosis_se=math.sqrt(24.0 / M),
    )


@dataclass(frozen=True)
class VarianceBoundRow:
    n: int
    estimate: float
    se: float
    bound: float

    @property
    def ratio(self):
        return self.estimate / self.bound if self.bound > 0 else 0.0

    @property
    def passed(self):
        return self.estimate <= self.bound


def variance_bound_check(n_list, R, count, rng, weights=None, factor=1.5):
    """Estimate ``E sum_i lambda_i y_i^2`` on each sphere against ``factor * R * sum lambda_i``.

    ``weights(n)`` returns the first ``n`` weights; the default is ``1/i^2``.
    The sum in the bound runs over the same ``n`` weights.
    """
    if weights is None:
        weights = lambda n: 1.0 / np.arange(1, n + 1) ** 2  # noqa: E731
    rows = []
    for n in n_list:
        lam = np.asarray(weights(n), dtype=float)
        vals = []
        done = 0
        chunk = max(1, min(count, 2_000_000 // n))
        while done < count:
            m = min(chunk, count - done)
            y = sphere_points(n, R, m, rng)
            vals.append((y * y) @ lam)
            done += m
        v = np.concatenate(vals)
        rows.append(
            VarianceBoundRow(int(n), float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))),
                             float(factor * R * lam.sum()))
        )
    return rows


# -- invariance of nu_beta under the SDE -------------------------------------


@dataclass(frozen=True)
class InvarianceReport:
    names: list
    before: np.ndarray
    after: np.ndarray
    se: np.ndarray
    tol: np.ndarray

    @property
    def deltas(self):
        return self.after - self.before

    @property
    def passed(self):
        return bool(np.all(np.abs(self.deltas) <= self.tol))

    @property
    def worst(self):
        """Largest ``|delta| / tol``."""
        return float(np.max(np.abs(self.deltas) / self.tol))

    def to_dict(self):
        return {
            "passed": self.passed,
            "worst_ratio": self.worst,
            "moments": [
                {"name": n, "before": b, "after": a, "se": s, "tol": t}
                for n, b, a, s, t in zip(self.names, self.before, self.after, self.se, self.tol)
            ],
        }


def moment_features(z, w):
    """First and second moments of ``x = (z, w)`` as per-sample features."""
    x = np.concatenate([z, w], axis=1)
    labels = [f"z{i}" for i in range(z.shape[1])] + [f"w{j}" for j in range(w.shape[1])]
    iu = np.triu_indices(x.shape[1])
    feats = np.concatenate([x, x[:, iu[0]] * x[:, iu[1]]], axis=1)
    names = labels + [f"{labels[i]}*{labels[j]}" for i, j in zip(*iu)]
    return names, feats


def invariance_test(spec, derived, T, dt, count, seed, scheme="milstein", mspec=None,
                    zero_noise=False, n_se=4.0, bias=5.0):
    """Start ``count`` paths from ``nu_beta``, run the SDE to ``T`` and compare moments.

    A moment passes when ``|after - before| <= n_se * SE + bias * dt`` with
    the SE of the per-path differences. ``zero_noise`` keeps ``D`` but drops
    ``Sigma``, which must make the test fail.
    """
    from .macrodyn import IntegratorConfig, MacroState, final_sde
    from .rng import named_rng

    mspec = mspec or MeasureSpec("nu_beta", spec)
    z0, w0 = sample_nu_beta(mspec, count, named_rng(seed, "nu_beta"))
    if zero_noise:
        derived = replace(derived, Sigma=np.zeros_like(derived.Sigma))
    cfg = IntegratorConfig(dt=dt, scheme=scheme, seed=seed)
    final = final_sde(spec, derived, MacroState(0.0, z0, w0, np.zeros(count)), cfg, T, count)
    names, f0 = moment_features(z0, w0)
    _, f1 = moment_features(final.z, final.w)
    se = (f1 - f0).std(axis=0, ddof=1) / math.sqrt(count)
    return InvarianceReport(names, f0.mean(axis=0), f1.mean(axis=0), se, n_se * se + bias * dt)
