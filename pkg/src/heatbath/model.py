"""System definition, derived bath operators and the shared Hamiltonians.

States are plain numpy arrays and every function here accepts a leading batch
axis: ``z`` has shape ``(..., 2n)``, ``w`` has shape ``(..., d)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import ConfigError, SpectralGapError

GAP_THRESHOLD = 1e-12


@dataclass(frozen=True)
class Potential:
    """Built-in potential ``V(q) = k/2 |q|^2 + g/4 sum_i q_i^4``.

    ``g`` must vanish for the quadratic well. The quartic term breaks the
    global Lipschitz bound on the gradient; it is offered for experiments and
    treated as locally Lipschitz only.
    """

    name: str = "quadratic"
    stiffness: float = 1.0
    quartic: float = 0.0

    def __post_init__(self):
        if self.name not in ("quadratic", "quartic"):
            raise ConfigError(f"unknown potential {self.name!r}")
        if self.name == "quadratic" and self.quartic != 0.0:
            raise ConfigError("quadratic potential cannot carry a quartic coefficient")

    def value(self, q):
        q = np.asarray(q, dtype=float)
        v = 0.5 * self.stiffness * np.sum(q * q, axis=-1)
        if self.quartic:
            v = v + 0.25 * self.quartic * np.sum(q**4, axis=-1)
        return v

    def grad(self, q):
        q = np.asarray(q, dtype=float)
        g = self.stiffness * q
        if self.quartic:
            g = g + self.quartic * q**3
        return g


def quadratic(stiffness=1.0):
    return Potential("quadratic", stiffness, 0.0)


def quartic(stiffness=1.0, g=1.0):
    return Potential("quartic", stiffness, g)


PoissonA = Union[str, Callable[[np.ndarray], np.ndarray]]


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemSpec:
    """Hamiltonian system A linearly coupled to a compressible heat bath.

    Parameters
    ----------
    n : int
        Number of positions; the state of system A is ``z = (q, p)``.
    d : int
        Dimension of the observable bath space W.
    D : (d, d) array
        Compression generator, ``P exp(t J_B)|_W = exp(-t D)`` for ``t >= 0``.
    C_mat : (d, n) array
        Coupling in the orthonormal bath coordinates, ``(C q)_j = c^j . q``.
    beta : float
        Inverse temperature.
    potential : Potential
    poisson_A : "canonical" or callable
        A callable must return the ``(2n, 2n)`` skew matrix ``J_A(z)`` for an
        unbatched ``z``.
    """

    n: int
    d: int
    D: np.ndarray
    C_mat: np.ndarray
    beta: float = 1.0
    potential: Potential = field(default_factory=quadratic)
    poisson_A: PoissonA = "canonical"

    def __post_init__(self):
        object.__setattr__(self, "D", _readonly(self.D))
        object.__setattr__(self, "C_mat", _readonly(np.reshape(self.C_mat, (self.d, self.n))))
        if self.n < 1 or self.d < 1:
            raise ConfigError("n and d must be positive")
        if self.D.shape != (self.d, self.d):
            raise ConfigError(f"D must be {self.d}x{self.d}, got {self.D.shape}")
        if not self.beta > 0:
            raise ConfigError("beta must be positive")
        if isinstance(self.poisson_A, str) and self.poisson_A != "canonical":
            raise ConfigError(f"unknown Poisson structure {self.poisson_A!r}")

    def V(self, q):
        return self.potential.value(q)

    def grad_V(self, q):
        return self.potential.grad(q)

    @property
    def canonical(self):
        return isinstance(self.poisson_A, str)


def running_example_D(theta1=1.0, theta2=0.5, varsigma=2.0):
    """Generator with eigenvalues ``theta1`` and ``theta2 +- i varsigma``."""
    return np.array(
        [[theta1, 0.0, 0.0], [0.0, theta2, -varsigma], [0.0, varsigma, theta2]]
    )


def running_example(theta1=1.0, theta2=0.5, varsigma=2.0, c=(1.0, 0.5, 0.0), beta=1.0,
                    potential=None):
    """One oscillator (n=1) coupled to the three-mode transport bath."""
    return SystemSpec(
        n=1,
        d=3,
        D=running_example_D(theta1, theta2, varsigma),
        C_mat=np.reshape(np.asarray(c, dtype=float), (3, 1)),
        beta=beta,
        potential=potential if potential is not None else quadratic(),
    )


@dataclass(frozen=True)
class DerivedOperators:
    D_sym: np.ndarray
    D_skw: np.ndarray
    Sigma: np.ndarray
    alpha: float

    def __post_init__(self):
        for name in ("D_sym", "D_skw", "Sigma"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))


def sym_sqrt(S):
    """Symmetric PSD square root of a symmetric PSD matrix."""
    lam, U = np.linalg.eigh(0.5 * (S + S.T))
    lam = np.clip(lam, 0.0, None)
    R = (U * np.sqrt(lam)) @ U.T
    return 0.5 * (R + R.T)


def confinement_ok(spec: SystemSpec) -> bool:
    """Whether ``V(q) - |C q|^2 / 2`` grows at infinity.

    Only the quadratic part decides for the quadratic well; a positive
    quartic coefficient always confines.
    """
    if spec.potential.quartic > 0:
        return True
    M = spec.potential.stiffness * np.eye(spec.n) - spec.C_mat.T @ spec.C_mat
    return bool(np.linalg.eigvalsh(spec.beta * M).min() > 0)


def build_derived(spec: SystemSpec, warn=True) -> DerivedOperators:
    D = spec.D
    D_sym = 0.5 * (D + D.T)
    D_skw = 0.5 * (D - D.T)
    alpha = float(np.linalg.eigvalsh(D_sym).min())
    if alpha <= GAP_THRESHOLD:
        raise SpectralGapError(
            f"smallest eigenvalue of (D + D^T)/2 is {alpha:.3e}; the bath is not dissipative"
        )
    Sigma = sym_sqrt((D + D.T) / spec.beta)
    if warn and not confinement_ok(spec):
        warnings.warn(
            "V(q) - |Cq|^2/2 is not confining: the Gibbs measure on Z is not normalizable",
            RuntimeWarning,
            stacklevel=2,
        )
    return DerivedOperators(D_sym=D_sym, D_skw=D_skw, Sigma=Sigma, alpha=alpha)


def split_z(spec, z):
    z = np.asarray(z, dtype=float)
    return z[..., : spec.n], z[..., spec.n :]


def hamiltonian_A(spec, z):
    q, p = split_z(spec, z)
    return 0.5 * np.sum(p * p, axis=-1) + spec.V(q)


def grad_hamiltonian_A(spec, z):
    q, p = split_z(spec, z)
    return np.concatenate([spec.grad_V(q), p], axis=-1)


def coupling(spec, q):
    """Bath coordinates of ``C q``."""
    return np.asarray(q, dtype=float) @ spec.C_mat.T


def hamiltonian_zw(spec, z, w):
    q, _ = split_z(spec, z)
    w = np.asarray(w, dtype=float)
    return hamiltonian_A(spec, z) + np.sum(coupling(spec, q) * w, axis=-1) + 0.5 * np.sum(w * w, axis=-1)


def grad_hamiltonian_zw(spec, z, w):
    """Return ``(d/dz, d/dw)`` of the visible energy."""
    q, p = split_z(spec, z)
    w = np.asarray(w, dtype=float)
    gz = np.concatenate([spec.grad_V(q) + w @ spec.C_mat, p], axis=-1)
    return gz, w + coupling(spec, q)


def poisson_matrix(spec, z):
    """``J_A(z)`` for a single state."""
    if spec.canonical:
        n = spec.n
        J = np.zeros((2 * n, 2 * n))
        J[:n, n:] = np.eye(n)
        J[n:, :n] = -np.eye(n)
        return J
    J = np.asarray(spec.poisson_A(np.asarray(z, dtype=float)), dtype=float)
    if not np.allclose(J, -J.T, rtol=0.0, atol=1e-12):
        raise ConfigError("user-supplied J_A(z) is not skew-symmetric")
    return J


def poisson_apply(spec, z, v):
    v = np.asarray(v, dtype=float)
    if spec.canonical:
        n = spec.n
        return np.concatenate([v[..., n:], -v[..., :n]], axis=-1)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        return poisson_matrix(spec, z) @ v
    zf = z.reshape(-1, z.shape[-1])
    vf = np.broadcast_to(v, z.shape).reshape(zf.shape)
    out = np.stack([poisson_matrix(spec, a) @ b for a, b in zip(zf, vf)])
    return out.reshape(z.shape)
