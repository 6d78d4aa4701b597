"""GENERIC form of the coarse-grained dynamics on ``y = (z, w, e)``.

Building blocks::

    E(y) = H(z, w) + e                 S(y) = beta e
    J(y) = diag(J_A(z), -D_skw, 0)
    K(y) = (1/beta) [[0, 0, 0], [0, D_sym, -D_sym v], [0, -(D_sym v)^T, <D_sym v, v>]]
    Sigma_GEN(y) = (0; Sigma; -v^T Sigma)           v = w + C q

and the checks that this is a GENERIC system: skew ``J``, symmetric PSD ``K``,
the two non-interaction conditions, the fluctuation-dissipation relation
``Sigma_GEN Sigma_GEN^T = 2 K``, the Jacobi identity of ``J`` and ``div J = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import JacobianSingularError, ShapeError
from .model import grad_hamiltonian_zw, hamiltonian_zw, poisson_matrix, split_z

ALGEBRAIC_TOL = 1e-12
FD_TOL = 1e-6
FD_STEP = 1e-5


@dataclass(frozen=True)
class GenericStructure:
    """Evaluators of the GENERIC building blocks at single states ``y``.

    ``poisson`` and ``onsager`` replace ``J`` and ``K`` when given; they exist
    for negative controls and user experiments.
    """

    spec: object
    derived: object
    poisson: Optional[Callable] = field(default=None, repr=False)
    onsager: Optional[Callable] = field(default=None, repr=False)

    @property
    def dim(self):
        return 2 * self.spec.n + self.spec.d + 1

    def split(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.dim:
            raise ShapeError(f"state must have length {self.dim}, got {y.shape[-1]}")
        m = 2 * self.spec.n
        return y[..., :m], y[..., m : m + self.spec.d], y[..., m + self.spec.d]

    def velocity(self, y):
        """``v = w + C q``."""
        z, w, _ = self.split(y)
        q, _ = split_z(self.spec, z)
        return w + q @ self.spec.C_mat.T

    def energy(self, y):
        z, w, e = self.split(y)
        return hamiltonian_zw(self.spec, z, w) + e

    def entropy(self, y):
        return self.spec.beta * self.split(y)[2]

    def grad_energy(self, y):
        z, w, _ = self.split(y)
        gz, gw = grad_hamiltonian_zw(self.spec, z, w)
        return np.concatenate([gz, gw, np.ones(np.shape(z)[:-1] + (1,))], axis=-1)

    def grad_entropy(self, y):
        g = np.zeros(np.shape(y))
        g[..., -1] = self.spec.beta
        return g

    def poisson_matrix(self, y):
        if self.poisson is not None:
            return np.asarray(self.poisson(np.asarray(y, dtype=float)), dtype=float)
        z, _, _ = self.split(y)
        m, d = 2 * self.spec.n, self.spec.d
        J = np.zeros((self.dim, self.dim))
        J[:m, :m] = poisson_matrix(self.spec, z)
        J[m : m + d, m : m + d] = -self.derived.D_skw
        return J

    def onsager_matrix(self, y):
        if self.onsager is not None:
            return np.asarray(self.onsager(np.asarray(y, dtype=float)), dtype=float)
        m, d = 2 * self.spec.n, self.spec.d
        v = self.velocity(y)
        Dv = self.derived.D_sym @ v
        K = np.zeros((self.dim, self.dim))
        K[m : m + d, m : m + d] = self.derived.D_sym
        K[m : m + d, -1] = -Dv
        K[-1, m : m + d] = -Dv
        K[-1, -1] = Dv @ v
        return K / self.spec.beta

    def noise_matrix(self, y):
        """``Sigma_GEN(y)`` of shape ``(dim, d)``."""
        m, d = 2 * self.spec.n, self.spec.d
        S = self.derived.Sigma
        out = np.zeros((self.dim, d))
        out[m : m + d] = S
        out[-1] = -self.velocity(y) @ S
        return out

    def div_onsager(self, y=None):
        """Closed form ``(0, 0, -tr(D_sym)/beta)``; independent of the state."""
        out = np.zeros(self.dim)
        out[-1] = -np.trace(self.derived.D_sym) / self.spec.beta
        return out


def assemble_drift(structure: GenericStructure, y, with_divK=False):
    """``J grad E + K grad S``, plus ``div K`` for the Ito SDE drift."""
    out = structure.poisson_matrix(y) @ structure.grad_energy(y)
    out = out + structure.onsager_matrix(y) @ structure.grad_entropy(y)
    if with_divK:
        out = out + structure.div_onsager(y)
    return out


def energy_entropy_rates(structure: GenericStructure, y, drift):
    """``(dE/dt, dS/dt)`` along ``drift``."""
    return (float(structure.grad_energy(y) @ drift), float(structure.grad_entropy(y) @ drift))


def random_states(spec, count, rng, scale=1.0):
    """Gaussian test states ``y = (z, w, e)`` of shape ``(count, 2n + d + 1)``."""
    return scale * rng.standard_normal((count, 2 * spec.n + spec.d + 1))


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_error: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tol)


@dataclass
class StructureReport:
    checks: list
    n_states: int

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self):
        return [c.name for c in self.checks]

    def to_dict(self):
        return {
            "n_states": self.n_states,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "max_error": c.max_error, "tol": c.tol, "passed": c.passed}
                for c in self.checks
            ],
        }


def _fd_tensor(matrix_fn, y, step):
    """``T[l, a, b] = d J_ab / d y_l`` by central differences."""
    N = y.shape[0]
    out = np.empty((N,) + matrix_fn(y).shape)
    for l in range(N):
        e = np.zeros(N)
        e[l] = step
        out[l] = (matrix_fn(y + e) - matrix_fn(y - e)) / (2 * step)
    return out


def jacobi_residual(matrix_fn, y, step=FD_STEP):
    """Largest entry of ``sum_l (J_la d_l J_bc + J_lb d_l J_ca + J_lc d_l J_ab)``."""
    J = matrix_fn(y)
    dJ = _fd_tensor(matrix_fn, y, step)
    t = np.einsum("la,lbc->abc", J, dJ)
    R = t + np.transpose(t, (1, 2, 0)) + np.transpose(t, (2, 0, 1))
    return float(np.max(np.abs(R)))


def divergence(matrix_fn, y, step=FD_STEP):
    """``(div M)_i = sum_j d M_ij / d y_j`` by central differences."""
    dM = _fd_tensor(matrix_fn, y, step)
    return np.einsum("jij->i", dM)


def _algebraic(J, K, Sig, gE, gS):
    """Errors of the pointwise identities at one state."""
    lam_min = float(np.linalg.eigvalsh(0.5 * (K + K.T)).min()) if K.size else 0.0
    return {
        "skew_J": float(np.max(np.abs(J + J.T))),
        "sym_K": float(np.max(np.abs(K - K.T))),
        "psd_K": max(0.0, -lam_min),
        "nic_J_gradS": float(np.max(np.abs(J @ gS))),
        "nic_K_gradE": float(np.max(np.abs(K @ gE))),
        "fdr": float(np.max(np.abs(Sig @ Sig.T - 2 * K))),
    }


def check_structure(structure: GenericStructure, states, tol=ALGEBRAIC_TOL, fd_tol=FD_TOL,
                    fd_step=FD_STEP) -> StructureReport:
    """Run every GENERIC check at each state and keep the worst error per check.

    ``tol`` applies to the algebraic identities, ``fd_tol`` to the Jacobi
    identity and ``div J = 0``, which are evaluated by central differences.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[0] < 1:
        raise ShapeError("need at least one state")
    worst = {}
    for y in states:
        errs = _algebraic(
            structure.poisson_matrix(y),
            structure.onsager_matrix(y),
            structure.noise_matrix(y),
            structure.grad_energy(y),
            structure.grad_entropy(y),
        )
        errs["jacobi"] = jacobi_residual(structure.poisson_matrix, y, fd_step)
        errs["div_J"] = float(np.max(np.abs(divergence(structure.poisson_matrix, y, fd_step))))
        for k, v in errs.items():
            worst[k] = max(worst.get(k, 0.0), v)
    checks = [
        CheckResult(k, worst[k], fd_tol if k in ("jacobi", "div_J") else tol) for k in worst
    ]
    return StructureReport(checks, states.shape[0])


def check_drift(structure: GenericStructure, states, drift_fn, tol=ALGEBRAIC_TOL, with_divK=False):
    """Compare :func:`assemble_drift` with an independent drift ``drift_fn(y)``."""
    err = 0.0
    for y in np.atleast_2d(states):
        err = max(err, float(np.max(np.abs(assemble_drift(structure, y, with_divK) - drift_fn(y)))))
    name = "drift_sde" if with_divK else "drift_ode"
    return CheckResult(name, err, tol)


# -- coordinate changes --------------------------------------------------------


def linear_map(A, b=None):
    """``phi(y) = A y + b`` with its Jacobian and inverse."""
    A = np.asarray(A, dtype=float)
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise JacobianSingularError(f"linear map is singular (condition number {cond:.3e})")
    Ainv = np.linalg.inv(A)
    return (lambda y: A @ y + b), (lambda y: A), (lambda x: Ainv @ (x - b))


def sinh_map(scale=1.0):
    """Componentwise ``phi_i(y) = sinh(scale y_i) / scale``, a smooth bijection of R."""
    s = float(scale)
    return (
        lambda y: np.sinh(s * y) / s,
        lambda y: np.diag(np.cosh(s * y)),
        lambda x: np.arcsinh(s * x) / s,
    )


def transform_structure(structure: GenericStructure, phi, dphi, states, phi_inv=None,
                        linear=None, tol=1e-10, fd_tol=FD_TOL, fd_step=FD_STEP) -> StructureReport:
    """Push the structure forward along ``x = phi(y)`` and re-run the checks.

    In the new coordinates ``J^(x) = A J(y) A^T``, ``K^(x) = A K(y) A^T``,
    ``Sigma^ = A Sigma_GEN``, ``grad E^ = A^-T grad E`` with ``A = dphi(y)``.
    With ``phi_inv`` the Jacobi identity is re-checked on ``x -> J^(x)`` and
    ``E^(phi(y)) = E(y)`` is confirmed. For linear maps (``linear=True``, or
    detected from a constant Jacobian) ``div J^ = 0`` and the transformed SDE
    drift ``A (J grad E + K grad S + div K)`` are checked too.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    worst = {}

    def bump(name, val):
        worst[name] = max(worst.get(name, 0.0), float(val))

    def frame(y):
        A = np.asarray(dphi(y), dtype=float)
        c = np.linalg.cond(A)
        if not np.isfinite(c) or c > 1e12:
            raise JacobianSingularError(f"Jacobian is singular at a sample state (cond {c:.3e})")
        return A

    if linear is None:
        A0 = frame(states[0])
        probes = list(states[1:]) + [states[0] + 1.0]
        linear = all(np.array_equal(frame(y), A0) for y in probes)

    if phi_inv is not None:
        def J_hat(x):
            y = phi_inv(x)
            A = frame(y)
            return A @ structure.poisson_matrix(y) @ A.T

        def K_hat(x):
            y = phi_inv(x)
            A = frame(y)
            return A @ structure.onsager_matrix(y) @ A.T

    for y in states:
        A = frame(y)
        Ainv_T = np.linalg.inv(A).T
        J = A @ structure.poisson_matrix(y) @ A.T
        K = A @ structure.onsager_matrix(y) @ A.T
        Sig = A @ structure.noise_matrix(y)
        gE = Ainv_T @ structure.grad_energy(y)
        gS = Ainv_T @ structure.grad_entropy(y)
        for k, v in _algebraic(J, K, Sig, gE, gS).items():
            bump(k, v)
        drift = J @ gE + K @ gS
        bump("drift_ode", np.max(np.abs(drift - A @ assemble_drift(structure, y))))
        if phi_inv is not None:
            x = phi(y)
            bump("energy_pullback", abs(structure.energy(phi_inv(x)) - structure.energy(y)))
            bump("jacobi", jacobi_residual(J_hat, x, fd_step))
            if linear:
                bump("div_J", np.max(np.abs(divergence(J_hat, x, fd_step))))
                divK = divergence(K_hat, x, fd_step)
                sde = drift + divK
                bump("drift_sde", np.max(np.abs(sde - A @ assemble_drift(structure, y, True))))
    fd_names = ("jacobi", "div_J", "drift_sde")
    checks = [CheckResult(k, worst[k], fd_tol if k in fd_names else tol) for k in worst]
    return StructureReport(checks, states.shape[0])
