"""Observable bath functions and the compression property.

The bath is transport on the line, ``S_t f = f(. - t)``. The observable
subspace W is spanned by functions ``f_1 .. f_d`` supported on ``(-inf, 0]``.
In the running example the ``f_j`` have closed forms; in general mode they are
the columns of ``Sigma_D exp(y D)`` with ``Sigma_D = (D + D^T)^(1/2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import expm

from .errors import GridCoverageError, QuadratureError, SpectralGapError
from .model import running_example_D, sym_sqrt


def tail_depth(alpha, tail_tol):
    """Smallest ``Y`` with ``exp(-2 alpha Y) <= tail_tol``."""
    return -math.log(tail_tol) / (2.0 * alpha)


@dataclass(frozen=True)
class DilationBasis:
    mode: str
    D: np.ndarray
    y_max: float
    theta1: float | None = None
    theta2: float | None = None
    varsigma: float | None = None
    Sigma_D: np.ndarray = field(default=None, repr=False)

    @property
    def d(self):
        return self.D.shape[0]

    @property
    def alpha(self):
        return float(np.linalg.eigvalsh(0.5 * (self.D + self.D.T)).min())

    @classmethod
    def running_example(cls, theta1=1.0, theta2=0.5, varsigma=2.0, tail_tol=1e-13, y_max=None):
        if min(theta1, theta2, varsigma) <= 0:
            raise ValueError("theta1, theta2 and varsigma must be positive")
        D = running_example_D(theta1, theta2, varsigma)
        if y_max is None:
            y_max = tail_depth(min(theta1, theta2), tail_tol)
        return cls("running-example", D, float(y_max), theta1, theta2, varsigma, sym_sqrt(D + D.T))

    @classmethod
    def general(cls, D, tail_tol=1e-13, y_max=None):
        D = np.array(D, dtype=float)
        alpha = float(np.linalg.eigvalsh(0.5 * (D + D.T)).min())
        if alpha <= 1e-12:
            raise SpectralGapError(f"no spectral gap: alpha = {alpha:.3e}")
        if y_max is None:
            y_max = tail_depth(alpha, tail_tol)
        return cls("general", D, float(y_max), Sigma_D=sym_sqrt(D + D.T))


def _running_values(basis, y):
    """(..., d, d) array, ``[..., :, j] = f_{j+1}(y)``, ignoring the support cut."""
    t1, t2, s = basis.theta1, basis.theta2, basis.varsigma
    a1 = math.sqrt(2 * t1) * np.exp(t1 * y)
    a2 = math.sqrt(2 * t2) * np.exp(t2 * y)
    c, sn = np.cos(s * y), np.sin(s * y)
    out = np.zeros(np.shape(y) + (3, 3))
    out[..., 0, 0] = a1
    out[..., 1, 1] = a2 * c
    out[..., 2, 1] = a2 * sn
    out[..., 1, 2] = -a2 * sn
    out[..., 2, 2] = a2 * c
    return out


def _general_values(basis, y):
    y = np.asarray(y, dtype=float)
    E = expm(y[..., None, None] * basis.D)
    return basis.Sigma_D @ E


def basis_samples(basis, y):
    """Values of all basis functions at points ``y``.

    Returns an array of shape ``y.shape + (d, d)`` whose ``[..., :, j]``
    slice is ``f_{j+1}(y)``; zero where ``y > 0``.
    """
    y = np.asarray(y, dtype=float)
    ys = np.minimum(y, 0.0)
    vals = _running_values(basis, ys) if basis.mode == "running-example" else _general_values(basis, ys)
    return np.where((y <= 0.0)[..., None, None], vals, 0.0)


def eval_basis(basis, j, y):
    """``f_j(y)`` for a 1-based index ``j``."""
    if not 1 <= j <= basis.d:
        raise IndexError(f"basis index {j} outside 1..{basis.d}")
    return basis_samples(basis, y)[..., :, j - 1]


def _compressed(D, t):
    return expm(-t * D) if t >= 0 else expm(t * D.T)


def _gauss_legendre(fun, a, b, tol, min_panels=4, max_panels=8192, order=16):
    """Composite Gauss-Legendre with panel doubling until two levels agree."""
    x0, w0 = leggauss(order)

    def level(panels):
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
        weights = (half[:, None] * w0[None, :]).ravel()
        vals = fun(nodes)
        return np.tensordot(weights, vals, axes=(0, 0))

    panels = min_panels
    prev = level(panels)
    while panels < max_panels:
        panels *= 2
        cur = level(panels)
        if np.linalg.norm(cur - prev) <= tol:
            return cur
        prev = cur
    raise QuadratureError(f"quadrature did not reach tolerance {tol:g} with {max_panels} panels")


def gram_shifted(basis, t, tol=1e-12):
    """``G_ij(t) = <f_i, f_j(. - t)>``, which should equal ``exp(-tD)`` for ``t >= 0``."""
    t = float(t)
    if basis.mode == "running-example":
        t1, t2, s = basis.theta1, basis.theta2, basis.varsigma
        lo = min(0.0, t)
        # int_{-inf}^{lo} 2 theta exp(2 theta y) dy * exp(-theta t)
        g1 = math.exp(2 * t1 * lo - t1 * t)
        g2 = math.exp(2 * t2 * lo - t2 * t)
        c, sn = math.cos(s * t), math.sin(s * t)
        return np.array([[g1, 0.0, 0.0], [0.0, g2 * c, g2 * sn], [0.0, -g2 * sn, g2 * c]])
    upper = min(0.0, t)
    lower = -basis.y_max

    def integrand(y):
        Fi = _general_values(basis, y)
        Fj = _general_values(basis, y - t)
        return np.swapaxes(Fi, -1, -2) @ Fj

    return _gauss_legendre(integrand, lower, upper, tol)


@dataclass(frozen=True)
class GridField:
    """Cell-centred samples of a field ``R -> R^d`` on ``[left, left + N h]``."""

    left: float
    h: float
    values: np.ndarray

    @property
    def right(self):
        return self.left + self.values.shape[0] * self.h

    def centers(self):
        return self.left + (np.arange(self.values.shape[0]) + 0.5) * self.h

    def index_of(self, x):
        """Index of the cell whose left edge is (numerically) at ``x``."""
        return int(round((x - self.left) / self.h))

    def inner(self, other):
        return self.h * float(np.sum(self.values * other.values))

    def norm(self):
        return math.sqrt(self.inner(self))


def window_cells(basis, h):
    """Number of grid cells ending at 0 whose centres lie in ``[-Y_max, 0]``."""
    return int(math.floor(basis.y_max / h + 0.5))


def window_samples(basis, h):
    """Basis values at the centres of the ``m`` cells ``[-m h, 0]``; shape ``(m, d, d)``."""
    m = window_cells(basis, h)
    y = (np.arange(m) - m + 0.5) * h
    return basis_samples(basis, y)


def sample_field(basis, coeffs, left, h, ncells):
    """Grid samples of ``sum_j coeffs_j f_j`` on ``[left, left + ncells h]``."""
    y = left + (np.arange(ncells) + 0.5) * h
    return GridField(left, h, basis_samples(basis, y) @ np.asarray(coeffs, dtype=float))


def project_P(basis, field: GridField):
    """Coordinates ``w_j = <f_j, field>`` by the grid inner product.

    Only cells whose centre lies in ``[-Y_max, 0]`` contribute. When 0 is a
    cell edge this is the midpoint rule on each smooth piece; otherwise the
    jump of ``f_j`` at 0 makes the error O(h).
    """
    stop = int(math.floor(-field.left / field.h + 0.5))  # cells with centre <= 0
    start = stop - window_cells(basis, field.h)
    if start < 0 or stop > field.values.shape[0]:
        raise GridCoverageError(
            f"grid [{field.left:g}, {field.right:g}] does not cover [-{basis.y_max:g}, 0]"
        )
    F = basis_samples(basis, field.centers()[start:stop])
    return field.h * np.einsum("kij,ki->j", F, field.values[start:stop])


@dataclass(frozen=True)
class CompressionReport:
    times: np.ndarray
    errors: np.ndarray
    tol: float

    @property
    def max_error(self):
        return float(np.max(self.errors)) if len(self.errors) else 0.0

    @property
    def passed(self):
        return self.max_error <= self.tol


def verify_compression(basis, t_list, tol=1e-10, quad_tol=1e-12):
    """Compare the shifted Gram matrix against ``exp(-tD)`` / ``exp(t D^T)``."""
    times = np.asarray(list(t_list), dtype=float)
    errors = np.array(
        [np.linalg.norm(gram_shifted(basis, t, quad_tol) - _compressed(basis.D, t)) for t in times]
    )
    return CompressionReport(times, errors, tol)


def verify_dilation_identity(D, y_max, tol=1e-12):
    """Frobenius distance of ``int_{-Y}^0 exp(yD^T)(D + D^T)exp(yD) dy`` from I."""
    D = np.asarray(D, dtype=float)
    S = D + D.T

    def integrand(y):
        E = expm(y[:, None, None] * D)
        return np.swapaxes(E, -1, -2) @ S @ E

    I = _gauss_legendre(integrand, -float(y_max), 0.0, tol)
    return float(np.linalg.norm(I - np.eye(D.shape[0])))


def dilation_tail_bound(D, y_max):
    """Truncation bound ``||D + D^T|| exp(-2 alpha Y) / (2 alpha)``."""
    D = np.asarray(D, dtype=float)
    alpha = float(np.linalg.eigvalsh(0.5 * (D + D.T)).min())
    return np.linalg.norm(D + D.T, 2) * math.exp(-2 * alpha * y_max) / (2 * alpha)
