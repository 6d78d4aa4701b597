import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from heatbath.dilation import (
    DilationBasis,
    GridField,
    basis_samples,
    dilation_tail_bound,
    eval_basis,
    gram_shifted,
    project_P,
    sample_field,
    verify_compression,
    verify_dilation_identity,
)
from heatbath.errors import GridCoverageError, QuadratureError, SpectralGapError


def test_basis_value_at_zero(basis):
    # unit norm needs the factor sqrt(2 theta): int_{-inf}^0 2 e^{2y} dy = 1
    assert np.allclose(eval_basis(basis, 1, 0.0), [math.sqrt(2.0), 0, 0], atol=1e-15)


def test_basis_support(basis):
    for j in (1, 2, 3):
        assert np.all(eval_basis(basis, j, 0.5) == 0)
    g = DilationBasis.general(np.array([[1.0, -1.0], [1.0, 1.0]]))
    assert np.all(eval_basis(g, 2, 0.5) == 0)


def test_basis_index_checked(basis):
    with pytest.raises(IndexError):
        eval_basis(basis, 0, -1.0)
    with pytest.raises(IndexError):
        eval_basis(basis, 4, -1.0)


def test_general_diagonal_closed_form():
    diag = np.array([0.3, 1.0, 2.5])
    g = DilationBasis.general(np.diag(diag))
    y = -0.8
    for j in range(3):
        expect = np.zeros(3)
        expect[j] = math.sqrt(2 * diag[j]) * math.exp(y * diag[j])
        assert np.allclose(eval_basis(g, j + 1, y), expect, atol=1e-14)


def test_general_matches_running_example(basis):
    g = DilationBasis.general(basis.D)
    y = np.linspace(-4, 0, 9)
    assert np.allclose(basis_samples(g, y), basis_samples(basis, y), atol=1e-13)


def test_gram_values(basis):
    assert gram_shifted(basis, math.log(2.0))[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert np.allclose(gram_shifted(basis, 0.0), np.eye(3), atol=1e-15)
    c, s = math.cos(2.0), math.sin(2.0)
    block = math.exp(-0.5) * np.array([[c, s], [-s, c]])
    assert np.allclose(gram_shifted(basis, 1.0)[1:, 1:], block, atol=1e-14)


def test_gram_orthonormal_by_quadrature(basis):
    from scipy.integrate import quad

    for i in range(3):
        for j in range(3):
            val = quad(lambda y: eval_basis(basis, i + 1, y) @ eval_basis(basis, j + 1, y), -40, 0,
                       limit=400)[0]
            assert val == pytest.approx(float(i == j), abs=1e-9)


def test_compression_closed_form(basis):
    rep = verify_compression(basis, np.round(np.arange(1, 51) * 0.1, 10))
    assert rep.passed and rep.max_error <= 1e-10
    assert verify_compression(basis, [0.0]).max_error == 0.0


def test_compression_quadrature_general():
    g = DilationBasis.general(np.array([[1.0, -1.0], [1.0, 1.0]]))
    rep = verify_compression(g, [0.1, 0.5, 1.0, 2.0, 5.0, -0.7], tol=1e-7, quad_tol=1e-8)
    assert rep.passed


def test_quadrature_tolerance_unreachable():
    g = DilationBasis.general(np.array([[1.0, -1.0], [1.0, 1.0]]))
    with pytest.raises(QuadratureError):
        gram_shifted(g, 0.3, tol=1e-300)


def test_general_needs_gap():
    with pytest.raises(SpectralGapError):
        DilationBasis.general(np.array([[0.0, 1.0], [-1.0, 0.0]]))


def test_dilation_identity(basis):
    assert verify_dilation_identity(basis.D, 30.0) <= 1e-10
    assert verify_dilation_identity(np.eye(1), 30.0) <= 1e-14
    rng = np.random.default_rng(4)
    A = rng.standard_normal((4, 4))
    D = A @ A.T / 4 + 0.5 * np.eye(4) + (A - A.T)
    assert verify_dilation_identity(D, 40.0, tol=1e-10) <= 1e-8 + dilation_tail_bound(D, 40.0)


@given(s=st.floats(0, 4), t=st.floats(0, 4))
def test_semigroup_property(s, t):
    b = DilationBasis.running_example()
    lhs = gram_shifted(b, s + t)
    assert np.linalg.norm(lhs - gram_shifted(b, s) @ gram_shifted(b, t)) <= 2e-13


@given(t=st.floats(0, 6))
def test_contraction(t):
    b = DilationBasis.running_example()
    assert np.linalg.norm(gram_shifted(b, t), 2) <= math.exp(-b.alpha * t) + 1e-12


@given(t=st.floats(0, 6))
def test_adjoint_symmetry(t):
    b = DilationBasis.running_example()
    assert np.allclose(gram_shifted(b, -t), gram_shifted(b, t).T, atol=1e-14)
    assert np.allclose(gram_shifted(b, -t), expm(-t * b.D.T), atol=1e-13)


def test_project_basis_function(basis):
    h = 1e-3
    left = -32.0
    n = int(round(-left / h))
    f = sample_field(basis, [1.0, 0, 0], left, h, n)
    w = project_P(basis, f)
    assert np.allclose(w, [1, 0, 0], atol=5 * h)
    assert np.all(project_P(basis, GridField(left, h, np.zeros((n, 3)))) == 0)


def test_project_shifted(basis):
    h = 1e-3
    left = -32.0
    n = int(round((0.3 - left) / h)) + 10
    y = left + (np.arange(n) + 0.5) * h
    vals = basis_samples(basis, y - 0.3)[:, :, 0]
    w = project_P(basis, GridField(left, h, vals))
    assert abs(w[0] - math.exp(-0.3)) <= 5 * h
    assert np.allclose(w, gram_shifted(basis, 0.3)[:, 0], atol=5 * h)


def test_project_needs_coverage(basis):
    with pytest.raises(GridCoverageError):
        project_P(basis, GridField(-5.0, 1e-2, np.zeros((500, 3))))


def test_grid_field_inner():
    f = GridField(-1.0, 0.5, np.array([[1.0], [2.0]]))
    assert f.right == 0.0
    assert f.inner(f) == pytest.approx(2.5)
    assert f.norm() == pytest.approx(math.sqrt(2.5))
    assert np.allclose(f.centers(), [-0.75, -0.25])
