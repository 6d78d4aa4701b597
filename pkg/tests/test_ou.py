import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heatbath.errors import FactorizationError, ShapeError
from heatbath.model import running_example_D
from heatbath.ou import (
    OUPath,
    _factor,
    asymmetry,
    covariance,
    estimate_covariance,
    exact_step,
    make_params,
    sample_stationary,
    simulate_paths,
)

D3 = running_example_D()


def test_scalar_step_constants():
    p = make_params(np.eye(1), 1.0, math.log(2.0))
    assert p.E[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert p.Q[0, 0] == pytest.approx(0.75, abs=1e-15)


def test_zero_noise_is_deterministic():
    p = make_params(D3, 1.0, 0.1, Sigma=np.zeros((3, 3)))
    y = np.array([1.0, -2.0, 0.5])
    rng = np.random.default_rng(0)
    assert np.allclose(exact_step(p, y, rng), p.E @ y, atol=1e-15)


def test_small_dt_limit():
    p = make_params(D3, 1.0, 1e-12)
    assert np.allclose(p.E, np.eye(3), atol=1e-11)
    assert np.abs(p.Q).max() <= 1e-11


def test_lyapunov_closed_form_agrees():
    beta = 2.0
    p = make_params(D3, beta, 0.3)
    generic = make_params(D3, beta, 0.3, Sigma=p.Sigma)
    assert np.allclose(p.Q, (np.eye(3) - p.E @ p.E.T) / beta, atol=1e-12)
    assert np.allclose(generic.Q, p.Q, atol=1e-12)


@given(dt=st.floats(1e-3, 2.0), beta=st.floats(0.2, 5.0))
def test_transition_consistency(dt, beta):
    one = make_params(D3, beta, dt)
    two = make_params(D3, beta, 2 * dt)
    assert np.allclose(two.E, one.E @ one.E, atol=1e-12)
    assert np.allclose(two.Q, one.E @ one.Q @ one.E.T + one.Q, atol=1e-12)


def test_factor_rejects_indefinite():
    with pytest.raises(FactorizationError):
        _factor(np.diag([1.0, -1.0]))


def test_factor_semidefinite():
    Q = np.array([[1.0, 1.0], [1.0, 1.0]])
    L = _factor(Q)
    assert np.allclose(L @ L.T, Q, atol=1e-14)


def test_stationary_moments():
    p = make_params(D3, 2.0, 0.1)
    x = sample_stationary(p, np.random.default_rng(1), size=100_000)
    M = len(x)
    prod = x[:, :, None] * x[:, None, :]
    se = prod.std(axis=0) / math.sqrt(M)
    assert np.all(np.abs(prod.mean(axis=0) - 0.5 * np.eye(3)) <= 4 * se)
    assert np.all(np.abs(x.mean(axis=0)) <= 4 / math.sqrt(M * 2.0))
    p1 = make_params(np.eye(1), 1.0, 0.1)
    v = sample_stationary(p1, np.random.default_rng(2), size=100_000).var()
    assert 0.98 <= v <= 1.02


def test_covariance_function():
    assert np.allclose(covariance(D3, 2.0, 1.3, 1.3), 0.5 * np.eye(3))
    assert covariance(np.eye(1), 1.0, 0.0, 1.0)[0, 0] == pytest.approx(math.exp(-1.0))
    rng = np.random.default_rng(3)
    for s, t in rng.uniform(0, 3, (10, 2)):
        assert np.allclose(covariance(D3, 1.0, s, t), covariance(D3, 1.0, t, s).T, atol=1e-14)


def test_lag_covariance_estimate():
    beta = 2.0
    p = make_params(D3, beta, 0.1)
    paths = simulate_paths(p, 7, 20_000, seed=5)
    est = estimate_covariance(paths, 7)
    assert np.all(np.abs(est.mean - covariance(D3, beta, 0, 0.7)) <= 4 * est.se)
    est0 = estimate_covariance(paths, 0)
    assert np.all(np.abs(est0.mean - np.eye(3) / beta) <= 4 * est0.se + 1e-15)


def test_zero_paths_give_zero():
    t = np.arange(4) * 0.1
    paths = [OUPath(t, np.zeros((4, 3)), 0) for _ in range(3)]
    assert np.all(estimate_covariance(paths, 2).mean == 0)


def test_path_grid_mismatch():
    a = OUPath(np.arange(3) * 0.1, np.zeros((3, 2)), 0)
    b = OUPath(np.arange(3) * 0.2, np.zeros((3, 2)), 0)
    with pytest.raises(ShapeError):
        estimate_covariance([a, b], 1)
    with pytest.raises(ShapeError):
        OUPath(np.arange(3), np.zeros((2, 2)), 0)


def test_paths_do_not_depend_on_batching():
    p = make_params(D3, 1.0, 0.1)
    full = simulate_paths(p, 5, 6, seed=9)
    part = simulate_paths(p, 5, 2, seed=9, start=3)
    assert np.array_equal(full[3].values, part[0].values)
    assert np.array_equal(full[4].values, part[1].values)


def test_reversibility_diagnostic():
    beta = 1.0
    for D, irreversible in ((D3, True), (np.diag([1.0, 0.5, 0.5]), False)):
        p = make_params(D, beta, 0.35)
        V = np.stack([x.values for x in simulate_paths(p, 2, 20_000, seed=12)])
        score = asymmetry(V[:, 2], V[:, 0])
        assert (score > 4) == irreversible
