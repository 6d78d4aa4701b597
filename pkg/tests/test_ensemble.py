import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heatbath import ensemble
from heatbath.ensemble import MeasureSpec
from heatbath.errors import DivergenceError, DomainError, ShapeError
from heatbath.model import build_derived, quartic, running_example


def test_uncoupled_target_is_gaussian(rng):
    spec = running_example(c=(0.0, 0.0, 0.0), beta=2.0)
    res = ensemble.sample_mu_beta_Z(MeasureSpec("mu_beta_Z", spec), 4000, rng, return_diagnostics=True)
    assert res.samples.shape == (4000, 2)
    assert np.allclose(res.samples.var(axis=0), 0.5, rtol=0.1)
    assert np.all(np.abs(res.samples.mean(axis=0)) < 0.06)
    assert 0.2 < res.acceptance < 0.8
    assert np.all(res.rhat < 1.05)


def test_confined_marginals(confined, rng):
    z = ensemble.sample_mu_beta_Z(MeasureSpec("mu_beta_Z", confined), 6000, rng)
    k_eff = 1.0 - np.sum(confined.C_mat**2)
    assert z[:, 0].var() == pytest.approx(1.0 / k_eff, rel=0.1)
    assert z[:, 1].var() == pytest.approx(1.0, rel=0.1)


def test_cold_scaling(rng):
    spec = running_example(c=(0.0, 0.0, 0.0), beta=100.0)
    z = ensemble.sample_mu_beta_Z(MeasureSpec("mu_beta_Z", spec), 4000, rng)
    assert z.var(axis=0) * 100 == pytest.approx([1.0, 1.0], rel=0.1)


def test_nu_beta_conditional(confined, rng):
    z, w = ensemble.sample_nu_beta(MeasureSpec("nu_beta", confined), 6000, rng)
    q = z[:, :1]
    X = np.hstack([np.ones_like(q), q])
    coef, *_ = np.linalg.lstsq(X, w, rcond=None)
    assert np.allclose(coef[1], -confined.C_mat[:, 0], atol=0.03)
    resid = w - X @ coef
    assert np.allclose(resid.var(axis=0), 1.0 / confined.beta, rtol=0.08)


def test_non_confining_target_diverges(spec, rng):
    t0 = time.perf_counter()
    with pytest.raises(DivergenceError):
        ensemble.sample_mu_beta_Z(MeasureSpec("mu_beta_Z", spec), 1000, rng)
    assert time.perf_counter() - t0 < 60


def test_measure_spec_validation(spec):
    with pytest.raises(ValueError):
        MeasureSpec("gibbs", spec)
    with pytest.raises(ValueError):
        MeasureSpec("nu_beta")
    with pytest.raises(ValueError):
        MeasureSpec("sphere", n=0)


def test_split_rhat(rng):
    iid = rng.standard_normal((8, 500, 2))
    assert np.all(ensemble.split_rhat(iid) < 1.02)
    shifted = iid + np.arange(8)[:, None, None]
    assert np.all(ensemble.split_rhat(shifted) > 1.05)
    with pytest.raises(ShapeError):
        ensemble.split_rhat(iid[:, :3])


def test_logZ_examples():
    assert ensemble.microcanonical_logZ(2, 1.0, 0.3) == pytest.approx(math.log(2 * math.pi), abs=1e-14)
    assert ensemble.microcanonical_logZ(3, 2.0, 0.25) == pytest.approx(
        math.log(4 * math.pi) + 0.5 * math.log(2.0), abs=1e-14
    )
    assert ensemble.microcanonical_C(1.0, 4) == pytest.approx(math.log(2 * math.pi**2) + math.log(4.0))


def test_log_sphere_area_matches_unit_sphere():
    assert math.exp(ensemble.log_sphere_area(3, 1.0)) == pytest.approx(4 * math.pi)
    assert math.exp(ensemble.log_sphere_area(2, 4.0)) == pytest.approx(4 * math.pi)


def test_domain_errors():
    with pytest.raises(DomainError):
        ensemble.microcanonical_logZ(4, 1.0, -2.0)
    with pytest.raises(DomainError):
        ensemble.normalized_gap(0, 1.0, 0.1)
    with pytest.raises(DomainError):
        ensemble.normalized_gap(3, -1.0, 0.1)


def test_gap_zero_at_zero_energy():
    assert ensemble.normalized_gap(1000, 2.0, 0.0) == 0.0


def test_gap_matches_direct_difference():
    n, beta, e = 50, 1.5, 0.4
    direct = ensemble.microcanonical_logZ(n, beta, e) - ensemble.microcanonical_C(beta, n) - beta * e
    assert ensemble.normalized_gap(n, beta, e) == pytest.approx(direct, abs=1e-12)


@given(beta=st.floats(0.1, 5.0), e=st.floats(-0.5, 0.5))
def test_gap_vanishes_with_rate_one_over_n(beta, e):
    n = 10**7
    gap = ensemble.normalized_gap(n, beta, e)
    assert n * gap == pytest.approx(ensemble.gap_limit(beta, e), rel=1e-4, abs=1e-9)


def test_sphere_points_on_shell(rng):
    x = ensemble.sphere_points(7, 2.0, 100, rng)
    assert np.allclose(np.sum(x * x, axis=1), 14.0)


def test_high_dimensional_sphere_is_gaussian(rng):
    s = ensemble.sphere_sample(2000, 1.5, 20_000, rng)
    assert np.all(np.abs(s.mean) <= 4 * s.mean_se)
    assert np.all(np.abs(s.cov - 1.5 * np.eye(3)) <= 4 * s.cov_se)
    assert np.all(np.abs(s.excess_kurtosis) <= 4 * s.kurtosis_se + 2 * 6 / 2000)


def test_circle_is_not_gaussian(rng):
    s = ensemble.sphere_sample(2, 1.0, 50_000, rng, k=2)
    assert np.allclose(s.excess_kurtosis, -1.5, atol=0.03)


def test_sphere_sample_chunking_invariant():
    a = ensemble.sphere_sample(10, 1.0, 1000, np.random.default_rng(1), chunk=1000)
    b = ensemble.sphere_sample(10, 1.0, 1000, np.random.default_rng(1), chunk=1000)
    assert np.array_equal(a.cov, b.cov)
    with pytest.raises(ShapeError):
        ensemble.sphere_sample(2, 1.0, 10, np.random.default_rng(1), k=3)


def test_variance_bound(rng):
    (row,) = ensemble.variance_bound_check([100], 1.0, 20_000, rng)
    lam = 1.0 / np.arange(1, 101) ** 2
    assert abs(row.estimate - lam.sum()) <= 4 * row.se
    assert row.passed and row.ratio == pytest.approx(1 / 1.5, rel=0.02)


def test_variance_bound_zero_weights(rng):
    (row,) = ensemble.variance_bound_check([10], 1.0, 100, rng, weights=lambda n: np.zeros(n))
    assert row.estimate == 0.0 and row.ratio == 0.0 and row.passed


def test_invariance_quartic():
    spec = running_example(potential=quartic(1.0, 1.0), beta=1.0)
    der = build_derived(spec)
    rep = ensemble.invariance_test(spec, der, T=1.0, dt=5e-3, count=3000, seed=3)
    assert rep.passed, rep.to_dict()
    assert len(rep.names) == 5 + 15


def test_invariance_without_noise_fails(confined):
    der = build_derived(confined)
    rep = ensemble.invariance_test(confined, der, T=2.0, dt=1e-2, count=3000, seed=3, zero_noise=True)
    assert not rep.passed
    assert rep.worst > 1
