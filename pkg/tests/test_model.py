import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from heatbath.errors import ConfigError, SpectralGapError
from heatbath.model import (
    Potential,
    SystemSpec,
    build_derived,
    confinement_ok,
    grad_hamiltonian_A,
    grad_hamiltonian_zw,
    hamiltonian_A,
    hamiltonian_zw,
    poisson_apply,
    quartic,
    running_example,
    running_example_D,
)

finite = st.floats(-5, 5, allow_nan=False)


def test_running_example_split(derived):
    assert np.allclose(derived.D_sym, np.diag([1.0, 0.5, 0.5]), atol=0)
    assert np.allclose(derived.D_skw, [[0, 0, 0], [0, 0, -2], [0, 2, 0]], atol=0)


def test_sigma_running_example(derived):
    assert np.allclose(derived.Sigma, np.diag([np.sqrt(2), 1, 1]), atol=1e-15)


@pytest.mark.parametrize("d,beta", [(1, 1.0), (3, 0.5), (5, 4.0)])
def test_identity_generator(d, beta):
    spec = SystemSpec(n=1, d=d, D=np.eye(d), C_mat=np.zeros((d, 1)), beta=beta)
    der = build_derived(spec)
    assert np.all(der.D_skw == 0)
    assert np.allclose(der.Sigma, np.sqrt(2 / beta) * np.eye(d), atol=1e-14)


def test_no_gap_raises():
    D = np.array([[0.0, -1.0], [1.0, 0.0]])
    with pytest.raises(SpectralGapError):
        build_derived(SystemSpec(n=1, d=2, D=D, C_mat=np.zeros((2, 1))))


def test_non_confining_warns(spec):
    assert not confinement_ok(spec)
    with pytest.warns(RuntimeWarning):
        build_derived(spec)


def test_confined_is_quiet(confined):
    assert confinement_ok(confined)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_derived(confined)


def test_hamiltonian_values(spec):
    assert hamiltonian_A(spec, [1.0, 0.0]) == 0.5
    assert np.array_equal(grad_hamiltonian_A(spec, [1.0, 0.0]), [1.0, 0.0])
    assert hamiltonian_zw(spec, [1.0, 0.0], [1.0, 1.0, 1.0]) == pytest.approx(3.5, abs=1e-15)


def test_quartic_hand_value():
    s = running_example(potential=quartic(1.0, 1.0))
    assert hamiltonian_A(s, [1.0, 2.0]) == pytest.approx(2.75, abs=1e-15)
    assert np.allclose(grad_hamiltonian_A(s, [1.0, 2.0]), [2.0, 2.0])


def test_zero_state(spec):
    assert hamiltonian_A(spec, [0.0, 0.0]) == 0.0
    assert hamiltonian_zw(spec, [0.3, -0.2], np.zeros(3)) == hamiltonian_A(spec, [0.3, -0.2])


def test_poisson_canonical(spec):
    assert np.array_equal(poisson_apply(spec, [0, 0], [2.0, 3.0]), [3.0, -2.0])
    g = grad_hamiltonian_A(spec, [1.0, 0.0])
    assert np.array_equal(poisson_apply(spec, [1.0, 0.0], g), [0.0, -1.0])


def test_potential_rejects_mixed():
    with pytest.raises(ConfigError):
        Potential("quadratic", 1.0, 0.5)
    with pytest.raises(ConfigError):
        Potential("sextic")


def test_user_poisson_must_be_skew():
    spec = SystemSpec(n=1, d=1, D=np.eye(1), C_mat=np.zeros((1, 1)),
                      poisson_A=lambda z: np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ConfigError):
        poisson_apply(spec, np.zeros(2), np.ones(2))


@given(v=arrays(float, 2, elements=finite), z=arrays(float, 2, elements=finite))
def test_poisson_skew_property(v, z):
    spec = running_example()
    assert abs(v @ poisson_apply(spec, z, v)) <= 1e-12


@given(
    t1=st.floats(0.05, 5), t2=st.floats(0.05, 5), s=st.floats(0.0, 5), beta=st.floats(0.1, 10)
)
def test_fdr_of_sigma(t1, t2, s, beta):
    spec = SystemSpec(n=1, d=3, D=running_example_D(t1, t2, s), C_mat=np.zeros((3, 1)), beta=beta)
    der = build_derived(spec)
    D = spec.D
    assert np.linalg.norm(beta * der.Sigma @ der.Sigma.T - (D + D.T)) <= 1e-12 * max(1.0, np.abs(D).max())
    assert np.array_equal(der.D_sym + der.D_skw, D)


def test_gradient_matches_finite_differences(rng):
    spec = running_example(potential=quartic(1.0, 0.7))
    step = 1e-5
    for _ in range(100):
        z = rng.standard_normal(2)
        w = rng.standard_normal(3)
        gz, gw = grad_hamiltonian_zw(spec, z, w)
        fd_z = [(hamiltonian_zw(spec, z + step * e, w) - hamiltonian_zw(spec, z - step * e, w)) / (2 * step)
                for e in np.eye(2)]
        fd_w = [(hamiltonian_zw(spec, z, w + step * e) - hamiltonian_zw(spec, z, w - step * e)) / (2 * step)
                for e in np.eye(3)]
        assert np.allclose(gz, fd_z, rtol=1e-6, atol=1e-8)
        assert np.allclose(gw, fd_w, rtol=1e-6, atol=1e-8)


def test_spec_is_immutable(spec):
    with pytest.raises(ValueError):
        spec.D[0, 0] = 3.0


def test_batched_hamiltonian(spec, rng):
    z = rng.standard_normal((7, 2))
    w = rng.standard_normal((7, 3))
    batched = hamiltonian_zw(spec, z, w)
    assert np.allclose(batched, [hamiltonian_zw(spec, a, b) for a, b in zip(z, w)], rtol=0, atol=1e-14)
