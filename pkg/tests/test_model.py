import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fluokf.errors import DomainError
from fluokf.model import (
    ModelParams, conservation_matrix, conservation_trajectory, equilibria, monod,
    monod_derivative, monod_inverse, vector_field,
)
from oracles import central_difference

positive = st.floats(0.05, 5.0)
param_sets = st.builds(ModelParams, gamma=positive, alpha=st.floats(0.05, 0.95), s_in=positive,
                       d=st.floats(0.01, 1.0), mu_max=positive, k_s=positive)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(alpha=1.0)
    with pytest.raises(ValueError):
        ModelParams(d=0.0)
    with pytest.raises(ValueError):
        ModelParams(k_s=-1.0)


def test_monod_examples(params):
    assert monod(0.0, params) == 0.0
    assert monod(params.k_s, params) == pytest.approx(params.mu_max / 2, rel=1e-15)
    # ln 2 * 2 / 2.2
    assert monod(2.0, params) == pytest.approx(0.6301338005090412, rel=1e-14)


def test_monod_rejects_negative(params):
    with pytest.raises(DomainError):
        monod(-1e-3, params)
    with pytest.raises(DomainError):
        monod_derivative(-1.0, params)
    with pytest.raises(DomainError):
        monod(np.array([0.1, -0.1]), params)


def test_monod_inverse_examples(params):
    assert monod_inverse(0.0, params) == 0.0
    assert monod_inverse(params.mu_max / 2, params) == pytest.approx(params.k_s, rel=1e-14)
    expected = 0.2 * 0.6 / (math.log(2) - 0.6)
    assert monod_inverse(0.6, params) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(1.288284, abs=1e-6)
    for bad in (params.mu_max, 1.0, -0.1):
        with pytest.raises(DomainError):
            monod_inverse(bad, params)


def test_monod_derivative_examples(params):
    assert monod_derivative(0.0, params) == pytest.approx(params.mu_max / params.k_s)
    assert monod_derivative(1e6, params) < 1e-10 * params.mu_max / params.k_s
    assert monod_derivative(0.2, params) == pytest.approx(math.log(2) * 0.2 / 0.16, rel=1e-14)


@pytest.mark.parametrize("s", [0.01, 0.1, 1.0, 10.0])
def test_monod_derivative_matches_finite_differences(params, s):
    h = 1e-6 * s
    fd = (monod(s + h, params) - monod(s - h, params)) / (2 * h)
    assert monod_derivative(s, params) == pytest.approx(fd, rel=1e-6)


@given(param_sets, st.floats(0.0, 0.999))
def test_monod_inverse_roundtrip(p, frac):
    mu = frac * p.mu_max
    assert monod(monod_inverse(mu, p), p) == pytest.approx(mu, rel=1e-12, abs=1e-15)


@given(param_sets, st.floats(0.0, 100.0), st.floats(1e-6, 10.0))
def test_monod_strictly_increasing_and_bounded(p, s, ds):
    assert monod(s + ds, p) > monod(s, p)
    assert monod(s + ds, p) < p.mu_max


def test_vector_field_examples(params, interior_params):
    assert np.array_equal(vector_field(params.x_in, params), np.zeros(3))
    np.testing.assert_allclose(vector_field([0.0, 1.0, 0.0], params), [0.96, -0.48, 0.0], atol=1e-15)
    eq = equilibria(interior_params)
    np.testing.assert_allclose(vector_field(eq.interior, interior_params), 0.0, atol=1e-15)


def test_conservation_matrix_examples():
    np.testing.assert_allclose(conservation_matrix(ModelParams(alpha=0.3, gamma=1.0)),
                               [[1, 0, 10 / 3], [0, 1, -7 / 3]], rtol=1e-15)
    np.testing.assert_allclose(conservation_matrix(ModelParams(alpha=0.5, gamma=2.0)),
                               [[1, 0, 1], [0, 1, -1]], rtol=1e-15)


@given(param_sets)
def test_conservation_annihilates_stoichiometry(p):
    pi = conservation_matrix(p)
    np.testing.assert_allclose(pi @ p.stoichiometry, 0.0, atol=1e-12)
    assert np.linalg.matrix_rank(pi) == 2


@given(param_sets, st.lists(st.floats(0.0, 3.0), min_size=3, max_size=3))
def test_conservation_dynamics_are_autonomous(p, x):
    # d(Pi x)/dt = d (Pi x_in - Pi x) irrespective of the kinetics
    pi = conservation_matrix(p)
    x = np.array(x)
    np.testing.assert_allclose(pi @ vector_field(x, p), p.d * (pi @ p.x_in - pi @ x), atol=1e-10)


def test_conservation_trajectory_closed_form(params):
    sigma0 = np.array([0.0, 1.0])
    out = conservation_trajectory(sigma0, [0.0, 1.0], params)
    np.testing.assert_allclose(out[0], sigma0)
    pi_xin = conservation_matrix(params) @ params.x_in
    np.testing.assert_allclose(out[1], pi_xin + math.exp(-0.48) * (sigma0 - pi_xin))


def test_equilibria_interior_case(interior_params):
    eq = equilibria(interior_params)
    np.testing.assert_array_equal(eq.washout, [3.0, 0.0, 0.0])
    assert eq.has_interior
    assert eq.s_star == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(eq.interior, [1.0, 1.0, 1.0], atol=1e-12)


def test_equilibria_default_parameters_have_no_interior(params):
    # d/(1-alpha) = 0.6857 exceeds mu(s_in) = 0.6301
    assert params.d / (1 - params.alpha) == pytest.approx(0.48 / 0.7, rel=1e-15)
    eq = equilibria(params)
    assert not eq.has_interior
    assert eq.s_star is None
    np.testing.assert_array_equal(eq.washout, [2.0, 0.0, 0.0])


def test_equilibrium_condition_is_strict():
    # d/(1-alpha) == mu(s_in) exactly: mu(3) = 0.75 with mu_max=1, k_s=1
    p = ModelParams(gamma=1.0, alpha=0.5, s_in=3.0, d=0.375, mu_max=1.0, k_s=1.0)
    assert not equilibria(p).has_interior


@given(param_sets)
@settings(max_examples=50)
def test_vector_field_vanishes_at_equilibria(p):
    eq = equilibria(p)
    np.testing.assert_allclose(vector_field(eq.washout, p), 0.0, atol=1e-12)
    if eq.has_interior:
        assert np.all(eq.interior >= 0)
        np.testing.assert_allclose(vector_field(eq.interior, p), 0.0, atol=1e-10)
