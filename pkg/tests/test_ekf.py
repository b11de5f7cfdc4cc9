import numpy as np
import pytest

from fluokf.ekf import EkfConfig, GrowthLaw, jacobian, q_nll, run_ekf
from fluokf.errors import DomainError, FilterDivergedError
from fluokf.hybridkf import GaussianBelief, LtvSystem, run_filter
from fluokf.model import ModelParams, equilibria, monod, vector_field
from fluokf.sim import MeasurementSeries
from oracles import central_difference


def fd_jacobian(x, params):
    return central_difference(lambda z: vector_field(z, params), np.asarray(x, dtype=float))


def test_jacobian_matches_finite_differences_at_reference_state(params):
    x = np.array([1.0, 1.0, 0.3])
    np.testing.assert_allclose(jacobian(x, params), fd_jacobian(x, params), rtol=1e-6, atol=1e-9)


def test_jacobian_on_random_states(params):
    rng = np.random.default_rng(4)
    for x in rng.uniform(0.0, 2.0, size=(20, 3)):
        J, J_fd = jacobian(x, params), fd_jacobian(x, params)
        assert np.max(np.abs(J - J_fd)) <= 1e-6 * max(np.max(np.abs(J_fd)), 1.0)


def test_jacobian_without_biomass(params):
    s = 0.7
    mu = monod(s, params)
    d, a = params.d, params.alpha
    expected = [[-d, -mu / params.gamma, 0.0], [0.0, (1 - a) * mu - d, 0.0], [0.0, a * mu, -d]]
    np.testing.assert_allclose(jacobian([s, 0.0, 0.4], params), expected, atol=1e-15)


def test_jacobian_at_interior_equilibrium(interior_params):
    eq = equilibria(interior_params)
    assert jacobian(eq.interior, interior_params)[1, 1] == pytest.approx(0.0, abs=1e-14)


def test_jacobian_rejects_negative_substrate(params):
    with pytest.raises(DomainError):
        jacobian([-0.1, 1.0, 0.0], params)


def test_config_validation():
    init = GaussianBelief(np.zeros(3), np.eye(3))
    with pytest.raises(ValueError):
        EkfConfig((1.0, -1.0, 0.0), init)
    with pytest.raises(ValueError):
        EkfConfig((1.0, 1.0), init)


def test_constant_growth_equals_linear_kf(params, noisy):
    mu = 0.5
    a, g, d = params.alpha, params.gamma, params.d
    q = (1e-3, 2e-3, 1e-5)
    init = GaussianBelief([0.5, 1.5, 0.0], np.diag([1.0, 1.0, 1e-4]))
    sys = LtvSystem(
        A=[[-d, -mu / g, 0.0], [0.0, (1 - a) * mu - d, 0.0], [0.0, a * mu, -d]],
        b=[d * params.s_in, 0.0, 0.0], G=np.eye(3), Q=np.diag(q),
        C=[[0.0, 0.0, 1.0]], R=[[noisy.meas_variance]],
    )
    data = noisy.head(120)
    kf = run_filter(sys, data, init)
    ekf = run_ekf(params, EkfConfig(q, init), data, law=GrowthLaw.constant(mu))
    assert np.all(kf.filt_mean[:, 0] > 0)  # clamp never engaged
    np.testing.assert_allclose(ekf.filt_mean, kf.filt_mean, atol=1e-8)
    np.testing.assert_allclose(ekf.filt_cov, kf.filt_cov, atol=1e-8)


def test_exact_start_noiseless_tracks_truth(params, truth, sim_config):
    R = 1e-12
    meas = MeasurementSeries(truth.sample_times, truth.sample_states[:, 2], R)
    init = GaussianBelief(truth.sample_states[0], np.zeros((3, 3)))
    out = run_ekf(params, EkfConfig((0.0, 0.0, 0.0), init), meas)
    np.testing.assert_allclose(out.filt_mean, truth.sample_states, atol=1e-8)


def test_converges_with_reference_noise_levels(params, noisy, truth):
    init = GaussianBelief([0.5, 1.5, 0.0], np.diag([1.0, 1.0, 1e-4]))
    out = run_ekf(params, EkfConfig((0.04, 0.004, 2e-5), init), noisy)
    late = noisy.times >= 12
    err = np.abs(out.filt_mean[late] - truth.sample_states[late])
    assert np.max(err[:, 0]) < 0.2 and np.max(err[:, 1]) < 0.2
    for P in out.filt_cov:
        np.testing.assert_allclose(P, P.T, atol=1e-14)
        assert np.min(np.linalg.eigvalsh(P)) > -1e-12


def test_substrate_clamped_after_update(params):
    # a huge positive innovation on f pulls s below zero through the prior correlation
    init = GaussianBelief([0.01, 1.0, 0.0], np.array([[1.0, 0.0, 0.9], [0.0, 1.0, 0.0], [0.9, 0.0, 1.0]]))
    meas = MeasurementSeries([0.0], [-5.0], 1e-4)
    out = run_ekf(params, EkfConfig((0.0, 0.0, 0.0), init), meas)
    assert out.filt_mean[0, 0] == 0.0


def test_divergence_reports_partial_output():
    params = ModelParams(mu_max=50.0, k_s=1e-3, d=0.01)
    init = GaussianBelief([2.0, 1.0, 0.0], np.diag([1e6, 1e6, 1e-4]))
    meas = MeasurementSeries([0.0, 40.0], [0.0, 1e6], 1e-4)
    with pytest.raises(FilterDivergedError) as info:
        run_ekf(params, EkfConfig((1e3, 1e3, 1e3), init, dt=2.0), meas)
    assert info.value.partial is not None


def test_q_nll_finite_and_inf(params, noisy):
    init = GaussianBelief([0.5, 1.5, 0.0], np.diag([1.0, 1.0, 1e-4]))
    nll = q_nll(params, noisy.head(24), init)
    assert np.isfinite(nll([1e-3, 1e-3, 1e-5]))
    assert nll([-1.0, 0.0, 0.0]) == np.inf
