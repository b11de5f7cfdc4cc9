"""Continuous-discrete extended Kalman filter on the nonlinear growth model.

Used as the reference estimator. The mean follows the full nonlinear ODE;
the covariance follows the Riccati equation linearized along the mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import FilterDivergedError, SingularInnovationError
from .hybridkf import FilterOutput, GaussianBelief, LtvSystem, _Recorder, update
from .model import ModelParams, monod, monod_derivative
from .sim import MeasurementSeries, substeps

OUTPUT_MATRIX = np.array([[0.0, 0.0, 1.0]])


@dataclass
class EkfConfig:
    q_diag: tuple
    init: GaussianBelief
    dt: float = 0.005

    def __post_init__(self):
        q = np.asarray(self.q_diag, dtype=float)
        if q.shape != (3,) or np.any(q < 0):
            raise ValueError("q_diag must hold three nonnegative intensities")


@dataclass(frozen=True)
class GrowthLaw:
    """Specific growth rate and its derivative in ``s``."""

    rate: Callable[[float], float]
    slope: Callable[[float], float]

    @classmethod
    def monod(cls, params: ModelParams) -> "GrowthLaw":
        return cls(lambda s: monod(s, params), lambda s: monod_derivative(s, params))

    @classmethod
    def constant(cls, mu: float) -> "GrowthLaw":
        return cls(lambda s: mu, lambda s: 0.0)


def jacobian(x, params: ModelParams, law: Optional[GrowthLaw] = None) -> np.ndarray:
    """Jacobian of the growth-model vector field with respect to ``(s, e, f)``."""
    law = law or GrowthLaw.monod(params)
    s, e, _ = x
    mu, dmu = law.rate(s), law.slope(s)
    a, g, d = params.alpha, params.gamma, params.d
    return np.array([
        [-dmu * e / g - d, -mu / g, 0.0],
        [(1.0 - a) * dmu * e, (1.0 - a) * mu - d, 0.0],
        [a * dmu * e, a * mu, -d],
    ])


def _drift(x, params: ModelParams, law: GrowthLaw):
    s, e, f = x
    mu = law.rate(s)
    a, d = params.alpha, params.d
    return np.array([
        -mu * e / params.gamma + d * (params.s_in - s),
        (1.0 - a) * mu * e - d * e,
        a * mu * e - d * f,
    ])


def _ekf_predict(belief: GaussianBelief, params, law, W, t_from, t_to, dt):
    n_steps = substeps(t_to - t_from, dt)
    h = (t_to - t_from) / n_steps
    x, P = belief.mean.copy(), belief.cov.copy()

    def rhs(x, P):
        J = jacobian(x, params, law)
        JP = J @ P
        return _drift(x, params, law), JP + JP.T + W

    for _ in range(n_steps):
        k1x, k1P = rhs(x, P)
        k2x, k2P = rhs(x + 0.5 * h * k1x, P + 0.5 * h * k1P)
        k3x, k3P = rhs(x + 0.5 * h * k2x, P + 0.5 * h * k2P)
        k4x, k4P = rhs(x + h * k3x, P + h * k3P)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        P = P + (h / 6.0) * (k1P + 2.0 * k2P + 2.0 * k3P + k4P)
        P = 0.5 * (P + P.T)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(P))):
            raise FilterDivergedError(f"EKF prediction diverged before t={t_to:g}")
    return GaussianBelief(x, P)


def run_ekf(params: ModelParams, config: EkfConfig, meas: MeasurementSeries,
            law: Optional[GrowthLaw] = None) -> FilterOutput:
    """Run the EKF; the substrate estimate is clamped at zero after each update."""
    law = law or GrowthLaw.monod(params)
    W = np.diag(np.asarray(config.q_diag, dtype=float))
    out_sys = LtvSystem(A=np.zeros((3, 3)), b=np.zeros(3), G=np.eye(3), Q=W,
                        C=OUTPUT_MATRIX, R=np.array([[meas.meas_variance]]))
    rec = _Recorder(config.init)
    belief = config.init
    t_prev = None
    try:
        for t, y in zip(meas.times, meas.values):
            if t_prev is not None:
                belief = _ekf_predict(belief, params, law, W, t_prev, t, config.dt)
            pred = belief
            belief, innov, S = update(pred, out_sys, y)
            if belief.mean[0] < 0:
                mean = belief.mean.copy()
                mean[0] = 0.0
                belief = GaussianBelief(mean, belief.cov)
            rec.add(t, pred, belief, innov, S)
            t_prev = t
    except (FilterDivergedError, SingularInnovationError, ValueError) as exc:
        raise FilterDivergedError(str(exc), partial=rec.output()) from exc
    return rec.output()


def q_nll(params: ModelParams, meas: MeasurementSeries, init: GaussianBelief, dt: float = 0.005):
    """NLL of the EKF innovations as a function of the diagonal process noise."""
    from .likelihood import output_nll

    def nll(theta):
        try:
            return output_nll(run_ekf(params, EkfConfig(tuple(theta), init, dt), meas))
        except (FilterDivergedError, ValueError, np.linalg.LinAlgError):
            return np.inf

    return nll
