"""Bayesian KF: unknown growth law handled by an Ornstein-Uhlenbeck prior.

The total reaction rate ``r(t) = mu e`` is appended to the state and given
the prior ``dr = -theta r dt + kappa dW``. The joint system is linear and
time-invariant, so the hybrid KF applies without any linearization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .hybridkf import FilterOutput, GaussianBelief, LtvSystem, run_filter
from .model import ModelParams
from .sim import MeasurementSeries


@dataclass(frozen=True)
class OuPrior:
    theta: float
    kappa: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")

    @property
    def stationary_variance(self) -> float:
        return self.kappa ** 2 / (2.0 * self.theta)


def build_augmented_system(params: ModelParams, prior: OuPrior, R: float = 1e-4) -> LtvSystem:
    """Joint ``(s, e, f, r)`` system with drift ``[[-d I, N], [0, -theta]]``."""
    A = np.zeros((4, 4))
    A[:3, :3] = -params.d * np.eye(3)
    A[:3, 3] = params.stoichiometry
    A[3, 3] = -prior.theta
    return LtvSystem(
        A=A,
        b=np.array([params.d * params.s_in, 0.0, 0.0, 0.0]),
        G=np.array([[0.0], [0.0], [0.0], [prior.kappa]]),
        Q=np.array([[1.0]]),
        C=np.array([[0.0, 0.0, 1.0, 0.0]]),
        R=np.array([[R]]),
    )


def initial_belief(prior: OuPrior, x0_guess, P0) -> GaussianBelief:
    """Zero-mean stationary start for ``r`` with no cross-covariance."""
    mean = np.append(np.asarray(x0_guess, dtype=float), 0.0)
    cov = scipy.linalg.block_diag(np.asarray(P0, dtype=float), [[prior.stationary_variance]])
    return GaussianBelief(mean, cov)


def run_bkf(params: ModelParams, prior: OuPrior, meas: MeasurementSeries,
            init: GaussianBelief, dt: float = 0.005, dense: bool = False) -> FilterOutput:
    sys = build_augmented_system(params, prior, meas.meas_variance)
    return run_filter(sys, meas, init, dt=dt, dense=dense)


def tuning_problem(params: ModelParams, meas: MeasurementSeries, x0_guess, P0, dt: float = 0.005):
    """ML problem over ``(theta, kappa)``; the stationary prior on ``r`` moves with them."""
    from .likelihood import TuningProblem

    R = meas.meas_variance
    return TuningProblem(
        builder=lambda th: build_augmented_system(params, OuPrior(th[0], th[1]), R),
        data=meas,
        init=lambda th: initial_belief(OuPrior(th[0], th[1]), x0_guess, P0),
        dt=dt,
    )
