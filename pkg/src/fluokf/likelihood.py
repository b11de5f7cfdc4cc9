"""Maximum-likelihood tuning of filter hyperparameters.

The data likelihood factorizes into the one-step-ahead Gaussian predictive
densities produced by the Kalman filter, so each candidate parameter vector
costs one filter pass.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import scipy.optimize

from .errors import NumericalError
from .hybridkf import FilterOutput, GaussianBelief, LtvSystem, run_filter
from .sim import MeasurementSeries

logger = logging.getLogger(__name__)

LOG_BOUNDS = (1e-6, 1e3)


@dataclass
class TuningProblem:
    """Parameterized filter whose hyperparameters are fitted by ML.

    ``builder`` maps a parameter vector to an ``LtvSystem``. ``init`` is
    either a fixed prior or a callable of the same parameter vector, for
    priors that depend on the hyperparameters.
    """

    builder: Callable[[np.ndarray], LtvSystem]
    data: MeasurementSeries
    init: Union[GaussianBelief, Callable[[np.ndarray], GaussianBelief]]
    bounds: Sequence[tuple] = None
    dt: float = 0.005

    def initial_belief(self, theta) -> GaussianBelief:
        return self.init(theta) if callable(self.init) else self.init


@dataclass
class TuneResult:
    theta: np.ndarray
    nll: float
    converged: bool
    n_evals: int
    nll_initial: float


def innovation_nll(innovations, innovation_vars) -> float:
    """Negative log-likelihood from innovations and their covariances."""
    total = 0.0
    for nu, S in zip(innovations, innovation_vars):
        nu = np.atleast_1d(nu)
        S = np.atleast_2d(S)
        sign, logdet = np.linalg.slogdet(S)
        if sign <= 0:
            return np.inf
        total += nu.size * np.log(2.0 * np.pi) + logdet + nu @ np.linalg.solve(S, nu)
    return 0.5 * float(total)


def output_nll(out: FilterOutput) -> float:
    return innovation_nll(out.innovations, out.innovation_vars)


def negative_log_likelihood(problem: TuningProblem, theta) -> float:
    """Prediction-error NLL of ``problem.data`` at ``theta``.

    Divergent filters map to ``+inf`` so the optimizer can keep going.
    """
    theta = np.asarray(theta, dtype=float)
    try:
        out = run_filter(problem.builder(theta), problem.data,
                         problem.initial_belief(theta), dt=problem.dt)
    except (NumericalError, np.linalg.LinAlgError, ValueError, FloatingPointError):
        return np.inf
    value = output_nll(out)
    return value if np.isfinite(value) else np.inf


def minimize_nll(nll: Callable[[np.ndarray], float], theta0, bounds=None,
                 max_evals: int = 2000, fatol: float = 1e-8, xatol: float = 1e-6,
                 log_step: float = 0.5) -> TuneResult:
    """Nelder-Mead in log-parameter space with box bounds.

    Positivity is enforced by optimizing ``log(theta)``. The returned point
    never has a higher NLL than ``theta0``.
    """
    theta0 = np.asarray(theta0, dtype=float).reshape(-1)
    if np.any(theta0 <= 0):
        raise ValueError("initial parameters must be positive")
    if bounds is None:
        bounds = [LOG_BOUNDS] * theta0.size
    log_bounds = [(np.log(lo), np.log(hi)) for lo, hi in bounds]
    z0 = np.clip(np.log(theta0), [b[0] for b in log_bounds], [b[1] for b in log_bounds])

    cache = {}

    def objective(z):
        key = tuple(np.round(z, 14))
        if key not in cache:
            cache[key] = nll(np.exp(z))
        value = cache[key]
        return value if np.isfinite(value) else 1e300

    simplex = np.vstack([z0] + [z0 + log_step * np.eye(z0.size)[i] for i in range(z0.size)])
    simplex = np.clip(simplex, [b[0] for b in log_bounds], [b[1] for b in log_bounds])
    nll0 = objective(z0)
    res = scipy.optimize.minimize(
        objective, z0, method="Nelder-Mead", bounds=log_bounds,
        options=dict(maxfev=max_evals, fatol=fatol, xatol=xatol,
                     initial_simplex=simplex, adaptive=False),
    )
    converged = bool(res.success)
    if not converged:
        warnings.warn(f"Nelder-Mead stopped before convergence: {res.message}", RuntimeWarning)
    if res.fun <= nll0:
        theta_hat, nll_hat = np.exp(res.x), float(res.fun)
    else:
        theta_hat, nll_hat = theta0.copy(), float(nll0)
    logger.info("tuned theta=%s nll=%.6f evals=%d", theta_hat, nll_hat, res.nfev)
    return TuneResult(theta=theta_hat, nll=nll_hat, converged=converged,
                      n_evals=int(res.nfev), nll_initial=float(nll0))


def tune(problem: TuningProblem, theta0, **kwargs) -> TuneResult:
    return minimize_nll(lambda th: negative_log_likelihood(problem, th), theta0,
                        bounds=problem.bounds, **kwargs)
