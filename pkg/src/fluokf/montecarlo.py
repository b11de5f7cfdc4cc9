"""Monte Carlo comparison of the CKF, BKF and EKF on a shared truth."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import bkf, ckf, ekf
from .errors import NumericalError
from .hybridkf import FilterOutput, GaussianBelief
from .model import ModelParams, conservation_matrix, equilibria
from .sim import SimConfig, Trajectory, integrate, sample_measurements

logger = logging.getLogger(__name__)

FILTERS = ("ckf", "bkf", "ekf")
COMPONENTS = ("s", "e", "f")


@dataclass(frozen=True)
class FilterSettings:
    """Hyperparameters and initial guesses shared by the three filters.

    ``filter_variance`` overrides the measurement variance assumed by the
    filters; by default they use the variance the data were drawn with.
    """

    x0_guess: tuple = (0.5, 1.5, 0.0)
    sigma1_0: float = 0.5
    beta: float = 0.013
    q_fallback: float = 1e-6
    theta: float = 0.03
    kappa: float = 0.002
    ekf_q: tuple = (0.04, 0.004, 2e-5)
    dt: float = 0.005
    initial_var: tuple = (1.0, 1.0)
    filter_variance: Optional[float] = None

    def initial_cov(self, R: float) -> np.ndarray:
        """Initial ``(s, e, f)`` covariance; the ``f`` variance is the measurement variance."""
        return np.diag([self.initial_var[0], self.initial_var[1], R])


@dataclass
class McConfig:
    params: ModelParams = field(default_factory=ModelParams)
    sim: SimConfig = field(default_factory=SimConfig)
    settings: FilterSettings = field(default_factory=FilterSettings)
    n_replicates: int = 500
    base_seed: int = 0
    filters: tuple = FILTERS
    eps: float = 0.1
    workers: int = 1

    def __post_init__(self):
        if self.n_replicates < 2:
            raise ValueError("n_replicates must be at least 2")
        unknown = set(self.filters) - set(FILTERS)
        if unknown:
            raise ValueError(f"unknown filters: {sorted(unknown)}")


@dataclass
class McSummary:
    """Per-filter statistics at the measurement times.

    ``mean[name]`` and ``se[name]`` have shape ``(M+1, 3)``; the band is
    ``mean +- 2 se``. ``rmse`` and ``t_eps`` are indexed by replicate and
    hold NaN for diverged replicates.
    """

    times: np.ndarray
    truth: np.ndarray
    mean: dict
    se: dict
    rmse: dict
    t_eps: dict
    n_used: dict
    diverged: dict

    def band(self, name: str):
        return self.mean[name] - 2.0 * self.se[name], self.mean[name] + 2.0 * self.se[name]

    def coverage(self, name: str, burn_in: float = 12.0) -> float:
        """Fraction of (time, component) pairs after ``burn_in`` with truth inside the band."""
        lo, hi = self.band(name)
        mask = self.times >= burn_in
        inside = (self.truth[mask] >= lo[mask]) & (self.truth[mask] <= hi[mask])
        return float(np.mean(inside))


def run_filter_by_name(name: str, params: ModelParams, meas, settings: FilterSettings,
                       eq=None) -> FilterOutput:
    """Run one of ``ckf``, ``bkf``, ``ekf`` with the given settings."""
    if settings.filter_variance is not None:
        meas = replace(meas, meas_variance=settings.filter_variance)
    R = meas.meas_variance
    P0 = settings.initial_cov(R)
    if name == "ckf":
        eq = eq if eq is not None else equilibria(params)
        det = ckf.DetectorState(settings.sigma1_0, params, t0=float(meas.times[0]))
        q = ckf.q_schedule(params, eq, meas, settings.q_fallback)
        init = GaussianBelief(np.asarray(settings.x0_guess, dtype=float), P0)
        return ckf.run_ckf(params, meas, init, det, settings.beta, q, dt=settings.dt)
    if name == "bkf":
        prior = bkf.OuPrior(settings.theta, settings.kappa)
        init = bkf.initial_belief(prior, settings.x0_guess, P0)
        return bkf.run_bkf(params, prior, meas, init, dt=settings.dt)
    if name == "ekf":
        init = GaussianBelief(np.asarray(settings.x0_guess, dtype=float), P0)
        cfg = ekf.EkfConfig(tuple(settings.ekf_q), init, settings.dt)
        return ekf.run_ekf(params, cfg, meas)
    raise ValueError(f"unknown filter {name!r}")


def state_estimates(out: FilterOutput) -> np.ndarray:
    """Filtered ``(s, e, f)`` at each measurement time."""
    return out.filt_mean[:, :3]


def convergence_time(estimate: FilterOutput, truth: Trajectory, eps: float = 0.1) -> float:
    """First ``t_k`` after which the estimation error norm stays below ``eps``.

    Returns ``inf`` when the error is still at least ``eps`` at the last
    measurement.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    err = np.linalg.norm(truth.sample_states[: len(estimate)] - state_estimates(estimate), axis=1)
    bad = np.nonzero(err >= eps)[0]
    if len(bad) == 0:
        return float(estimate.times[0])
    if bad[-1] == len(err) - 1:
        return math.inf
    return float(estimate.times[bad[-1] + 1])


def rmse(estimate: FilterOutput, truth: Trajectory) -> float:
    err = truth.sample_states[: len(estimate)] - state_estimates(estimate)
    return float(np.sqrt(np.mean(np.sum(err ** 2, axis=1))))


def _replicate(args):
    config, truth, eq, i = args
    meas = sample_measurements(truth, config.sim, seed=config.base_seed + i)
    results = {}
    for name in config.filters:
        try:
            out = run_filter_by_name(name, config.params, meas, config.settings, eq)
        except NumericalError as exc:
            logger.warning("replicate %d: %s diverged (%s)", i, name, exc)
            results[name] = None
            continue
        results[name] = (state_estimates(out), rmse(out, truth),
                         convergence_time(out, truth, config.eps))
    return results


def run_mc(config: McConfig, truth: Trajectory = None) -> McSummary:
    """Run every selected filter on ``n_replicates`` noisy data sets.

    Replicate ``i`` draws its noise from seed ``base_seed + i``. Diverged
    replicates are excluded from the statistics and counted.
    """
    truth = truth if truth is not None else integrate(config.params, config.sim)
    eq = equilibria(config.params)
    jobs = [(config, truth, eq, i) for i in range(config.n_replicates)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = [_replicate(job) for job in jobs]

    times = truth.sample_times
    mean, se, rmse_, t_eps, n_used, diverged = {}, {}, {}, {}, {}, {}
    for name in config.filters:
        ok = [r[name] for r in results if r[name] is not None]
        n_used[name] = len(ok)
        diverged[name] = config.n_replicates - len(ok)
        rmse_[name] = np.array([r[name][1] if r[name] is not None else np.nan for r in results])
        t_eps[name] = np.array([r[name][2] if r[name] is not None else np.nan for r in results])
        if len(ok) >= 2:
            stack = np.stack([r[0] for r in ok])
            mean[name] = stack.mean(axis=0)
            se[name] = stack.std(axis=0, ddof=1) / math.sqrt(len(ok))
        else:
            mean[name] = np.full((len(times), 3), np.nan)
            se[name] = np.full((len(times), 3), np.nan)
    return McSummary(times=times, truth=truth.sample_states, mean=mean, se=se,
                     rmse=rmse_, t_eps=t_eps, n_used=n_used, diverged=diverged)
