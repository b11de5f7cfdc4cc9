"""Conservation Kalman filter.

Pipeline per sampling interval ``[t_k, t_{k+1})``:

1. open-loop detector for the first conservation variable ``sigma_1``;
2. Kalman pre-smoothing of the fluorescence data with a double-integrator
   prior, giving ``y_hat(t)``;
3. substrate pre-estimate ``s_sigma = sigma_1_hat - y_hat / (alpha gamma)``
   and growth-rate pre-estimate ``mu_hat = monod(s_sigma)``;
4. linear Kalman filtering of the model with ``mu`` replaced by ``mu_hat``.

Only data up to ``t_k`` enter the pre-estimates on ``[t_k, t_{k+1})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import FilterDivergedError, SingularInnovationError
from .hybridkf import FilterOutput, GaussianBelief, LtvSystem, _Recorder, predict, update
from .model import Equilibria, ModelParams, equilibria, monod, monod_derivative
from .sim import MeasurementSeries

OUTPUT_MATRIX = np.array([[0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class DetectorState:
    sigma1_0: float
    params: ModelParams
    t0: float = 0.0

    def __post_init__(self):
        if self.sigma1_0 < 0:
            raise ValueError("sigma1_0 must be nonnegative")


def detector(det: DetectorState, t):
    """Analytic open-loop estimate of ``sigma_1 = s + f / (alpha gamma)``."""
    p = det.params
    return p.s_in + np.exp(-p.d * (np.asarray(t, dtype=float) - det.t0)) * (det.sigma1_0 - p.s_in)


# --- pre-smoothing -------------------------------------------------------

def presmoother_system(beta: float, R: float) -> LtvSystem:
    """Double integrator ``d2y/dt2 = beta w`` observed through ``C = (1, 0)``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    return LtvSystem(
        A=np.array([[0.0, 1.0], [0.0, 0.0]]),
        b=np.zeros(2),
        G=np.array([[0.0], [beta]]),
        Q=np.array([[1.0]]),
        C=np.array([[1.0, 0.0]]),
        R=np.array([[R]]),
    )


def presmoother_init(y0: float, R: float) -> GaussianBelief:
    return GaussianBelief(np.array([y0, 0.0]), np.diag([R, 1.0]))


@dataclass(frozen=True)
class LinearTrack:
    """Mean prediction ``level + slope (t - t_ref)`` of the pre-smoother."""

    t_ref: float
    level: float
    slope: float

    def __call__(self, t):
        return self.level + self.slope * (t - self.t_ref)


def presmooth_step(belief: GaussianBelief, sys: LtvSystem, t_prev: float, t_k: float,
                   y_k: float, dt: Optional[float] = None):
    """One pre-smoother cycle from the filtered belief at ``t_prev``.

    Returns ``(track, predicted, filtered, innovation, S)`` where ``track``
    is the mean prediction of ``y`` valid on ``[t_prev, t_k)``. The double
    integrator covariance is cubic in time, so a single RK4 step is exact
    and is the default.
    """
    track = LinearTrack(t_prev, float(belief.mean[0]), float(belief.mean[1]))
    pred = predict(belief, sys, t_prev, t_k, dt if dt is not None else t_k - t_prev)
    filt, innov, S = update(pred, sys, y_k)
    return track, pred, filt, innov, S


def run_presmoother(meas: MeasurementSeries, beta: float,
                    init: Optional[GaussianBelief] = None) -> FilterOutput:
    sys = presmoother_system(beta, meas.meas_variance)
    belief = init if init is not None else presmoother_init(meas.values[0], meas.meas_variance)
    rec = _Recorder(belief)
    try:
        filt, innov, S = update(belief, sys, meas.values[0])
        rec.add(meas.times[0], belief, filt, innov, S)
        for k in range(1, len(meas)):
            _, pred, filt, innov, S = presmooth_step(filt, sys, meas.times[k - 1],
                                                     meas.times[k], meas.values[k])
            rec.add(meas.times[k], pred, filt, innov, S)
    except (FilterDivergedError, SingularInnovationError) as exc:
        raise FilterDivergedError(str(exc), partial=rec.output()) from exc
    return rec.output()


# --- growth-rate pre-estimation ------------------------------------------

def pre_estimate_mu(det: DetectorState, t, yhat, params: ModelParams):
    """Return ``(s_sigma, mu_hat)`` at time(s) ``t`` given smoothed output ``yhat``.

    Negative substrate pre-estimates are clamped to zero before the Monod
    law is applied.
    """
    s_sigma = np.maximum(detector(det, t) - np.asarray(yhat) / (params.alpha * params.gamma), 0.0)
    mu = monod(s_sigma, params)
    if np.ndim(s_sigma) == 0:
        return float(s_sigma), float(mu)
    return s_sigma, mu


@dataclass
class MuSchedule:
    """Piecewise growth-rate pre-estimate, one smoothed track per interval."""

    det: DetectorState
    params: ModelParams
    starts: list = field(default_factory=list)
    tracks: list = field(default_factory=list)

    def append(self, track: LinearTrack):
        self.starts.append(track.t_ref)
        self.tracks.append(track)

    def __call__(self, t: float) -> float:
        k = max(0, int(np.searchsorted(self.starts, t, side="right")) - 1)
        return pre_estimate_mu(self.det, t, self.tracks[k](t), self.params)[1]


def _growth_on_track(det: DetectorState, track: LinearTrack):
    """Fast scalar ``mu_hat(t)`` for a single interval."""
    p = det.params
    scale = 1.0 / (p.alpha * p.gamma)

    def mu_hat(t):
        s = p.s_in + math.exp(-p.d * (t - det.t0)) * (det.sigma1_0 - p.s_in) - scale * track(t)
        if s <= 0.0:
            return 0.0
        return p.mu_max * s / (p.k_s + s)

    return mu_hat


# --- process-noise schedule ----------------------------------------------

@dataclass
class QSchedule:
    values: np.ndarray
    fallback: float
    uses_fallback: bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 0) or self.fallback < 0:
            raise ValueError("process-noise intensities must be nonnegative")

    def value(self, k: int) -> float:
        return float(self.values[k]) if len(self.values) else self.fallback


def q_schedule(params: ModelParams, eq: Equilibria, meas: MeasurementSeries,
               fallback: float) -> QSchedule:
    """Piecewise-constant process-noise intensity for the pre-estimated model.

    Near the interior equilibrium the growth-rate error is driven by the
    measurement noise, giving ``(mu'(s*) e* / (alpha gamma))^2 R dt_k`` on
    each interval. Without an interior equilibrium (or with ``e* = 0``)
    the constant ``fallback`` is used on every interval.
    """
    n_int = max(len(meas) - 1, 0)
    if eq.has_interior and eq.interior[1] > 0:
        gain = monod_derivative(eq.s_star, params) * eq.interior[1] / (params.alpha * params.gamma)
        values = gain ** 2 * meas.meas_variance * np.diff(meas.times)
        if np.all(values > 0):
            return QSchedule(values=values, fallback=fallback, uses_fallback=False)
    return QSchedule(values=np.full(n_int, float(fallback)), fallback=fallback, uses_fallback=True)


# --- the filter ------------------------------------------------------------

def pre_estimated_system(params: ModelParams, mu_hat, q: float, R: float) -> LtvSystem:
    """Linear time-varying model with the growth rate replaced by ``mu_hat(t)``."""
    a, g, d = params.alpha, params.gamma, params.d

    def A(t):
        mu = mu_hat(t)
        return np.array([
            [-d, -mu / g, 0.0],
            [0.0, (1.0 - a) * mu - d, 0.0],
            [0.0, a * mu, -d],
        ])

    return LtvSystem(
        A=A,
        b=np.array([d * params.s_in, 0.0, 0.0]),
        G=params.stoichiometry.reshape(3, 1),
        Q=np.array([[q]]),
        C=OUTPUT_MATRIX,
        R=np.array([[R]]),
    )


def default_init(x0_guess, R: float) -> GaussianBelief:
    return GaussianBelief(np.asarray(x0_guess, dtype=float), np.diag([1.0, 1.0, R]))


@dataclass
class CkfOutput(FilterOutput):
    """Filter history plus the pre-pipeline signals at each ``t_k``.

    ``yhat``, ``s_sigma`` and ``mu_hat`` are the values that start the
    interval ``[t_k, t_{k+1})``.
    """

    sigma1: Optional[np.ndarray] = None
    yhat: Optional[np.ndarray] = None
    s_sigma: Optional[np.ndarray] = None
    mu_hat: Optional[np.ndarray] = None
    presmoother: Optional[FilterOutput] = None
    mu_schedule: Optional[MuSchedule] = None


def run_ckf(params: ModelParams, meas: MeasurementSeries, init: GaussianBelief,
            det: DetectorState, beta: float, q: QSchedule, dt: float = 0.005,
            dense: bool = False) -> CkfOutput:
    """Run the conservation KF pipeline over a measurement series."""
    R = meas.meas_variance
    ps_sys = presmoother_system(beta, R)
    y0 = meas.values[0] if len(meas) else 0.0
    ps_rec = _Recorder(presmoother_init(y0, R))
    rec = _Recorder(init, keep_dense=dense)
    pre = {"sigma1": [], "yhat": [], "s_sigma": [], "mu_hat": []}
    schedule = MuSchedule(det, params)

    def extra():
        arrays = {k: np.array(v) for k, v in pre.items()}
        return dict(presmoother=ps_rec.output(), mu_schedule=schedule, **arrays)

    def record_pre(t, yhat):
        s_sig, mu = pre_estimate_mu(det, t, yhat, params)
        pre["sigma1"].append(float(detector(det, t)))
        pre["yhat"].append(float(yhat))
        pre["s_sigma"].append(s_sig)
        pre["mu_hat"].append(mu)

    try:
        if len(meas) == 0:
            return rec.output(CkfOutput, **extra())
        ps_belief = ps_rec.init
        ps_filt, nu, S = update(ps_belief, ps_sys, meas.values[0])
        ps_rec.add(meas.times[0], ps_belief, ps_filt, nu, S)
        belief, innov, S = update(init, _static_output_system(R), meas.values[0])
        rec.add(meas.times[0], init, belief, innov, S)
        record_pre(meas.times[0], ps_filt.mean[0])

        for k in range(len(meas) - 1):
            t_a, t_b = meas.times[k], meas.times[k + 1]
            track = LinearTrack(t_a, float(ps_filt.mean[0]), float(ps_filt.mean[1]))
            schedule.append(track)
            sys = pre_estimated_system(params, _growth_on_track(det, track), q.value(k), R)
            if dense:
                pred, grid = predict(belief, sys, t_a, t_b, dt, dense=True)
                rec.add_dense(grid)
            else:
                pred = predict(belief, sys, t_a, t_b, dt)
            belief, innov, S = update(pred, sys, meas.values[k + 1])
            rec.add(t_b, pred, belief, innov, S)

            _, ps_pred, ps_filt, nu, S_ps = presmooth_step(ps_filt, ps_sys, t_a, t_b,
                                                           meas.values[k + 1])
            ps_rec.add(t_b, ps_pred, ps_filt, nu, S_ps)
            record_pre(t_b, ps_filt.mean[0])
    except (FilterDivergedError, SingularInnovationError) as exc:
        raise FilterDivergedError(str(exc), partial=rec.output(CkfOutput, **extra())) from exc
    return rec.output(CkfOutput, **extra())


def _static_output_system(R: float) -> LtvSystem:
    return LtvSystem(A=np.zeros((3, 3)), b=np.zeros(3), G=np.zeros((3, 1)),
                     Q=np.zeros((1, 1)), C=OUTPUT_MATRIX, R=np.array([[R]]))


# --- asymptotic analysis ---------------------------------------------------

def limit_growth_rate(params: ModelParams) -> float:
    """Growth rate ``d / (1 - alpha)`` reached by ``mu_hat`` at steady state."""
    return params.d / (1.0 - params.alpha)


def limit_matrix(params: ModelParams) -> np.ndarray:
    """Constant drift matrix the pre-estimated model converges to."""
    mu = limit_growth_rate(params)
    d, g, a = params.d, params.gamma, params.alpha
    return np.array([
        [-d, -mu / g, 0.0],
        [0.0, 0.0, 0.0],
        [0.0, a * mu, -d],
    ])


def limit_transition(params: ModelParams, dt: float) -> np.ndarray:
    """Closed-form ``expm(limit_matrix * dt)``."""
    mu = limit_growth_rate(params)
    d, g, a = params.d, params.gamma, params.alpha
    decay = math.exp(-d * dt)
    ramp = (1.0 - decay) / d
    return np.array([
        [decay, -(mu / g) * ramp, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, a * mu * ramp, decay],
    ])


def detectability_gain(params: ModelParams, dt: float) -> np.ndarray:
    """Output-injection gain placing ``F - K C`` at ``{e^-d dt, (1 +- e^-d dt/2)/2}``."""
    a = params.alpha
    return np.array([0.0, (1.0 - a) / (4.0 * a), math.exp(-params.d * dt)])


def stabilizing_gain(params: ModelParams, noise_gain: float) -> np.ndarray:
    """Feedback gain zeroing the biomass row of ``F - N G K^T``.

    With ``G = noise_gain`` the closed-loop spectrum is
    ``{e^-d dt, 0, e^-d dt}`` for every step ``dt``.
    """
    return np.array([0.0, 1.0 / (noise_gain * (1.0 - params.alpha)), 0.0])


# --- likelihood objectives -----------------------------------------------

def presmoother_problem(meas: MeasurementSeries):
    """ML problem for the smoothing intensity ``beta``."""
    from .likelihood import TuningProblem

    R = meas.meas_variance
    return TuningProblem(
        builder=lambda theta: presmoother_system(float(theta[0]), R),
        data=meas,
        init=presmoother_init(meas.values[0], R),
        dt=float(np.max(np.diff(meas.times))) if len(meas) > 1 else 1.0,
    )


def fallback_q_nll(params: ModelParams, meas: MeasurementSeries, init: GaussianBelief,
                   det: DetectorState, beta: float, dt: float = 0.005):
    """NLL of the CKF innovations as a function of a constant process-noise intensity."""
    from .likelihood import output_nll

    n_int = max(len(meas) - 1, 0)

    def nll(theta):
        q = QSchedule(np.full(n_int, float(theta[0])), float(theta[0]), True)
        try:
            return output_nll(run_ckf(params, meas, init, det, beta, q, dt=dt))
        except (FilterDivergedError, ValueError, np.linalg.LinAlgError):
            return np.inf

    return nll
