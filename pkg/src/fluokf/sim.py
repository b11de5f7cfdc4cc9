"""Ground-truth simulation and noisy fluorescence sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IntegrationDivergedError
from .model import ModelParams, vector_field


@dataclass(frozen=True)
class SimConfig:
    t0: float = 0.0
    t_end: float = 36.0
    dt_integ: float = 0.005
    sample_interval: float = 1.0 / 12.0
    x0: tuple = (0.0, 1.0, 0.0)
    meas_variance: float = 1e-4
    rng_seed: int = 0

    def __post_init__(self):
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")
        if not 0 < self.dt_integ <= self.sample_interval:
            raise ValueError("need 0 < dt_integ <= sample_interval")
        ratio = (self.t_end - self.t0) / self.sample_interval
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("sample_interval must divide t_end - t0")
        if self.meas_variance < 0:
            raise ValueError("meas_variance must be nonnegative")
        if len(self.x0) != 3:
            raise ValueError("x0 must have three components")

    @property
    def n_intervals(self) -> int:
        return int(round((self.t_end - self.t0) / self.sample_interval))

    @property
    def sample_times(self) -> np.ndarray:
        return self.t0 + self.sample_interval * np.arange(self.n_intervals + 1)


@dataclass
class MeasurementSeries:
    times: np.ndarray
    values: np.ndarray
    meas_variance: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-D and of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("measurement times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("measurement values must be finite")

    def __len__(self):
        return len(self.times)

    def head(self, n: int) -> "MeasurementSeries":
        return MeasurementSeries(self.times[:n], self.values[:n], self.meas_variance)


@dataclass
class Trajectory:
    """Dense truth grid.

    ``sample_index[k]`` is the grid row holding the state at the k-th
    sample time.
    """

    times: np.ndarray
    states: np.ndarray
    sample_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def sample_times(self) -> np.ndarray:
        return self.times[self.sample_index]

    @property
    def sample_states(self) -> np.ndarray:
        return self.states[self.sample_index]


def rk4_step(rhs, t, x, h):
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def substeps(span: float, dt: float) -> int:
    """Smallest number of equal steps of size <= ``dt`` covering ``span``."""
    return max(1, math.ceil(span / dt - 1e-9))


def integrate(params: ModelParams, config: SimConfig) -> Trajectory:
    """Integrate the growth model with classical fixed-step RK4.

    Each sampling interval is split into the fewest equal steps not longer
    than ``config.dt_integ``, so every sample time is a grid point.
    """
    rhs = lambda t, x: vector_field(x, params)
    n_sub = substeps(config.sample_interval, config.dt_integ)
    sample_times = config.sample_times
    n_int = len(sample_times) - 1

    times = np.empty(n_int * n_sub + 1)
    states = np.empty((n_int * n_sub + 1, 3))
    x = np.asarray(config.x0, dtype=float)
    times[0], states[0] = sample_times[0], x
    row = 0
    for k in range(n_int):
        t_a, t_b = sample_times[k], sample_times[k + 1]
        h = (t_b - t_a) / n_sub
        for j in range(n_sub):
            try:
                x = rk4_step(rhs, t_a + j * h, x, h)
            except DomainError as exc:
                raise IntegrationDivergedError(f"left the model domain near t={t_a:g}: {exc}") from exc
            row += 1
            times[row] = t_a + (j + 1) * h
            states[row] = x
        times[row] = t_b
        if not np.all(np.isfinite(x)):
            raise IntegrationDivergedError(f"non-finite state at t={t_b:g}")
    return Trajectory(times=times, states=states, sample_index=np.arange(n_int + 1) * n_sub)


def sample_measurements(traj: Trajectory, config: SimConfig, seed=None) -> MeasurementSeries:
    """Noisy fluorescence samples ``y_k = f(t_k) + v_k`` with ``v_k ~ N(0, R)``.

    ``seed`` overrides ``config.rng_seed``; the generator is local to the call.
    """
    rng = np.random.default_rng(config.rng_seed if seed is None else seed)
    f = traj.sample_states[:, 2]
    noise = rng.standard_normal(len(f)) * math.sqrt(config.meas_variance)
    return MeasurementSeries(traj.sample_times.copy(), f + noise, config.meas_variance)
