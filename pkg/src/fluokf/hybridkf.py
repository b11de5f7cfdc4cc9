"""Continuous-discrete Kalman filtering for linear time-varying systems.

The state obeys ``dx/dt = A(t) x + b(t) + G(t) w(t)`` with white noise of
intensity ``Q(t)``; measurements ``y_k = C x(t_k) + v_k`` arrive at discrete
times with ``v_k ~ N(0, R)``. Between measurements the mean and the Riccati
equation for the covariance are integrated with fixed-step RK4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg

from .errors import FilterDivergedError, RiccatiDivergedError, SingularInnovationError
from .sim import MeasurementSeries, substeps

MatrixFn = Union[np.ndarray, Callable[[float], np.ndarray]]


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean size {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass
class LtvSystem:
    """Coefficients of a linear time-varying stochastic system.

    ``A``, ``b``, ``G`` and ``Q`` may be constant arrays or callables of
    time. ``C`` and ``R`` are constant.
    """

    A: MatrixFn
    b: MatrixFn
    G: MatrixFn
    Q: MatrixFn
    C: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        for name in ("A", "b", "G", "Q"):
            value = getattr(self, name)
            if not callable(value):
                setattr(self, name, np.asarray(value, dtype=float))
        p, n = self.C.shape
        if self.R.shape != (p, p):
            raise ValueError("R must be p x p")
        A0 = self._eval(self.A, 0.0)
        if A0.shape != (n, n):
            raise ValueError("A must be n x n with n matching C")
        self._const_noise = None
        if not callable(self.G) and not callable(self.Q):
            G = np.atleast_2d(self.G.reshape(n, -1))
            Q = np.atleast_2d(self.Q)
            self._const_noise = G @ Q @ G.T

    @property
    def dim_x(self) -> int:
        return self.C.shape[1]

    @staticmethod
    def _eval(value, t):
        return value(t) if callable(value) else value

    def noise(self, t: float) -> np.ndarray:
        """Diffusion term ``G(t) Q(t) G(t)^T``."""
        if self._const_noise is not None:
            return self._const_noise
        G = np.atleast_2d(np.asarray(self._eval(self.G, t), dtype=float).reshape(self.dim_x, -1))
        Q = np.atleast_2d(self._eval(self.Q, t))
        return G @ Q @ G.T

    def coefficients(self, t: float):
        return (
            np.asarray(self._eval(self.A, t), dtype=float),
            np.asarray(self._eval(self.b, t), dtype=float).reshape(-1),
            self.noise(t),
        )


@dataclass
class DenseGrid:
    times: np.ndarray
    means: np.ndarray
    covs: np.ndarray


@dataclass
class FilterOutput:
    """Per-measurement filter history.

    Row ``k`` of ``pred_*`` is the belief at ``t_k`` before assimilating
    ``y_k``; row ``k`` of ``filt_*`` is the belief after it.
    """

    times: np.ndarray
    pred_mean: np.ndarray
    pred_cov: np.ndarray
    filt_mean: np.ndarray
    filt_cov: np.ndarray
    innovations: np.ndarray
    innovation_vars: np.ndarray
    init: Optional[GaussianBelief] = None
    dense: Optional[DenseGrid] = None

    def __len__(self):
        return len(self.times)

    def predicted(self, k: int) -> GaussianBelief:
        return GaussianBelief(self.pred_mean[k], self.pred_cov[k])

    def filtered(self, k: int) -> GaussianBelief:
        return GaussianBelief(self.filt_mean[k], self.filt_cov[k])


class _Recorder:
    """Accumulates per-step results and assembles a FilterOutput."""

    def __init__(self, init, keep_dense=False):
        self.init = init
        self.rows = {key: [] for key in
                     ("times", "pred_mean", "pred_cov", "filt_mean", "filt_cov",
                      "innovations", "innovation_vars")}
        self.dense = ([], [], []) if keep_dense else None

    def add(self, t, pred, filt, innov, S):
        r = self.rows
        r["times"].append(t)
        r["pred_mean"].append(pred.mean)
        r["pred_cov"].append(pred.cov)
        r["filt_mean"].append(filt.mean)
        r["filt_cov"].append(filt.cov)
        r["innovations"].append(np.atleast_1d(innov))
        r["innovation_vars"].append(np.atleast_2d(S))

    def add_dense(self, grid: DenseGrid):
        if self.dense is None:
            return
        skip = 1 if self.dense[0] else 0
        self.dense[0].extend(grid.times[skip:])
        self.dense[1].extend(grid.means[skip:])
        self.dense[2].extend(grid.covs[skip:])

    def output(self, cls=FilterOutput, **extra) -> FilterOutput:
        n = self.init.mean.size
        r = self.rows
        if r["times"]:
            arrays = {k: np.array(v) for k, v in r.items()}
        else:
            arrays = dict(
                times=np.zeros(0), pred_mean=np.zeros((0, n)), pred_cov=np.zeros((0, n, n)),
                filt_mean=np.zeros((0, n)), filt_cov=np.zeros((0, n, n)),
                innovations=np.zeros((0, 1)), innovation_vars=np.zeros((0, 1, 1)),
            )
        dense = None
        if self.dense is not None and self.dense[0]:
            dense = DenseGrid(*(np.array(v) for v in self.dense))
        return cls(init=self.init, dense=dense, **arrays, **extra)


def _symmetrize(P):
    return 0.5 * (P + P.T)


def predict(belief: GaussianBelief, sys: LtvSystem, t_from: float, t_to: float,
            dt: float = 0.005, dense: bool = False):
    """Propagate mean and covariance from ``t_from`` to ``t_to``.

    Integrates ``dx/dt = A x + b`` and ``dP/dt = A P + P A^T + G Q G^T``
    with RK4 using the fewest equal steps not longer than ``dt``. The
    covariance is symmetrized after every step.

    Returns the belief at ``t_to``, or ``(belief, DenseGrid)`` when
    ``dense`` is set.
    """
    if not t_to > t_from:
        raise ValueError("t_to must exceed t_from")
    n_steps = substeps(t_to - t_from, dt)
    h = (t_to - t_from) / n_steps
    x = belief.mean.copy()
    P = belief.cov.copy()
    if dense:
        grid_t, grid_x, grid_P = [t_from], [x.copy()], [P.copy()]

    A1, b1, W1 = sys.coefficients(t_from)
    for i in range(n_steps):
        t = t_from + i * h
        A0, b0, W0 = A1, b1, W1
        Am, bm, Wm = sys.coefficients(t + 0.5 * h)
        A1, b1, W1 = sys.coefficients(t + h)

        k1x = A0 @ x + b0
        AP = A0 @ P
        k1P = AP + AP.T + W0
        x2 = x + 0.5 * h * k1x
        P2 = P + 0.5 * h * k1P
        k2x = Am @ x2 + bm
        AP = Am @ P2
        k2P = AP + AP.T + Wm
        x3 = x + 0.5 * h * k2x
        P3 = P + 0.5 * h * k2P
        k3x = Am @ x3 + bm
        AP = Am @ P3
        k3P = AP + AP.T + Wm
        x4 = x + h * k3x
        P4 = P + h * k3P
        k4x = A1 @ x4 + b1
        AP = A1 @ P4
        k4P = AP + AP.T + W1

        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        P = _symmetrize(P + (h / 6.0) * (k1P + 2.0 * k2P + 2.0 * k3P + k4P))
        if dense:
            grid_t.append(t + h)
            grid_x.append(x.copy())
            grid_P.append(P.copy())

    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(P))):
        raise FilterDivergedError(f"non-finite prediction at t={t_to:g}")
    out = GaussianBelief(x, P)
    if dense:
        grid_t[-1] = t_to
        return out, DenseGrid(np.array(grid_t), np.array(grid_x), np.array(grid_P))
    return out


def update(belief: GaussianBelief, sys: LtvSystem, y):
    """Discrete measurement update with the Joseph-form covariance.

    Returns ``(posterior, innovation, innovation_variance)``.
    """
    C, R = sys.C, sys.R
    x, P = belief.mean, belief.cov
    PCt = P @ C.T
    S = C @ PCt + R
    S = _symmetrize(S)
    if not np.all(np.isfinite(S)) or np.any(np.linalg.eigvalsh(S) <= 0):
        raise SingularInnovationError(f"innovation covariance not positive definite: {S}")
    innov = np.atleast_1d(np.asarray(y, dtype=float)) - C @ x
    K = np.linalg.solve(S, PCt.T).T
    IKC = np.eye(x.size) - K @ C
    P_post = _symmetrize(IKC @ P @ IKC.T + K @ R @ K.T)
    return GaussianBelief(x + K @ innov, P_post), innov, S


def run_filter(sys: LtvSystem, meas: MeasurementSeries, init: GaussianBelief,
               dt: float = 0.005, dense: bool = False) -> FilterOutput:
    """Alternate prediction and update over a measurement series.

    ``init`` is the prior at ``meas.times[0]``; the first measurement is
    assimilated without prediction.
    """
    rec = _Recorder(init, keep_dense=dense)
    belief = init
    t_prev = None
    try:
        for t, y in zip(meas.times, meas.values):
            if t_prev is not None:
                if dense:
                    belief, grid = predict(belief, sys, t_prev, t, dt, dense=True)
                    rec.add_dense(grid)
                else:
                    belief = predict(belief, sys, t_prev, t, dt)
            pred = belief
            belief, innov, S = update(pred, sys, y)
            rec.add(t, pred, belief, innov, S)
            t_prev = t
    except (FilterDivergedError, SingularInnovationError) as exc:
        raise FilterDivergedError(str(exc), partial=rec.output()) from exc
    return rec.output()


def discrete_transition(A, b, Q_c, dt: float):
    """Exact discretization of a time-invariant system over one step.

    Returns ``(F, b_k, Q_d)`` with ``F = expm(A dt)``,
    ``b_k = int_0^dt expm(A (dt - tau)) b dtau`` and ``Q_d = Q_c dt``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    n = A.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = A
    aug[:n, n] = b
    E = scipy.linalg.expm(aug * dt)
    return E[:n, :n], E[:n, n], np.asarray(Q_c, dtype=float) * dt


def spectrum(M) -> np.ndarray:
    """Eigenvalues sorted by decreasing modulus."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    eig = np.linalg.eigvals(M)
    order = np.lexsort((-eig.real, -np.abs(eig)))
    eig = eig[order]
    if np.all(np.abs(eig.imag) <= 1e-14 * max(1.0, np.max(np.abs(eig), initial=0.0))):
        return eig.real
    return eig


def spectral_radius(M) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(M)))))


def steady_state_gain(F, C, Q_d, R, P0=None, tol: float = 1e-12, max_iter: int = 100_000):
    """Fixed point of the discrete Riccati recursion (prediction form).

    Iterates ``P <- F P F^T - F P C^T (C P C^T + R)^-1 C P F^T + Q_d`` until
    the relative change drops below ``tol`` and returns
    ``(P_inf, K_inf)`` with ``K_inf = F P_inf C^T (C P_inf C^T + R)^-1``.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    Q_d = np.atleast_2d(np.asarray(Q_d, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q_d.copy() if P0 is None else np.atleast_2d(np.asarray(P0, dtype=float)).copy()

    def gain(P):
        S = C @ P @ C.T + R
        return np.linalg.solve(S, (F @ P @ C.T).T).T

    for _ in range(max_iter):
        K = gain(P)
        P_next = _symmetrize(F @ P @ F.T - K @ C @ P @ F.T + Q_d)
        if not np.all(np.isfinite(P_next)):
            break
        change = np.max(np.abs(P_next - P))
        P = P_next
        if change == 0.0 or change <= tol * np.max(np.abs(P)):
            K = gain(P)
            if spectral_radius(F - K @ C) >= 1.0:
                raise RiccatiDivergedError("Riccati fixed point does not stabilize F - K C")
            return P, K
    raise RiccatiDivergedError(f"Riccati iteration did not converge in {max_iter} steps")
