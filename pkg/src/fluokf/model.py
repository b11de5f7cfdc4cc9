"""Growth model with fluorescent-reporter synthesis in a chemostat.

State ordering is always ``(s, e, f)``: substrate, biomass and fluorescent
protein concentrations in g/L. Time is in hours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class ModelParams:
    """Biological and reactor constants.

    Attributes
    ----------
    gamma : growth yield (g biomass per g substrate)
    alpha : fraction of substrate import diverted to the reporter, in (0, 1)
    s_in : inflow substrate concentration (g/L)
    d : dilution rate (1/h)
    mu_max : maximal specific growth rate (1/h)
    k_s : Monod half-saturation constant (g/L)
    """

    gamma: float = 1.0
    alpha: float = 0.3
    s_in: float = 2.0
    d: float = 0.48
    mu_max: float = float(np.log(2.0))
    k_s: float = 0.2

    def __post_init__(self):
        for name in ("gamma", "s_in", "d", "mu_max", "k_s"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")

    @property
    def stoichiometry(self) -> np.ndarray:
        """Stoichiometric column ``N = (-1/gamma, 1-alpha, alpha)``.

        Integer literals keep the entries exact for rational parameters.
        """
        return np.array([-1 / self.gamma, 1 - self.alpha, self.alpha])

    @property
    def x_in(self) -> np.ndarray:
        return np.array([self.s_in, 0.0, 0.0])


@dataclass(frozen=True)
class Equilibria:
    washout: np.ndarray
    interior: Optional[np.ndarray] = None
    s_star: Optional[float] = None

    @property
    def has_interior(self) -> bool:
        return self.interior is not None


def monod(s, params: ModelParams):
    """Monod specific growth rate ``mu_max * s / (k_s + s)``."""
    if isinstance(s, float):
        if s < 0:
            raise DomainError(f"substrate must be nonnegative, got {s!r}")
        return params.mu_max * s / (params.k_s + s)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise DomainError(f"substrate must be nonnegative, got {s!r}")
    out = params.mu_max * s_arr / (params.k_s + s_arr)
    return float(out) if out.ndim == 0 else out


def monod_inverse(mu, params: ModelParams):
    """Substrate level at which the Monod rate equals ``mu``."""
    mu_arr = np.asarray(mu, dtype=float)
    if np.any(mu_arr < 0) or np.any(mu_arr >= params.mu_max):
        raise DomainError(f"growth rate must lie in [0, mu_max), got {mu!r}")
    out = params.k_s * mu_arr / (params.mu_max - mu_arr)
    return float(out) if out.ndim == 0 else out


def monod_derivative(s, params: ModelParams):
    if isinstance(s, float):
        if s < 0:
            raise DomainError(f"substrate must be nonnegative, got {s!r}")
        return params.mu_max * params.k_s / (params.k_s + s) ** 2
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise DomainError(f"substrate must be nonnegative, got {s!r}")
    out = params.mu_max * params.k_s / (params.k_s + s_arr) ** 2
    return float(out) if out.ndim == 0 else out


def vector_field(x, params: ModelParams) -> np.ndarray:
    """Right-hand side of the growth model at state ``x = (s, e, f)``."""
    s, e, f = x
    mu = monod(s, params)
    a = params.alpha
    d = params.d
    return np.array([
        -mu * e / params.gamma + d * (params.s_in - s),
        (1.0 - a) * mu * e - d * e,
        a * mu * e - d * f,
    ])


def conservation_matrix(params: ModelParams) -> np.ndarray:
    """Return the 2x3 conservation matrix whose rows annihilate ``N``.

    Rows are ``sigma_1 = s + f/(alpha*gamma)`` and
    ``sigma_2 = e - (1-alpha)/alpha * f``.
    """
    a, g = params.alpha, params.gamma
    return np.array([
        [1, 0, 1 / (a * g)],
        [0, 1, -(1 - a) / a],
    ])


def conservation_trajectory(sigma0, t, params: ModelParams, t0: float = 0.0) -> np.ndarray:
    """Closed-form conservation variables at times ``t`` from ``sigma0`` at ``t0``.

    Returns an array of shape ``(len(t), 2)`` (or ``(2,)`` for scalar ``t``).
    """
    pi_xin = conservation_matrix(params) @ params.x_in
    decay = np.exp(-params.d * (np.asarray(t, dtype=float) - t0))
    return pi_xin + np.multiply.outer(decay, np.asarray(sigma0) - pi_xin)


def equilibria(params: ModelParams) -> Equilibria:
    """Washout point and, when it exists, the interior equilibrium."""
    washout = params.x_in.copy()
    mu_target = params.d / (1.0 - params.alpha)
    if not mu_target < monod(params.s_in, params):
        return Equilibria(washout=washout)
    s_star = monod_inverse(mu_target, params)
    gap = params.s_in - s_star
    interior = np.array([
        s_star,
        params.gamma * (1.0 - params.alpha) * gap,
        params.gamma * params.alpha * gap,
    ])
    return Equilibria(washout=washout, interior=interior, s_star=s_star)
