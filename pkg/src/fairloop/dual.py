"""Max-min provider fairness solved online in the dual space.

The dual variable ``mu`` holds one price per provider. Its feasible region is

    D = { mu : sum_{p in S} gamma_p mu_p >= -lam  for every subset S },

which reduces to a single test on the negative part of ``gamma * mu`` because
the most violated subset is exactly the set of negative coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InfeasibleDualError(ValueError):
    """Raised when a dual vector lies outside the feasible region."""


def negative_mass(mu, gamma) -> float:
    v = np.asarray(gamma, dtype=float) * np.asarray(mu, dtype=float)
    return float(np.minimum(v, 0.0).sum())


def in_feasible_region(mu, gamma, lam: float, slack: float = 0.0) -> bool:
    return negative_mass(mu, gamma) >= -lam - slack


def conjugate_regularizer(mu, gamma, lam: float) -> float:
    """Closed-form conjugate of the weighted max-min regularizer, gamma^T mu / lam + 1."""
    if lam <= 0:
        raise ValueError("the conjugate is only finite for lam > 0")
    if not in_feasible_region(mu, gamma, lam):
        raise InfeasibleDualError("mu lies outside the dual feasible region; conjugate is +inf")
    return float(np.dot(gamma, mu)) / lam + 1.0


def exposure_objective(e, mu, gamma, lam: float) -> float:
    """min_p(e_p / gamma_p) + mu^T e / lam."""
    e = np.asarray(e, dtype=float)
    return float(np.min(e / gamma) + np.dot(mu, e) / lam)


def ideal_exposure(mu, beta, gamma, lam: float) -> np.ndarray:
    """Maximize ``min_p(e_p/gamma_p) + mu^T e / lam`` over the box ``0 <= e <= beta``.

    Providers with a positive price sit at their cap. The rest are held at
    ``gamma_p * m`` for a common floor ``m``; the objective is linear in ``m``
    so the optimum is one of the two endpoints ``0`` or ``min_p beta_p/gamma_p``.
    The objective is scaled by ``lam`` internally so ``lam = 0`` is allowed.
    """
    mu = np.asarray(mu, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    cap = np.maximum(np.asarray(beta, dtype=float), 0.0)
    priced = mu > 0
    if priced.all():
        return cap.copy()
    m_max = float(np.min(cap / gamma))
    slope = lam + float(np.dot(mu[~priced], gamma[~priced]))
    m = m_max if slope >= 0 else 0.0
    return np.where(priced, cap, gamma * m)


def momentum_gradient(g_tilde, g_prev, momentum_alpha: float) -> np.ndarray:
    return momentum_alpha * np.asarray(g_tilde, dtype=float) + (1 - momentum_alpha) * np.asarray(g_prev, dtype=float)


def project_to_feasible(mu_raw, gamma, lam: float) -> np.ndarray:
    """Projection onto D in the gamma-weighted norm.

    In the coordinates ``v = gamma * mu`` this is a Euclidean projection:
    non-negative coordinates never need to move, and the negative ones are
    lifted by a common threshold ``theta`` (clipped at zero) so that their
    total reaches ``-lam``. ``theta`` is found from the sorted prefix sums.
    """
    gamma = np.asarray(gamma, dtype=float)
    mu_raw = np.asarray(mu_raw, dtype=float)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    v = gamma * mu_raw
    neg = v < 0
    depth = -v[neg]
    if depth.sum() <= lam:
        return mu_raw.copy()
    if lam == 0:
        theta = depth.max()
    else:
        y = np.sort(depth)[::-1]
        css = np.cumsum(y)
        k = np.arange(1, y.size + 1)
        # largest k with y_k > (css_k - lam) / k; k = 1 always qualifies but
        # can round away when lam is tiny
        hits = np.flatnonzero(y * k > css - lam)
        rho = hits[-1] if hits.size else 0
        theta = (css[rho] - lam) / (rho + 1)
    out = v.copy()
    out[neg] = -np.maximum(depth - theta, 0.0)
    return out / gamma


@dataclass
class DualState:
    """Per-episode dual variable, momentum gradient and remaining budgets.

    ``step_size`` multiplies ``g / gamma**2`` in the descent step; it equals
    ``1 / (2 * eta)`` for a proximal weight ``eta``.
    """

    gamma: np.ndarray
    lam: float
    step_size: float
    momentum_alpha: float = 0.3
    mu: np.ndarray = field(default=None)
    g: np.ndarray = field(default=None)
    beta: np.ndarray = field(default=None)

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if not 0 <= self.momentum_alpha <= 1:
            raise ValueError("momentum_alpha must lie in [0, 1]")
        if self.mu is None:
            self.reset()

    def reset(self):
        n = self.gamma.size
        self.mu = np.zeros(n)
        self.g = np.zeros(n)
        self.beta = self.gamma.copy()


def dual_step(state: DualState, g) -> np.ndarray:
    """Mirror step with the gamma^2-weighted proximal term, then projection."""
    raw = state.mu - state.step_size * np.asarray(g, dtype=float) / state.gamma ** 2
    state.mu = project_to_feasible(raw, state.gamma, state.lam)
    return state.mu


def consume_resources(state: DualState, exposure) -> np.ndarray:
    state.beta = state.beta - np.asarray(exposure, dtype=float)
    return state.beta


def update_duals(state: DualState, exposure) -> np.ndarray:
    """One full fairness update after a decision with provider exposure ``exposure``."""
    e_ideal = ideal_exposure(state.mu, state.beta, state.gamma, state.lam)
    consume_resources(state, exposure)
    g_tilde = -np.asarray(exposure, dtype=float) + e_ideal
    state.g = momentum_gradient(g_tilde, state.g, state.momentum_alpha)
    return dual_step(state, state.g)
