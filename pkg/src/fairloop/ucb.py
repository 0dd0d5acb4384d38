"""Optimistic exploration bonus for the MF scores."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mf import EmbeddingState


@dataclass(frozen=True)
class UcbParams:
    """Confidence level ``sigma``, linear-convergence rate ``q`` and slack ``eps_q``.

    ``lambda_u``, ``lambda_i`` and ``d`` must match the embedding state.
    """

    sigma: float = 0.1
    q: float = 0.8
    eps_q: float = 0.01
    lambda_u: float = 1.0
    lambda_i: float = 1.0
    d: int = 16

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if self.eps_q < 0:
            raise ValueError("eps_q must be >= 0")
        if self.q + self.eps_q >= 1:
            raise ValueError("q + eps_q must be < 1")
        if self.lambda_u <= 0 or self.lambda_i <= 0:
            raise ValueError("ridge weights must be > 0")
        if self.d < 1:
            raise ValueError("d must be >= 1")

    @property
    def rate(self) -> float:
        return self.q + self.eps_q


def _bias_bound(lam: float, t: float, p: UcbParams) -> float:
    r = p.rate
    geometric = 2 * r * (1 - r ** t) / (1 - r)
    log_term = math.sqrt(p.d * math.log((lam * p.d + t) / (lam * p.d * p.sigma)))
    return math.sqrt(lam) + geometric + log_term


def bias_bounds(t: int, params: UcbParams) -> tuple[float, float]:
    """User-side and item-side bias bounds ``(alpha_t, beta_t)``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return _bias_bound(params.lambda_u, t, params), _bias_bound(params.lambda_i, t, params)


def collaborative_bound(t: int, params: UcbParams) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    return params.rate ** t


def mahalanobis(x: np.ndarray, B: np.ndarray) -> float:
    """sqrt(x^T B x)."""
    return math.sqrt(max(float(x @ B @ x), 0.0))


def confidence_radius(state: EmbeddingState, u: int, i: int, t: int, params: UcbParams) -> float:
    alpha, beta = bias_bounds(t, params)
    c_half = collaborative_bound(t, params) / 2
    user_side = mahalanobis(state.item_emb[i], state.A_inv[u])
    item_side = mahalanobis(state.user_emb[u], state.C_inv[i])
    return alpha * (user_side + c_half) + beta * (item_side + c_half)


def confidence_radii(state: EmbeddingState, u: int, t: int, params: UcbParams) -> np.ndarray:
    """Vectorized ``confidence_radius`` of user ``u`` against every item."""
    alpha, beta = bias_bounds(t, params)
    c_half = collaborative_bound(t, params) / 2
    V = state.item_emb
    user_side = np.einsum("nd,de,ne->n", V, state.A_inv[u], V)
    v_u = state.user_emb[u]
    item_side = np.einsum("d,nde,e->n", v_u, state.C_inv, v_u)
    user_side = np.sqrt(np.maximum(user_side, 0.0))
    item_side = np.sqrt(np.maximum(item_side, 0.0))
    return alpha * (user_side + c_half) + beta * (item_side + c_half)
