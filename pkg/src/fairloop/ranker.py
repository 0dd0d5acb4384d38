"""Reward assembly and masked top-K selection for one user arrival."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import Catalog, exposures_of
from .dual import DualState, update_duals
from .mf import EmbeddingState, predict_scores
from .ucb import UcbParams, confidence_radii

EXHAUSTED_PENALTY = 1000.0


@dataclass
class RankingDecision:
    user: int
    items: np.ndarray
    rewards_used: np.ndarray
    exposure: np.ndarray


def mask_vector(beta_remaining, penalty: float = EXHAUSTED_PENALTY) -> np.ndarray:
    """Zero for providers with budget left, ``penalty`` for exhausted ones."""
    beta_remaining = np.asarray(beta_remaining, dtype=float)
    return np.where(beta_remaining > 0, 0.0, penalty)


def assemble_rewards(s_hat, delta_f, mu, m, catalog: Catalog) -> np.ndarray:
    """r_i = s_hat_i / T - (mu + m)[provider_of(i)] + delta_f_i."""
    price = (np.asarray(mu, dtype=float) + np.asarray(m, dtype=float))[catalog.provider_of]
    return np.asarray(s_hat, dtype=float) / catalog.T - price + np.asarray(delta_f, dtype=float)


def top_k(rewards, K: int) -> np.ndarray:
    """Indices of the K largest rewards, best first; ties go to the lower index."""
    rewards = np.asarray(rewards, dtype=float)
    if K > rewards.size:
        raise ValueError(f"K={K} exceeds the number of items ({rewards.size})")
    if K < 0:
        raise ValueError("K must be >= 0")
    return np.argsort(-rewards, kind="stable")[:K]


def rank_step(user: int, emb_state: EmbeddingState, dual_state: DualState | None,
              ucb: UcbParams | None, catalog: Catalog, episode_index: int) -> RankingDecision:
    """Score, rank and (when fairness is on) advance the dual state for one arrival.

    ``ucb=None`` drops the exploration bonus; ``dual_state=None`` drops both the
    dual prices and the exhaustion mask.
    """
    s_hat = predict_scores(emb_state, user)
    if ucb is not None:
        delta_f = confidence_radii(emb_state, user, episode_index, ucb)
    else:
        delta_f = np.zeros(catalog.n_items)
    if dual_state is not None:
        mu = dual_state.mu
        m = mask_vector(dual_state.beta)
    else:
        mu = m = np.zeros(catalog.n_providers)

    rewards = assemble_rewards(s_hat, delta_f, mu, m, catalog)
    items = top_k(rewards, catalog.K)
    exposure = exposures_of(items, catalog)
    if dual_state is not None:
        update_duals(dual_state, exposure)
    return RankingDecision(user, items, rewards[items], exposure)
