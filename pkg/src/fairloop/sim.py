"""Recommendation feedback-loop simulator.

Users arrive in episodes of ``T``. Within an episode the accuracy model is
frozen, the policy ranks ``K`` items per arrival and clicks are drawn from the
ground-truth click rates of the shown items only. Between episodes the
collected buffer is fed back into the accuracy model.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from .catalog import Catalog, build_catalog, exposures_of
from .dual import DualState
from .metrics import MetricsReport, episode_reports, summary_report
from .mf import EmbeddingState, ingest_feedback, init_embeddings, predict_scores
from .oracle import OfflineInstance, objective, solve_offline_flow
from .ranker import RankingDecision, rank_step, top_k
from .ucb import UcbParams

SCORE_LOW, SCORE_HIGH = 0.05, 0.95

POLICY_IDS = ("ltp_mmf", "ltp_mmf_no_ucb", "ltp_mmf_no_fair", "topk", "k_neighbor", "oracle_greedy")


@dataclass
class SyntheticWorld:
    true_user_emb: np.ndarray
    true_item_emb: np.ndarray
    provider_of: np.ndarray
    true_scores: np.ndarray  # (n_users, n_items), already mapped into [SCORE_LOW, SCORE_HIGH]
    seed: int | None = None

    @property
    def n_users(self) -> int:
        return self.true_scores.shape[0]

    @property
    def n_items(self) -> int:
        return self.true_scores.shape[1]


@dataclass
class InteractionRecord:
    t: int
    user: int
    items: list
    clicks: list


def provider_sizes(n_items: int, n_providers: int, skew: float) -> np.ndarray:
    """Long-tailed provider sizes, every provider owning at least one item.

    Shares follow ``(rank + 1) ** -skew``; ``skew = 0`` gives an even split.
    """
    if n_providers > n_items:
        raise ValueError("need at least one item per provider")
    weights = np.arange(1, n_providers + 1, dtype=float) ** -skew
    spare = n_items - n_providers
    raw = spare * weights / weights.sum()
    sizes = np.floor(raw).astype(np.int64)
    # largest remainder, ties to the bigger provider
    leftover = spare - sizes.sum()
    order = np.argsort(-(raw - sizes), kind="stable")
    sizes[order[:leftover]] += 1
    return sizes + 1


def generate_synthetic_world(n_users: int = 64, n_items: int = 40, n_providers: int = 8,
                             d_true: int = 16, skew: float = 1.0, popularity: float = 0.0,
                             seed=None) -> SyntheticWorld:
    """Seeded ground truth: Gaussian user/item factors, optionally with an item popularity offset.

    ``popularity`` is the std of a per-item offset relative to the unit-variance
    interaction term (0 disables it). Raw scores are min-max mapped into [SCORE_LOW, SCORE_HIGH].
    """
    rng = np.random.default_rng(seed)
    sizes = provider_sizes(n_items, n_providers, skew)
    provider_of = rng.permutation(np.repeat(np.arange(n_providers), sizes))
    U = rng.standard_normal((n_users, d_true))
    V = rng.standard_normal((n_items, d_true))
    raw = U @ V.T / np.sqrt(d_true) + popularity * rng.standard_normal(n_items)
    lo, hi = raw.min(), raw.max()
    if hi > lo:
        scores = SCORE_LOW + (SCORE_HIGH - SCORE_LOW) * (raw - lo) / (hi - lo)
    else:
        scores = np.full_like(raw, (SCORE_LOW + SCORE_HIGH) / 2)
    return SyntheticWorld(U, V, provider_of, scores, seed)


def click_model(world: SyntheticWorld, u: int, i: int, rng: np.random.Generator) -> int:
    return int(rng.random() < world.true_scores[u, i])


def arrival_order(n_users: int, N: int, rng: np.random.Generator) -> np.ndarray:
    """Round-robin over users, reshuffled every full pass."""
    passes = math.ceil(N / n_users)
    return np.concatenate([rng.permutation(n_users) for _ in range(passes)])[:N]


# --------------------------------------------------------------------------
# policies


class Policy:
    """Base class: ranks one arrival at a time, with per-episode hooks."""

    id = "base"

    def begin_episode(self, catalog: Catalog, episode_index: int):
        pass

    def decide(self, user: int, emb: EmbeddingState, catalog: Catalog, episode_index: int) -> RankingDecision:
        raise NotImplementedError

    def observe(self, decision: RankingDecision):
        pass


class LtpMmfPolicy(Policy):
    """Accuracy + dual fairness prices + exhaustion mask + UCB bonus.

    ``use_ucb=False`` forces the bonus to zero; ``use_fairness=False`` forces
    the prices and the mask to zero.
    """

    def __init__(self, lam=0.5, ucb: UcbParams | None = None, step_size=None,
                 momentum_alpha=0.3, use_ucb=True, use_fairness=True, policy_id="ltp_mmf"):
        self.id = policy_id
        self.lam = lam
        self.ucb = (ucb or UcbParams()) if use_ucb else None
        self.step_size = step_size
        self.momentum_alpha = momentum_alpha
        self.use_fairness = use_fairness
        self.dual: DualState | None = None

    def begin_episode(self, catalog, episode_index):
        if self.use_fairness:
            step = self.step_size if self.step_size is not None else 1e-2 / math.sqrt(catalog.T)
            self.dual = DualState(catalog.gamma, self.lam, step, self.momentum_alpha)

    def decide(self, user, emb, catalog, episode_index):
        return rank_step(user, emb, self.dual, self.ucb, catalog, episode_index)


class KNeighborPolicy(Policy):
    """Only items of the ``k`` providers with least run-to-date exposure are eligible."""

    id = "k_neighbor"

    def __init__(self, k=1):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.cum = None

    def begin_episode(self, catalog, episode_index):
        if self.cum is None:
            self.cum = np.zeros(catalog.n_providers)

    def decide(self, user, emb, catalog, episode_index):
        order = np.argsort(self.cum, kind="stable")
        chosen = list(order[: self.k])
        sizes = catalog.provider_sizes
        # widen the candidate set until it holds K items
        while sizes[chosen].sum() < catalog.K:
            chosen.append(order[len(chosen)])
        eligible = np.isin(catalog.provider_of, chosen)
        scores = predict_scores(emb, user)
        rewards = np.where(eligible, scores, -np.inf)
        items = top_k(rewards, catalog.K)
        return RankingDecision(user, items, scores[items], exposures_of(items, catalog))

    def observe(self, decision):
        self.cum += decision.exposure


class OracleGreedyPolicy(Policy):
    """Top-K on the true click rates; an accuracy upper reference."""

    id = "oracle_greedy"

    def __init__(self, true_scores):
        self.true_scores = true_scores

    def decide(self, user, emb, catalog, episode_index):
        s = self.true_scores[user]
        items = top_k(s, catalog.K)
        return RankingDecision(user, items, s[items], exposures_of(items, catalog))


def make_policy(policy_id: str, params: dict | None = None, true_scores=None) -> Policy:
    params = dict(params or {})
    ucb_keys = {f.name for f in fields(UcbParams)}
    ucb = UcbParams(**{k: v for k, v in params.items() if k in ucb_keys})
    common = dict(lam=params.get("lam", 0.5), ucb=ucb, step_size=params.get("step_size"),
                  momentum_alpha=params.get("momentum_alpha", 0.3))
    if policy_id == "ltp_mmf":
        return LtpMmfPolicy(**common, policy_id=policy_id)
    if policy_id == "ltp_mmf_no_ucb":
        return LtpMmfPolicy(**common, use_ucb=False, policy_id=policy_id)
    if policy_id == "ltp_mmf_no_fair":
        return LtpMmfPolicy(**common, use_fairness=False, policy_id=policy_id)
    if policy_id == "topk":
        return LtpMmfPolicy(**common, use_ucb=False, use_fairness=False, policy_id=policy_id)
    if policy_id == "k_neighbor":
        return KNeighborPolicy(k=int(params.get("k", 1)))
    if policy_id == "oracle_greedy":
        if true_scores is None:
            raise ValueError("oracle_greedy needs the true score matrix")
        return OracleGreedyPolicy(true_scores)
    raise ValueError(f"unknown policy id {policy_id!r}; expected one of {POLICY_IDS}")


# --------------------------------------------------------------------------
# episodes and experiments


def run_episode(policy: Policy, world: SyntheticWorld, users, emb: EmbeddingState,
                catalog: Catalog, episode_index: int, rng: np.random.Generator, t0: int = 0):
    """Serve one episode of arrivals. The accuracy model is not updated here.

    Returns the interaction records and the ``(user, item, click)`` buffer.
    """
    policy.begin_episode(catalog, episode_index)
    records, buffer = [], []
    for offset, u in enumerate(users):
        u = int(u)
        decision = policy.decide(u, emb, catalog, episode_index)
        policy.observe(decision)
        items = [int(i) for i in decision.items]
        clicks = [int(c) for c in rng.random(len(items)) < world.true_scores[u, items]]
        records.append(InteractionRecord(t0 + offset, u, items, clicks))
        buffer.extend(zip([u] * len(items), items, clicks))
    return records, buffer


@dataclass
class ExperimentConfig:
    policy: str = "ltp_mmf"
    seed: int = 0
    N: int = 4096
    T: int = 256
    K: int = 10
    lam: float = 0.5
    # world
    n_users: int = 64
    n_items: int = 40
    n_providers: int = 8
    d_true: int | None = None
    skew: float = 1.0
    popularity: float = 0.0
    richness: float | None = None
    # accuracy model and exploration
    d: int = 16
    lambda_u: float = 1.0
    lambda_i: float = 1.0
    sigma: float = 0.1
    q: float = 0.8
    eps_q: float = 0.01
    # fairness module
    step_size: float | None = None
    momentum_alpha: float = 0.3
    # baselines
    k: int = 1
    # measurement
    compute_regret: bool = False

    def validate(self) -> list[str]:
        """Every violated key, as ``key: reason`` strings."""
        errs = []
        if self.policy not in POLICY_IDS:
            errs.append(f"policy: unknown id {self.policy!r}")
        for key in ("N", "T", "K", "n_users", "n_items", "n_providers", "d", "k"):
            if getattr(self, key) < 1:
                errs.append(f"{key}: must be >= 1")
        if self.T >= 1 and self.N // max(self.T, 1) < 1:
            errs.append("N: must allow at least one full episode (N >= T)")
        if self.K > self.n_items:
            errs.append("K: exceeds n_items")
        if self.n_providers > self.n_items:
            errs.append("n_providers: exceeds n_items")
        if self.lam < 0:
            errs.append("lam: must be >= 0")
        if self.d_true is not None and self.d_true < 1:
            errs.append("d_true: must be >= 1")
        if self.lambda_u <= 0:
            errs.append("lambda_u: must be > 0")
        if self.lambda_i <= 0:
            errs.append("lambda_i: must be > 0")
        if not 0 < self.sigma < 1:
            errs.append("sigma: must lie in (0, 1)")
        if not 0 < self.q < 1:
            errs.append("q: must lie in (0, 1)")
        if self.eps_q < 0 or self.q + self.eps_q >= 1:
            errs.append("eps_q: need eps_q >= 0 and q + eps_q < 1")
        if self.step_size is not None and self.step_size <= 0:
            errs.append("step_size: must be > 0")
        if not 0 <= self.momentum_alpha <= 1:
            errs.append("momentum_alpha: must lie in [0, 1]")
        if self.richness is not None and self.richness <= 0:
            errs.append("richness: must be > 0")
        return errs

    def policy_params(self) -> dict:
        return dict(lam=self.lam, step_size=self.step_size, momentum_alpha=self.momentum_alpha,
                    sigma=self.sigma, q=self.q, eps_q=self.eps_q, lambda_u=self.lambda_u,
                    lambda_i=self.lambda_i, d=self.d, k=self.k)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentTrace:
    config: ExperimentConfig
    catalog: Catalog
    world: SyntheticWorld
    records: list
    reports: list[MetricsReport]
    summary: MetricsReport
    episode_regret: np.ndarray | None = None
    wall_ms: float = 0.0


def episode_regrets(records, world: SyntheticWorld, catalog: Catalog, lam: float) -> np.ndarray:
    """Offline optimum minus realized objective, per full episode, on true scores.

    The realized side is the plain objective: a small budget overshoot left by
    the exhaustion mask is not penalized, so single episodes may go negative.
    """
    T = catalog.T
    out = []
    for n in range(len(records) // T):
        chunk = records[n * T:(n + 1) * T]
        users = [r.user for r in chunk]
        inst = OfflineInstance(world.true_scores[users], catalog, lam)
        opt = solve_offline_flow(inst)
        out.append(opt.value - objective(inst, [r.items for r in chunk]))
    return np.array(out)


def run_experiment(config: ExperimentConfig) -> ExperimentTrace:
    errs = config.validate()
    if errs:
        raise ValueError("invalid config: " + "; ".join(errs))
    start = time.perf_counter()
    world_seq, emb_seq, arrival_seq, click_seq = np.random.SeedSequence(config.seed).spawn(4)
    world = generate_synthetic_world(config.n_users, config.n_items, config.n_providers,
                                     config.d_true or config.d, config.skew,
                                     config.popularity, world_seq)
    catalog = build_catalog(world.provider_of, config.K, config.T, config.richness)
    emb = init_embeddings(config.n_users, config.n_items, config.d, config.lambda_u,
                          config.lambda_i, emb_seq)
    policy = make_policy(config.policy, config.policy_params(), world.true_scores)
    arrivals = arrival_order(config.n_users, config.N, np.random.default_rng(arrival_seq))
    click_rng = np.random.default_rng(click_seq)

    records = []
    n_episodes = config.N // config.T
    for n in range(n_episodes):
        users = arrivals[n * config.T:(n + 1) * config.T]
        recs, buffer = run_episode(policy, world, users, emb, catalog, n, click_rng, t0=n * config.T)
        records.extend(recs)
        ingest_feedback(emb, buffer)

    regrets = None
    if config.compute_regret:
        regrets = episode_regrets(records, world, catalog, config.lam)
    reports = episode_reports(records, world.true_scores, catalog, config.lam, regrets)
    summary = summary_report(records, world.true_scores, catalog, config.lam,
                             None if regrets is None else float(regrets.mean()))
    wall_ms = (time.perf_counter() - start) * 1e3
    return ExperimentTrace(config, catalog, world, records, reports, summary, regrets, wall_ms)
