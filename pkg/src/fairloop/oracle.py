"""Offline optimum of the amortized accuracy/max-min-fairness program.

Over a horizon of ``T`` arrivals with known true scores, choose ``K`` distinct
items per arrival to maximize

    (1/T) * sum_t sum_{i in x_t} s[t, i] + lam * min_p(E_p / gamma_p)

subject to the cumulative budgets ``E_p <= gamma_p``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp
from scipy.sparse import coo_matrix, vstack

from .catalog import Catalog

ENUMERATION_BUDGET = 10 ** 7


class EnumerationBudgetError(ValueError):
    pass


@dataclass
class OfflineInstance:
    true_scores: np.ndarray  # (T, n_items)
    catalog: Catalog
    lam: float

    def __post_init__(self):
        self.true_scores = np.atleast_2d(np.asarray(self.true_scores, dtype=float))
        if self.true_scores.shape[1] != self.catalog.n_items:
            raise ValueError("score matrix width does not match the catalog")
        if not np.all(np.isfinite(self.true_scores)):
            raise ValueError("scores must be finite")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")

    @property
    def horizon(self) -> int:
        return self.true_scores.shape[0]


@dataclass
class OracleResult:
    value: float
    decisions: list
    feasible: bool


def required_budget(instance: OfflineInstance) -> int:
    cat = instance.catalog
    return instance.horizon * math.comb(cat.n_items, cat.K)


def objective(instance: OfflineInstance, decisions) -> float:
    """Objective value of a decision sequence, ignoring the budget constraint."""
    cat = instance.catalog
    T = instance.horizon
    if len(decisions) != T:
        raise ValueError(f"expected {T} decisions, got {len(decisions)}")
    accuracy = 0.0
    exposure = np.zeros(cat.n_providers)
    for t, items in enumerate(decisions):
        items = np.asarray(items, dtype=np.int64)
        accuracy += instance.true_scores[t, items].sum()
        exposure += np.bincount(cat.provider_of[items], minlength=cat.n_providers)
    return accuracy / T + instance.lam * float(np.min(exposure / cat.gamma))


def budget_feasible(instance: OfflineInstance, decisions, tol: float = 1e-9) -> bool:
    cat = instance.catalog
    exposure = np.zeros(cat.n_providers)
    for items in decisions:
        exposure += np.bincount(cat.provider_of[np.asarray(items, dtype=np.int64)],
                                minlength=cat.n_providers)
    return bool(np.all(exposure <= cat.gamma + tol))


def realized_objective(instance: OfflineInstance, decisions, enforce_budget: bool = True) -> float:
    """Objective of a realized decision sequence on the true scores.

    With ``enforce_budget`` a sequence that breaks a budget is outside the
    program's domain and scores ``-inf``.
    """
    if enforce_budget and not budget_feasible(instance, decisions):
        return -math.inf
    return objective(instance, decisions)


def regret(realized_objective_value: float, r_opt: float) -> float:
    return r_opt - realized_objective_value


def _step_patterns(scores_t: np.ndarray, cat: Catalog):
    """Best K-subset for every feasible per-provider count vector at one step."""
    order = []
    prefix = []
    for p in range(cat.n_providers):
        items = cat.items_of(p)
        ranked = items[np.argsort(-scores_t[items], kind="stable")]
        order.append(ranked)
        prefix.append(np.concatenate([[0.0], np.cumsum(scores_t[ranked])]))
    sizes = cat.provider_sizes
    patterns = []

    def rec(p, remaining, counts):
        if p == cat.n_providers - 1:
            if remaining <= sizes[p]:
                patterns.append(counts + (remaining,))
            return
        for k in range(min(remaining, sizes[p]) + 1):
            rec(p + 1, remaining - k, counts + (k,))

    rec(0, cat.K, ())
    out = []
    for counts in patterns:
        value = sum(prefix[p][k] for p, k in enumerate(counts))
        items = np.concatenate([order[p][:k] for p, k in enumerate(counts)]).astype(np.int64)
        out.append((np.array(counts), value, items))
    return out


def solve_offline_optimum(instance: OfflineInstance) -> OracleResult:
    """Exact optimum by dynamic programming over cumulative exposure vectors.

    At each step only the best subset per exposure pattern can be part of an
    optimum, so the search runs over reachable exposure vectors that stay
    within budget. Budget-violating branches are pruned as they are created.
    """
    need = required_budget(instance)
    if need > ENUMERATION_BUDGET:
        raise EnumerationBudgetError(
            f"instance needs {need} enumeration states, budget is {ENUMERATION_BUDGET}")
    cat = instance.catalog
    T = instance.horizon
    cap = cat.gamma + 1e-9
    start = (0,) * cat.n_providers
    layers = [{start: (0.0, None, None)}]
    for t in range(T):
        patterns = _step_patterns(instance.true_scores[t], cat)
        nxt = {}
        for state, (acc, _, _) in layers[-1].items():
            base = np.array(state)
            for counts, value, items in patterns:
                new = base + counts
                if np.any(new > cap):
                    continue
                key = tuple(int(x) for x in new)
                cand = acc + value
                if key not in nxt or cand > nxt[key][0]:
                    nxt[key] = (cand, state, items)
        if not nxt:
            return OracleResult(-math.inf, [], False)
        layers.append(nxt)

    best_key, best_val = None, -math.inf
    for key, (acc, _, _) in layers[-1].items():
        val = acc / T + instance.lam * float(np.min(np.array(key) / cat.gamma))
        if val > best_val:
            best_key, best_val = key, val

    decisions = []
    key = best_key
    for t in range(T, 0, -1):
        _, prev, items = layers[t][key]
        decisions.append(items)
        key = prev
    decisions.reverse()
    return OracleResult(best_val, decisions, True)


def brute_force_optimum(instance: OfflineInstance) -> OracleResult:
    """Plain enumeration of every sequence of K-subsets; for cross-checks only."""
    cat = instance.catalog
    subsets = list(itertools.combinations(range(cat.n_items), cat.K))
    if len(subsets) ** instance.horizon > ENUMERATION_BUDGET:
        raise EnumerationBudgetError("brute force would exceed the enumeration budget")
    best, best_seq = -math.inf, []
    for seq in itertools.product(subsets, repeat=instance.horizon):
        if not budget_feasible(instance, seq):
            continue
        val = objective(instance, seq)
        if val > best:
            best, best_seq = val, [np.array(s) for s in seq]
    return OracleResult(best, best_seq, best > -math.inf)


def solve_offline_milp(instance: OfflineInstance, time_limit: float | None = None) -> OracleResult:
    """Exact optimum as a mixed-integer program, for instances beyond enumeration."""
    cat = instance.catalog
    T, n = instance.true_scores.shape
    P = cat.n_providers
    nx = T * n
    # variables: x[t, i] flattened row-major, then the floor z
    c = np.concatenate([-instance.true_scores.ravel() / T, [-instance.lam]])

    rows, cols, vals = [], [], []
    for t in range(T):
        rows.extend([t] * n)
        cols.extend(range(t * n, (t + 1) * n))
        vals.extend([1.0] * n)
    card = LinearConstraint(coo_matrix((vals, (rows, cols)), shape=(T, nx + 1)).tocsr(), cat.K, cat.K)

    item_cols = np.arange(nx)
    prov = np.tile(cat.provider_of, T)
    expo = coo_matrix((np.ones(nx), (prov, item_cols)), shape=(P, nx + 1)).tocsr()
    budget = LinearConstraint(expo, -np.inf, cat.gamma)
    # gamma_p * z - E_p <= 0
    floor_mat = coo_matrix(
        (np.concatenate([-np.ones(nx), cat.gamma]),
         (np.concatenate([prov, np.arange(P)]), np.concatenate([item_cols, np.full(P, nx)]))),
        shape=(P, nx + 1)).tocsr()
    floor = LinearConstraint(floor_mat, -np.inf, 0.0)

    integrality = np.concatenate([np.ones(nx), [0]])
    upper = np.concatenate([np.ones(nx), [np.inf]])
    options = {} if time_limit is None else {"time_limit": time_limit}
    res = milp(c, constraints=[card, budget, floor], integrality=integrality,
               bounds=Bounds(np.zeros(nx + 1), upper), options=options)
    if res.status == 2 or res.x is None:
        return OracleResult(-math.inf, [], False)
    if res.status != 0:
        raise RuntimeError(f"MILP solver did not reach optimality: {res.message}")
    x = res.x[:nx].reshape(T, n) > 0.5
    decisions = [np.flatnonzero(row) for row in x]
    return OracleResult(objective(instance, decisions), decisions, True)


def _flow_matrices(instance: OfflineInstance):
    cat = instance.catalog
    T, n = instance.true_scores.shape
    nx = T * n
    card = coo_matrix((np.ones(nx), (np.repeat(np.arange(T), n), np.arange(nx))), shape=(T, nx)).tocsr()
    expo = coo_matrix((np.ones(nx), (np.tile(cat.provider_of, T), np.arange(nx))),
                      shape=(cat.n_providers, nx)).tocsr()
    return card, expo


def _max_accuracy(instance: OfflineInstance, lower, card, expo):
    """Best (1/T)-scaled accuracy with provider exposures in ``[lower, floor(gamma)]``.

    Every column of the constraint matrix has one entry in the step block and
    one in the provider block, so the matrix is totally unimodular and a
    simplex vertex is already a 0/1 decision.
    """
    T, n = instance.true_scores.shape
    cat = instance.catalog
    upper = np.floor(cat.gamma + 1e-9)
    if np.any(lower > upper):
        return -math.inf, None
    res = linprog(-instance.true_scores.ravel() / T,
                  A_ub=vstack([expo, -expo]).tocsr(), b_ub=np.concatenate([upper, -lower]),
                  A_eq=card, b_eq=np.full(T, cat.K), bounds=(0, 1), method="highs-ds")
    if res.status == 2:
        return -math.inf, None
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    x = res.x.reshape(T, n)
    if np.max(np.minimum(np.abs(x), np.abs(1 - x))) > 1e-6:
        raise RuntimeError("LP vertex is not integral")
    return -res.fun, [np.flatnonzero(row > 0.5) for row in x]


def solve_offline_flow(instance: OfflineInstance) -> OracleResult:
    """Exact optimum for medium instances by a search over the fairness floor.

    For a floor ``z`` every provider must reach ``ceil(z * gamma_p)``
    exposures and the best accuracy ``A(z)`` is a transportation LP with an
    integral optimum. The optimum floor is one of the values ``k / gamma_p``;
    since ``A`` is non-increasing, ``A(z_lo) + lam * z_hi`` bounds every
    candidate between two evaluated floors, which drives a branch and bound
    over the sorted candidates.
    """
    cat = instance.catalog
    T = instance.horizon
    card, expo = _flow_matrices(instance)
    upper = np.floor(cat.gamma + 1e-9)
    z_cap = min(float(np.min(upper / cat.gamma)), T * cat.K / float(cat.gamma.sum()))
    cands = sorted({k / g for g, u in zip(cat.gamma, upper) for k in range(int(u) + 1)
                    if k / g <= z_cap + 1e-12} | {0.0})
    cands = np.array(cands)

    cache = {}

    def evaluate(j):
        if j not in cache:
            lower = np.ceil(cands[j] * cat.gamma - 1e-9)
            cache[j] = _max_accuracy(instance, lower, card, expo)
        return cache[j][0]

    best_val, best_dec = -math.inf, None

    def consider(j):
        nonlocal best_val, best_dec
        acc, dec = cache[j]
        if dec is None:
            return
        val = objective(instance, dec)
        if val > best_val:
            best_val, best_dec = val, dec

    lo, hi = 0, len(cands) - 1
    if evaluate(lo) == -math.inf:
        return OracleResult(-math.inf, [], False)
    consider(lo)
    if hi > lo:
        evaluate(hi)
        consider(hi)
    stack = [(lo, hi)] if hi > lo else []
    while stack:
        a, b = stack.pop()
        if b - a <= 1:
            continue
        if cache[a][0] + instance.lam * cands[b] <= best_val + 1e-12:
            continue
        mid = (a + b) // 2
        evaluate(mid)
        consider(mid)
        stack.append((a, mid))
        stack.append((mid, b))
    return OracleResult(best_val, best_dec, True)
