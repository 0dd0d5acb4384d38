"""Long-run accuracy and provider-fairness metrics over an interaction trace.

A trace is any sequence of records with ``user`` and ``items`` attributes,
in arrival order.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .catalog import Catalog


@dataclass
class MetricsReport:
    episode: int
    ctr_at_k: float
    mmf_at_k: float
    r_lambda_at_k: float
    lam: float
    lowest_exposure: float
    lowest_exposure_share: float
    cumulative_exposure: list = field(default_factory=list)
    regret: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _exposure_matrix(trace, catalog: Catalog) -> np.ndarray:
    """(n_arrivals, n_providers) per-arrival exposure counts."""
    out = np.zeros((len(trace), catalog.n_providers))
    for row, rec in enumerate(trace):
        np.add.at(out[row], catalog.provider_of[np.asarray(rec.items, dtype=np.int64)], 1.0)
    return out


def ctr_at_k(trace, true_scores, K: int) -> float:
    """Mean over arrivals of the mean true score of the shown list."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    total = 0.0
    for rec in trace:
        total += true_scores[rec.user, np.asarray(rec.items, dtype=np.int64)].sum() / K
    return float(total / len(trace))


def episode_mmf(trace, catalog: Catalog) -> np.ndarray:
    """Worst budget-normalized provider exposure of each full episode.

    A trailing partial episode is left out.
    """
    T = catalog.T
    n_full = len(trace) // T
    expo = _exposure_matrix(trace[: n_full * T], catalog)
    per_episode = expo.reshape(n_full, T, catalog.n_providers).sum(axis=1)
    return np.min(per_episode / catalog.gamma, axis=1)


def mmf_at_k(trace, catalog: Catalog) -> float:
    per_episode = episode_mmf(trace, catalog)
    if per_episode.size == 0:
        raise ValueError(f"trace of {len(trace)} arrivals has no full episode of T={catalog.T}")
    return float(per_episode.mean())


def dropped_arrivals(trace, catalog: Catalog) -> int:
    """Number of trailing arrivals that MMF@K does not count."""
    return len(trace) % catalog.T


def r_lambda(ctr: float, mmf: float, lam: float) -> float:
    return float(ctr + lam * mmf)


def lowest_exposure_series(trace, catalog: Catalog, share: bool = False) -> np.ndarray:
    """Per episode, the smallest run-to-date provider exposure.

    With ``share`` the minimum is divided by the total exposure so far.
    A trailing partial episode contributes a final point.
    """
    T = catalog.T
    expo = _exposure_matrix(trace, catalog)
    cum = np.cumsum(expo, axis=0)
    ends = list(range(T - 1, len(trace), T))
    if len(trace) % T:
        ends.append(len(trace) - 1)
    lows = cum[ends].min(axis=1)
    if share:
        return lows / cum[ends].sum(axis=1)
    return lows


def cumulative_exposure(trace, catalog: Catalog) -> np.ndarray:
    return _exposure_matrix(trace, catalog).sum(axis=0)


def episode_reports(trace, true_scores, catalog: Catalog, lam: float, regrets=None) -> list[MetricsReport]:
    """One report per full episode, with CTR and MMF measured inside the episode."""
    T = catalog.T
    n_full = len(trace) // T
    lows = lowest_exposure_series(trace, catalog)
    shares = lowest_exposure_series(trace, catalog, share=True)
    reports = []
    for n in range(n_full):
        chunk = trace[n * T:(n + 1) * T]
        ctr = ctr_at_k(chunk, true_scores, catalog.K)
        mmf = mmf_at_k(chunk, catalog)
        reports.append(MetricsReport(
            episode=n,
            ctr_at_k=ctr,
            mmf_at_k=mmf,
            r_lambda_at_k=r_lambda(ctr, mmf, lam),
            lam=lam,
            lowest_exposure=float(lows[n]),
            lowest_exposure_share=float(shares[n]),
            cumulative_exposure=cumulative_exposure(trace[:(n + 1) * T], catalog).tolist(),
            regret=None if regrets is None else float(regrets[n]),
        ))
    return reports


def summary_report(trace, true_scores, catalog: Catalog, lam: float, regret=None) -> MetricsReport:
    ctr = ctr_at_k(trace, true_scores, catalog.K)
    mmf = mmf_at_k(trace, catalog)
    lows = lowest_exposure_series(trace, catalog)
    shares = lowest_exposure_series(trace, catalog, share=True)
    return MetricsReport(
        episode=len(trace) // catalog.T - 1,
        ctr_at_k=ctr,
        mmf_at_k=mmf,
        r_lambda_at_k=r_lambda(ctr, mmf, lam),
        lam=lam,
        lowest_exposure=float(lows[-1]),
        lowest_exposure_share=float(shares[-1]),
        cumulative_exposure=cumulative_exposure(trace, catalog).tolist(),
        regret=regret,
    )
