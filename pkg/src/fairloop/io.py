"""Dataset ingestion, score matrices and result persistence.

This is the only module that touches files besides the small provider-map
readers in :mod:`fairloop.catalog`.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

INTERACTION_HEADER = ["user_id", "item_id", "rating", "timestamp"]
TRIPLET_HEADER = ["user", "item", "score"]
SUMMARY_HEADER = ["policy", "seed", "lambda", "K", "T", "ctr", "mmf", "r", "regret", "wall_ms"]
CLICK_MIN_RATING = 4
TRAIN_FRACTION = 0.8


# --------------------------------------------------------------------------
# interactions


@dataclass
class InteractionTable:
    """Raw interactions sorted by timestamp (ties keep file order)."""

    user: np.ndarray  # str ids
    item: np.ndarray  # str ids
    rating: np.ndarray
    timestamp: np.ndarray
    click: np.ndarray

    def __len__(self) -> int:
        return self.user.size

    def take(self, mask_or_index) -> "InteractionTable":
        return InteractionTable(self.user[mask_or_index], self.item[mask_or_index],
                                self.rating[mask_or_index], self.timestamp[mask_or_index],
                                self.click[mask_or_index])


def rating_to_click(rating) -> np.ndarray:
    return (np.asarray(rating, dtype=float) >= CLICK_MIN_RATING).astype(np.int8)


def load_interactions(path) -> InteractionTable:
    """Read a ``user_id,item_id,rating,timestamp`` CSV.

    Ratings of 4 or more count as clicks. Rows are stably sorted by timestamp.
    Every malformed row is reported, with its line number, in one error.
    """
    users, items, ratings, stamps, bad = [], [], [], [], []
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        if [h.strip() for h in header] != INTERACTION_HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(INTERACTION_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                bad.append(f"line {lineno}: expected 4 fields, got {len(row)}")
                continue
            u, i, r, ts = (c.strip() for c in row)
            if not u or not i:
                bad.append(f"line {lineno}: empty id")
                continue
            try:
                r, ts = float(r), float(ts)
            except ValueError:
                bad.append(f"line {lineno}: non-numeric rating or timestamp")
                continue
            if not (np.isfinite(r) and np.isfinite(ts)):
                bad.append(f"line {lineno}: non-finite rating or timestamp")
                continue
            users.append(u)
            items.append(i)
            ratings.append(r)
            stamps.append(ts)
    if bad:
        raise ValueError(f"{path}: {len(bad)} malformed row(s): " + "; ".join(bad))
    if not users:
        raise ValueError(f"{path}: no interactions")
    order = np.argsort(np.asarray(stamps), kind="stable")
    rating = np.asarray(ratings)[order]
    return InteractionTable(np.asarray(users, dtype=object)[order], np.asarray(items, dtype=object)[order],
                            rating, np.asarray(stamps)[order], rating_to_click(rating))


@dataclass
class PreprocessResult:
    user_ids: list
    item_ids: list
    provider_ids: list
    provider_of: np.ndarray
    train: np.ndarray  # (n, 4): user index, item index, click, timestamp
    test: np.ndarray
    stats: dict = field(default_factory=dict)


def _degrees(keys: np.ndarray, partner: np.ndarray) -> dict:
    """Number of distinct partners per key."""
    pairs = set(zip(keys.tolist(), partner.tolist()))
    out: dict = {}
    for k, _ in pairs:
        out[k] = out.get(k, 0) + 1
    return out


def _as_provider_dict(provider_map) -> dict:
    if isinstance(provider_map, dict):
        return {str(k): str(v) for k, v in provider_map.items()}
    provider_of, item_ids, provider_ids = provider_map
    return {str(item_ids[i]): str(provider_ids[p]) for i, p in enumerate(provider_of)}


def filter_to_fixed_point(table: InteractionTable, owner: dict, min_degree: int = 5):
    """Drop sparse users, sparse items and small providers until nothing changes.

    Returns the filtered table and the number of passes taken.
    """
    keep = np.array([i in owner for i in table.item], dtype=bool)
    table = table.take(keep)
    passes = 0
    while True:
        passes += 1
        n_before = len(table)
        if n_before == 0:
            break
        user_deg = _degrees(table.user, table.item)
        item_deg = _degrees(table.item, table.user)
        prov = np.array([owner[i] for i in table.item], dtype=object)
        prov_size = _degrees(prov, table.item)
        keep = np.array([user_deg[u] >= min_degree and item_deg[i] >= min_degree and prov_size[p] >= min_degree
                         for u, i, p in zip(table.user, table.item, prov)], dtype=bool)
        table = table.take(keep)
        if len(table) == n_before:
            break
    return table, passes


def preprocess(table: InteractionTable, provider_map, min_degree: int = 5) -> PreprocessResult:
    """Degree filtering to a fixed point, then a global-time 80/20 split.

    ``provider_map`` is either ``{item_id: provider_id}`` or the tuple returned
    by :func:`fairloop.catalog.read_provider_map`. Items without a provider are
    dropped.
    """
    if min_degree < 1:
        raise ValueError("min_degree must be >= 1")
    owner = _as_provider_dict(provider_map)
    n_raw = len(table)
    unmapped = int(sum(i not in owner for i in table.item))
    filtered, passes = filter_to_fixed_point(table, owner, min_degree)
    if len(filtered) == 0:
        raise ValueError(
            f"no interactions left after filtering: {n_raw} raw rows, {unmapped} without a provider, "
            f"{len(set(table.user))} users, {len(set(table.item))} items, min_degree={min_degree}")

    user_index: dict = {}
    item_index: dict = {}
    provider_index: dict = {}
    provider_of: list = []
    rows = np.empty((len(filtered), 4))
    for n, (u, i) in enumerate(zip(filtered.user, filtered.item)):
        uu = user_index.setdefault(u, len(user_index))
        if i not in item_index:
            item_index[i] = len(item_index)
            provider_of.append(provider_index.setdefault(owner[i], len(provider_index)))
        rows[n] = (uu, item_index[i], filtered.click[n], filtered.timestamp[n])
    cut = int(np.floor(TRAIN_FRACTION * len(rows)))
    stats = dict(raw_rows=n_raw, unmapped_rows=unmapped, kept_rows=len(filtered), passes=passes,
                 n_users=len(user_index), n_items=len(item_index), n_providers=len(provider_index),
                 train_rows=cut, test_rows=len(rows) - cut, min_degree=min_degree)
    return PreprocessResult(list(user_index), list(item_index), list(provider_index),
                            np.array(provider_of, dtype=np.int64), rows[:cut], rows[cut:], stats)


def write_split(path, rows: np.ndarray, user_ids, item_ids):
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "item_id", "click", "timestamp"])
        for u, i, c, ts in rows:
            w.writerow([user_ids[int(u)], item_ids[int(i)], int(c), repr(float(ts))])


# --------------------------------------------------------------------------
# score matrices


@dataclass
class ScoreMatrix:
    values: np.ndarray
    clamped: int = 0
    filled: int = 0


def _parse_float(cell: str, where: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ValueError(f"{where}: not a number: {cell!r}") from None
    if np.isnan(v):
        raise ValueError(f"{where}: NaN score")
    return v


def load_score_matrix(path, shape: tuple[int, int] | None = None, fill: float = 0.0) -> ScoreMatrix:
    """Read true click rates from a dense CSV or a ``user,item,score`` triplet file.

    Values are clamped to [0, 1] and the number of clamped entries is kept.
    Triplet files may leave pairs out; those get ``fill`` and are counted.
    ``shape`` is required for triplets and checked for dense files.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    numbered = [(n, r) for n, r in enumerate(rows, start=1) if r and any(c.strip() for c in r)]
    if not numbered:
        raise ValueError(f"{path}: empty score file")

    first = [c.strip() for c in numbered[0][1]]
    if first == TRIPLET_HEADER:
        if shape is None:
            raise ValueError(f"{path}: triplet score files need an explicit shape")
        values = np.full(shape, np.nan)
        for n, r in numbered[1:]:
            if len(r) != 3:
                raise ValueError(f"{path}:{n}: expected 3 fields, got {len(r)}")
            try:
                u, i = int(r[0]), int(r[1])
            except ValueError:
                raise ValueError(f"{path}:{n}: non-integer index") from None
            if not (0 <= u < shape[0] and 0 <= i < shape[1]):
                raise ValueError(f"{path}:{n}: index ({u}, {i}) outside shape {tuple(shape)}")
            if not np.isnan(values[u, i]):
                raise ValueError(f"{path}:{n}: pair ({u}, {i}) listed twice")
            values[u, i] = _parse_float(r[2], f"{path}:{n}")
        missing = np.isnan(values)
        filled = int(missing.sum())
        values[missing] = fill
    else:
        width = len(numbered[0][1])
        data = []
        for n, r in numbered:
            if len(r) != width:
                raise ValueError(f"{path}:{n}: expected {width} columns, got {len(r)}")
            data.append([_parse_float(c, f"{path}:{n}") for c in r])
        values = np.array(data, dtype=float)
        filled = 0
        if shape is not None and values.shape != tuple(shape):
            raise ValueError(f"{path}: score matrix shape {values.shape} does not match expected {tuple(shape)}")
    out_of_range = (values < 0) | (values > 1)
    return ScoreMatrix(np.clip(values, 0.0, 1.0), int(out_of_range.sum()), filled)


# --------------------------------------------------------------------------
# result persistence


@dataclass
class RunManifest:
    config: dict
    seeds: list
    version: str = __version__
    outputs: dict = field(default_factory=dict)
    timings_ms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def episode_rows(trace, seed: int, manifest_ref: str) -> list[dict]:
    """One JSON-ready dict per episode, tagged with seed, policy and manifest."""
    rows = []
    for rep in trace.reports:
        row = dict(seed=seed, policy=trace.config.policy, manifest=manifest_ref)
        row.update(rep.to_dict())
        rows.append(row)
    return rows


def write_jsonl(path, rows):
    with open(Path(path), "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, default=_jsonable) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(Path(path)) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def summary_row(trace) -> dict:
    cfg, s = trace.config, trace.summary
    return {"policy": cfg.policy, "seed": cfg.seed, "lambda": cfg.lam, "K": cfg.K, "T": cfg.T,
            "ctr": float(s.ctr_at_k), "mmf": float(s.mmf_at_k), "r": float(s.r_lambda_at_k),
            "regret": "" if s.regret is None else float(s.regret), "wall_ms": float(trace.wall_ms)}


def write_summary_csv(path, rows):
    with open(Path(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_HEADER)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_summary_csv(path) -> list[dict]:
    with open(Path(path), newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(path, manifest: RunManifest):
    with open(Path(path), "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
