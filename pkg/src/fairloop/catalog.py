"""Items, providers and per-provider exposure budgets."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Catalog:
    """Static multi-stakeholder world.

    ``provider_of[i]`` is the provider owning item ``i``; ``gamma[p]`` is the
    exposure budget of provider ``p`` over one episode of ``T`` arrivals with
    ``K`` items shown per arrival.
    """

    provider_of: np.ndarray
    gamma: np.ndarray
    K: int
    T: int
    provider_ids: tuple = field(default=())
    item_ids: tuple = field(default=())

    def __post_init__(self):
        provider_of = np.asarray(self.provider_of, dtype=np.int64)
        gamma = np.asarray(self.gamma, dtype=np.float64)
        if provider_of.ndim != 1 or provider_of.size == 0:
            raise ValueError("provider_of must be a non-empty 1-D array")
        if provider_of.min() < 0:
            raise ValueError("provider indices must be non-negative")
        n_providers = gamma.size
        if provider_of.max() >= n_providers:
            raise ValueError("provider_of references a provider without a budget")
        counts = np.bincount(provider_of, minlength=n_providers)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            raise ValueError(f"providers without items: {empty.tolist()}")
        if not np.all(gamma > 0):
            raise ValueError("every exposure budget gamma[p] must be > 0")
        if not 1 <= self.K <= provider_of.size:
            raise ValueError(f"K={self.K} must lie in [1, n_items={provider_of.size}]")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        provider_of.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "provider_of", provider_of)
        object.__setattr__(self, "gamma", gamma)

    @property
    def n_items(self) -> int:
        return self.provider_of.size

    @property
    def n_providers(self) -> int:
        return self.gamma.size

    @property
    def provider_sizes(self) -> np.ndarray:
        return np.bincount(self.provider_of, minlength=self.n_providers)

    def items_of(self, p: int) -> np.ndarray:
        return np.flatnonzero(self.provider_of == p)


def default_richness(n_providers: int) -> float:
    return 1.0 + 1.0 / n_providers


def budget_rule(provider_sizes, K: int, T: int, richness: float) -> np.ndarray:
    """gamma_p = K * T * richness * |I_p| / |I|."""
    sizes = np.asarray(provider_sizes, dtype=np.float64)
    return K * T * richness * sizes / sizes.sum()


def build_catalog(provider_of, K: int, T: int, richness: float | None = None,
                  provider_ids=(), item_ids=()) -> Catalog:
    provider_of = np.asarray(provider_of, dtype=np.int64)
    if provider_of.ndim != 1 or provider_of.size == 0:
        raise ValueError("provider_of must be a non-empty 1-D array")
    if K > provider_of.size:
        raise ValueError(f"K={K} exceeds n_items={provider_of.size}")
    n_providers = int(provider_of.max()) + 1
    sizes = np.bincount(provider_of, minlength=n_providers)
    if np.any(sizes == 0):
        raise ValueError(f"providers without items: {np.flatnonzero(sizes == 0).tolist()}")
    if richness is None:
        richness = default_richness(n_providers)
    gamma = budget_rule(sizes, K, T, richness)
    return Catalog(provider_of, gamma, K, T, tuple(provider_ids), tuple(item_ids))


def exposures_of(decision, catalog: Catalog) -> np.ndarray:
    """Per-provider count of items in ``decision`` (the product M^T x)."""
    items = np.asarray(decision, dtype=np.int64).ravel()
    if np.unique(items).size != items.size:
        raise ValueError("decision contains duplicate items")
    return np.bincount(catalog.provider_of[items], minlength=catalog.n_providers).astype(np.float64)


def read_provider_map(path) -> tuple[np.ndarray, list[str], list[str]]:
    """Read an ``item_id,provider_id`` CSV.

    Ids are arbitrary strings; both are mapped to dense indices in the order
    they are first seen. Returns ``(provider_of, item_ids, provider_ids)``.
    """
    item_index: dict[str, int] = {}
    provider_index: dict[str, int] = {}
    provider_of: list[int] = []
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["item_id", "provider_id"]:
            raise ValueError(f"{path}: expected header 'item_id,provider_id', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            item, provider = row[0].strip(), row[1].strip()
            if item in item_index:
                raise ValueError(f"{path}:{lineno}: item {item!r} listed twice")
            p = provider_index.setdefault(provider, len(provider_index))
            item_index[item] = len(item_index)
            provider_of.append(p)
    if not provider_of:
        raise ValueError(f"{path}: no rows")
    return np.array(provider_of, dtype=np.int64), list(item_index), list(provider_index)


def write_provider_map(path, provider_of, item_ids=None, provider_ids=None):
    provider_of = np.asarray(provider_of)
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "provider_id"])
        for i, p in enumerate(provider_of):
            item = item_ids[i] if item_ids is not None else str(i)
            prov = provider_ids[p] if provider_ids is not None else str(p)
            writer.writerow([item, prov])
