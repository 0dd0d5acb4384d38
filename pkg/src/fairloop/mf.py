"""Matrix-factorization accuracy module with closed-form ridge updates.

Each user keeps ridge statistics ``(A_u, b_u)`` over the item embeddings it
has been shown, each item keeps ``(C_i, d_i)`` over the user embeddings that
were shown it. Embeddings are the normalized ridge solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ZERO_SOLUTION_TOL = 1e-12


def _random_unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@dataclass
class EmbeddingState:
    d: int
    lambda_u: float
    lambda_i: float
    A: np.ndarray        # (n_users, d, d)
    b: np.ndarray        # (n_users, d)
    user_emb: np.ndarray  # (n_users, d)
    C: np.ndarray        # (n_items, d, d)
    dvec: np.ndarray     # (n_items, d)
    item_emb: np.ndarray  # (n_items, d)
    user_obs: np.ndarray
    item_obs: np.ndarray

    def __post_init__(self):
        self._A_inv = None
        self._C_inv = None

    @property
    def n_users(self) -> int:
        return self.user_emb.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_emb.shape[0]

    # Inverses are cached for the read-only ranking phase and rebuilt by a
    # fresh inversion whenever the statistics change.
    @property
    def A_inv(self) -> np.ndarray:
        if self._A_inv is None:
            self._A_inv = np.linalg.inv(self.A)
        return self._A_inv

    @property
    def C_inv(self) -> np.ndarray:
        if self._C_inv is None:
            self._C_inv = np.linalg.inv(self.C)
        return self._C_inv

    def _refresh_inverses(self, users, items):
        if self._A_inv is not None and len(users):
            idx = np.fromiter(users, dtype=np.int64)
            self._A_inv[idx] = np.linalg.inv(self.A[idx])
        if self._C_inv is not None and len(items):
            idx = np.fromiter(items, dtype=np.int64)
            self._C_inv[idx] = np.linalg.inv(self.C[idx])

    def copy(self) -> "EmbeddingState":
        return EmbeddingState(
            self.d, self.lambda_u, self.lambda_i,
            self.A.copy(), self.b.copy(), self.user_emb.copy(),
            self.C.copy(), self.dvec.copy(), self.item_emb.copy(),
            self.user_obs.copy(), self.item_obs.copy(),
        )


def init_embeddings(n_users: int, n_items: int, d: int, lambda_u: float = 1.0,
                    lambda_i: float = 1.0, seed=None) -> EmbeddingState:
    if d < 1:
        raise ValueError("embedding dimension d must be >= 1")
    if lambda_u <= 0 or lambda_i <= 0:
        raise ValueError("ridge weights must be > 0")
    rng = np.random.default_rng(seed)
    user_emb = _random_unit_rows(rng, n_users, d)
    item_emb = _random_unit_rows(rng, n_items, d)
    eye = np.eye(d)
    return EmbeddingState(
        d=d,
        lambda_u=float(lambda_u),
        lambda_i=float(lambda_i),
        A=np.broadcast_to(lambda_u * eye, (n_users, d, d)).copy(),
        b=np.zeros((n_users, d)),
        user_emb=user_emb,
        C=np.broadcast_to(lambda_i * eye, (n_items, d, d)).copy(),
        dvec=np.zeros((n_items, d)),
        item_emb=item_emb,
        user_obs=np.zeros(n_users, dtype=np.int64),
        item_obs=np.zeros(n_items, dtype=np.int64),
    )


def predict_score(state: EmbeddingState, u: int, i: int) -> float:
    return float(state.user_emb[u] @ state.item_emb[i])


def predict_scores(state: EmbeddingState, u: int) -> np.ndarray:
    """Scores of user ``u`` against every item."""
    return state.item_emb @ state.user_emb[u]


def _ridge_solve(M: np.ndarray, rhs: np.ndarray, previous: np.ndarray) -> np.ndarray:
    v = np.linalg.solve(M, rhs)
    norm = np.linalg.norm(v)
    if norm < ZERO_SOLUTION_TOL:
        return previous
    return v / norm


def ingest_feedback(state: EmbeddingState, batch) -> EmbeddingState:
    """Apply a buffer of ``(user, item, click)`` records in order.

    Mutates and returns ``state``. Per record, ``(A_u, b_u)`` are updated
    together and ``v_u`` re-solved, then ``(C_i, d_i)`` are updated with the
    user embedding as it was before this record and ``v_i`` re-solved.
    """
    records = list(batch)
    for u, i, c in records:
        if c not in (0, 1):
            raise ValueError(f"click must be 0 or 1, got {c!r}")
        if not (0 <= u < state.n_users and 0 <= i < state.n_items):
            raise IndexError(f"record ({u}, {i}) out of range")

    touched_users, touched_items = set(), set()
    for u, i, c in records:
        v_u = state.user_emb[u].copy()
        v_i = state.item_emb[i].copy()

        state.A[u] += np.outer(v_i, v_i)
        state.b[u] += v_i * c
        state.user_emb[u] = _ridge_solve(state.A[u], state.b[u], v_u)

        state.C[i] += np.outer(v_u, v_u)
        state.dvec[i] += v_u * c
        state.item_emb[i] = _ridge_solve(state.C[i], state.dvec[i], v_i)

        state.user_obs[u] += 1
        state.item_obs[i] += 1
        touched_users.add(int(u))
        touched_items.add(int(i))

    state._refresh_inverses(touched_users, touched_items)
    return state
