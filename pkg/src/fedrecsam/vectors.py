"""Flat-vector algebra for dense parameter blocks and sparse shared-space vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def flat_norm(x: np.ndarray) -> float:
    """L2 norm of a flat parameter vector."""
    return float(np.linalg.norm(x))


def scale(a: float, x: np.ndarray) -> np.ndarray:
    return a * x


def add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return x + y


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """a*x + y."""
    return a * x + y


@dataclass
class SharedVec:
    """Sparse vector over the shared-parameter space.

    The shared space is the concatenation of all item-embedding rows (n_items x dim,
    row-major) followed by the flattened score-function weights.  Only touched item
    rows are stored; absent rows are exact zeros.  `item_ids` is sorted ascending and
    duplicate-free; `item_rows` is aligned with it.  Instances are treated as
    immutable: operations return new objects.
    """

    n_items: int
    dim: int
    item_ids: np.ndarray
    item_rows: np.ndarray
    score: np.ndarray

    @classmethod
    def zeros(cls, n_items: int, dim: int, t_score: int) -> SharedVec:
        return cls(
            n_items=n_items,
            dim=dim,
            item_ids=np.empty(0, dtype=np.int64),
            item_rows=np.empty((0, dim), dtype=np.float64),
            score=np.zeros(t_score, dtype=np.float64),
        )

    @property
    def flat_dim(self) -> int:
        return self.n_items * self.dim + self.score.size

    def norm(self) -> float:
        # Untouched rows are exact zeros and contribute nothing.
        sq = float(np.vdot(self.item_rows, self.item_rows)) + float(np.vdot(self.score, self.score))
        return float(np.sqrt(sq))

    def scaled(self, a: float) -> SharedVec:
        return SharedVec(self.n_items, self.dim, self.item_ids, a * self.item_rows, a * self.score)

    def add(self, other: SharedVec) -> SharedVec:
        if (self.n_items, self.dim, self.score.size) != (other.n_items, other.dim, other.score.size):
            raise ValueError("shared-vector shapes disagree")
        ids = np.union1d(self.item_ids, other.item_ids)
        rows = np.zeros((ids.size, self.dim), dtype=np.float64)
        rows[np.searchsorted(ids, self.item_ids)] += self.item_rows
        rows[np.searchsorted(ids, other.item_ids)] += other.item_rows
        return SharedVec(self.n_items, self.dim, ids, rows, self.score + other.score)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.flat_dim, dtype=np.float64)
        emb = out[: self.n_items * self.dim].reshape(self.n_items, self.dim)
        emb[self.item_ids] = self.item_rows
        out[self.n_items * self.dim:] = self.score
        return out

    def copy(self) -> SharedVec:
        return SharedVec(
            self.n_items, self.dim, self.item_ids.copy(), self.item_rows.copy(), self.score.copy()
        )
