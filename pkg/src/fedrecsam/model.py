"""Recommendation model: private user embedding, shared item table, shared scorer.

All parameters are float64 numpy arrays.  Gradients are closed-form and exact;
item-embedding gradients are returned sparsely (only rows touched by the batch).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import OptimizerState, make_optimizer
from .vectors import SharedVec

SCORE_DOT = "dot"
SCORE_MLP1 = "mlp1"
SCORE_VARIANTS = (SCORE_DOT, SCORE_MLP1)


@dataclass
class ScoreFn:
    """Score-function weights.

    `dot` has no parameters.  `mlp1` is one ReLU hidden layer on the concatenation
    [user_embedding ; item_embedding]: w1 (2d, h), b1 (h,), w2 (h,), b2 (1,).
    """

    variant: str
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def zeros(cls, variant: str, dim: int, hidden: int) -> ScoreFn:
        if variant == SCORE_DOT:
            return cls(variant, np.zeros((0, 0)), np.zeros(0), np.zeros(0), np.zeros(0))
        if variant == SCORE_MLP1:
            return cls(
                variant,
                np.zeros((2 * dim, hidden)),
                np.zeros(hidden),
                np.zeros(hidden),
                np.zeros(1),
            )
        raise ValueError(f"unknown score variant: {variant!r}")

    @property
    def num_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    @property
    def hidden(self) -> int:
        return self.b1.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, self.b2])

    @classmethod
    def from_flat(cls, variant: str, dim: int, hidden: int, flat: np.ndarray) -> ScoreFn:
        proto = cls.zeros(variant, dim, hidden)
        if flat.size != proto.num_params:
            raise ValueError("flat score vector has wrong length")
        if variant == SCORE_DOT:
            return proto
        k = proto.w1.size
        w1 = flat[:k].reshape(proto.w1.shape)
        b1 = flat[k:k + hidden]
        w2 = flat[k + hidden:k + 2 * hidden]
        b2 = flat[k + 2 * hidden:]
        return cls(variant, w1.copy(), b1.copy(), w2.copy(), b2.copy())

    def copy(self) -> ScoreFn:
        return ScoreFn(self.variant, self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


@dataclass
class GlobalParams:
    """Shared parameters: item-embedding matrix plus score-function weights."""

    item_embeddings: np.ndarray
    score: ScoreFn

    @property
    def num_items(self) -> int:
        return self.item_embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.item_embeddings.shape[1]

    @property
    def t_co(self) -> int:
        return self.item_embeddings.size + self.score.num_params

    def flat_co(self) -> np.ndarray:
        return np.concatenate([self.item_embeddings.ravel(), self.score.flat()])

    @classmethod
    def from_flat_co(
        cls, flat: np.ndarray, n_items: int, dim: int, variant: str, hidden: int
    ) -> GlobalParams:
        emb = flat[: n_items * dim].reshape(n_items, dim).copy()
        score = ScoreFn.from_flat(variant, dim, hidden, flat[n_items * dim:])
        return cls(emb, score)

    def copy(self) -> GlobalParams:
        return GlobalParams(self.item_embeddings.copy(), self.score.copy())

    def frozen_copy(self) -> GlobalParams:
        """Read-only snapshot; attempted writes raise."""
        snap = self.copy()
        snap.item_embeddings.flags.writeable = False
        for arr in (snap.score.w1, snap.score.b1, snap.score.w2, snap.score.b2):
            arr.flags.writeable = False
        return snap


@dataclass
class ClientState:
    """One user's private embedding and its local optimizer state."""

    user_id: int
    user_embedding: np.ndarray
    opt: OptimizerState | None = field(repr=False, default=None)

    def copy(self) -> ClientState:
        return ClientState(
            self.user_id,
            self.user_embedding.copy(),
            self.opt.copy() if self.opt is not None else None,
        )


def init_global(
    n_items: int,
    dim: int,
    rng: np.random.Generator,
    variant: str = SCORE_DOT,
    hidden: int = 16,
) -> GlobalParams:
    bound = 0.5 / np.sqrt(dim)
    emb = rng.uniform(-bound, bound, size=(n_items, dim))
    score = ScoreFn.zeros(variant, dim, hidden)
    if variant == SCORE_MLP1:
        score.w1 = rng.uniform(-1.0, 1.0, size=score.w1.shape) / np.sqrt(2 * dim)
        score.w2 = rng.uniform(-1.0, 1.0, size=score.w2.shape) / np.sqrt(hidden)
    return GlobalParams(emb, score)


def init_clients(
    num_users: int,
    dim: int,
    rng: np.random.Generator,
    optimizer: str = "adam",
) -> list[ClientState]:
    bound = 0.5 / np.sqrt(dim)
    emb = rng.uniform(-bound, bound, size=(num_users, dim))
    return [
        ClientState(k, emb[k].copy(), make_optimizer(optimizer, dim)) for k in range(num_users)
    ]


def make_batch_ctx(items, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Precomputed batch view shared by the forward/backward passes."""
    items = np.asarray(items, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.float64)
    if items.size == 0:
        raise ValueError("batch is empty")
    uniq, inv = np.unique(items, return_inverse=True)
    return items, labels, uniq, inv


def _aligned_rows(shift: SharedVec, uniq: np.ndarray) -> np.ndarray:
    """Rows of `shift` aligned with the sorted id array `uniq` (zeros where absent)."""
    out = np.zeros((uniq.size, shift.dim))
    if shift.item_ids.size:
        pos = np.searchsorted(shift.item_ids, uniq)
        pos = np.minimum(pos, shift.item_ids.size - 1)
        hit = shift.item_ids[pos] == uniq
        out[hit] = shift.item_rows[pos[hit]]
    return out


def _forward(u: np.ndarray, vi: np.ndarray, score: ScoreFn) -> tuple[np.ndarray, tuple | None]:
    if score.variant == SCORE_DOT:
        return vi @ u, None
    x = np.concatenate([np.broadcast_to(u, vi.shape), vi], axis=1)
    z = x @ score.w1 + score.b1
    a = np.maximum(z, 0.0)
    s = a @ score.w2 + score.b2[0]
    return s, (x, z, a)


def _loss_and_grads(
    g: GlobalParams,
    c: ClientState,
    ctx: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    co_shift: SharedVec | None = None,
    ur_shift: np.ndarray | None = None,
    want_ur: bool = True,
    want_co: bool = True,
) -> tuple[float, SharedVec | None, np.ndarray | None]:
    """Mean BCE-with-logits loss and exact gradients, optionally at shifted parameters.

    `co_shift` perturbs touched item rows and score weights, `ur_shift` the user
    embedding; the base parameters are never modified.
    """
    items, labels, uniq, inv = ctx
    rows = g.item_embeddings[uniq]
    score = g.score
    if co_shift is not None:
        if co_shift.item_ids is uniq:
            rows = rows + co_shift.item_rows
        else:
            rows = rows + _aligned_rows(co_shift, uniq)
        if score.num_params:
            score = ScoreFn.from_flat(score.variant, g.dim, score.hidden, score.flat() + co_shift.score)
    u = c.user_embedding if ur_shift is None else c.user_embedding + ur_shift

    b = items.size
    if score.variant == SCORE_DOT:
        # Per-unique-item scores; everything downstream factors through them.
        s = (rows @ u)[inv]
        cache = None
    else:
        vi = rows[inv]
        s, cache = _forward(u, vi, score)
    la = np.logaddexp(0.0, s)
    loss = float(la.sum() - s @ labels) / b
    if not (want_ur or want_co):
        return loss, None, None

    coeff = (np.exp(s - la) - labels) / b
    grad_u = None
    shared = None
    if score.variant == SCORE_DOT:
        per_item = np.bincount(inv, weights=coeff, minlength=uniq.size)
        if want_ur:
            grad_u = per_item @ rows
        if want_co:
            shared = SharedVec(g.num_items, g.dim, uniq, per_item[:, None] * u[None, :], np.zeros(0))
    else:
        x, z, a = cache
        dz = (coeff[:, None] * score.w2[None, :]) * (z > 0)
        dx = dz @ score.w1.T
        if want_ur:
            grad_u = dx[:, : g.dim].sum(axis=0)
        if want_co:
            dw2 = a.T @ coeff
            db2 = np.array([coeff.sum()])
            db1 = dz.sum(axis=0)
            dw1 = x.T @ dz
            dvi = dx[:, g.dim:]
            row_grads = np.zeros((uniq.size, g.dim))
            np.add.at(row_grads, inv, dvi)
            score_grad = np.concatenate([dw1.ravel(), db1, dw2, db2])
            shared = SharedVec(g.num_items, g.dim, uniq, row_grads, score_grad)
    return loss, shared, grad_u


def score(g: GlobalParams, c: ClientState, item: int) -> float:
    """Logit for one (user, item) pair."""
    return float(score_many(g, c, np.asarray([item]))[0])


def score_many(g: GlobalParams, c: ClientState, items: np.ndarray) -> np.ndarray:
    items = np.asarray(items, dtype=np.int64)
    if items.size and items.max() >= g.num_items:
        raise IndexError("item id out of range")
    s, _ = _forward(c.user_embedding, g.item_embeddings[items], g.score)
    return s


def batch_loss(g: GlobalParams, c: ClientState, items: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with logits over the batch (stable log-sum-exp form)."""
    loss, _, _ = _loss_and_grads(g, c, make_batch_ctx(items, labels), want_ur=False, want_co=False)
    return loss


def batch_gradients(
    g: GlobalParams, c: ClientState, items: np.ndarray, labels: np.ndarray
) -> tuple[SharedVec, np.ndarray]:
    """Exact gradients of `batch_loss` w.r.t. shared and private parameters."""
    _, shared, grad_u = _loss_and_grads(g, c, make_batch_ctx(items, labels))
    return shared, grad_u
