"""Implicit-feedback log ingestion, leave-one-out splitting, and negative sampling."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DELIMITERS = {"tab": "\t", "comma": ",", "space": None}
COLUMN_NAMES = ("user", "item", "rating", "timestamp", "skip")


class LogParseError(ValueError):
    pass


@dataclass(frozen=True)
class LogFormat:
    """Column order and delimiter of a delimited interaction log.

    `columns` names each field in file order; `rating` columns are binarized to
    implicit positives, `skip` columns are ignored.  Logs without a timestamp
    column use file order as the ordinal.
    """

    columns: tuple[str, ...] = ("user", "item", "rating", "timestamp")
    delimiter: str = "tab"

    def __post_init__(self) -> None:
        unknown = [c for c in self.columns if c not in COLUMN_NAMES]
        if unknown:
            raise ValueError(f"unknown column names: {unknown}")
        for required in ("user", "item"):
            if self.columns.count(required) != 1:
                raise ValueError(f"format needs exactly one {required!r} column")
        if self.delimiter not in DELIMITERS:
            raise ValueError(f"delimiter must be one of {sorted(DELIMITERS)}")

    @classmethod
    def parse(cls, columns: str, delimiter: str = "tab") -> LogFormat:
        return cls(tuple(c.strip() for c in columns.split(",")), delimiter)


@dataclass
class InteractionLog:
    """Deduplicated (user, item, timestamp) events with dense id vocabularies."""

    user_ids: list[str]
    item_ids: list[str]
    users: np.ndarray
    items: np.ndarray
    timestamps: np.ndarray
    raw_events: int

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def num_items(self) -> int:
        return len(self.item_ids)

    @property
    def num_events(self) -> int:
        return self.users.size


def parse_log(path: str | Path, fmt: LogFormat) -> InteractionLog:
    """Parse a delimited log, assigning dense ids in first-seen order.

    Duplicate (user, item) pairs collapse to the earliest timestamp.  Any
    interaction counts as a positive regardless of rating value.
    """
    path = Path(path)
    sep = DELIMITERS[fmt.delimiter]
    user_col = fmt.columns.index("user")
    item_col = fmt.columns.index("item")
    ts_col = fmt.columns.index("timestamp") if "timestamp" in fmt.columns else None

    user_vocab: dict[str, int] = {}
    item_vocab: dict[str, int] = {}
    users: list[int] = []
    items: list[int] = []
    timestamps: list[int] = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split(sep)
            if len(parts) < len(fmt.columns):
                raise LogParseError(f"{path}:{lineno}: expected {len(fmt.columns)} fields, got {len(parts)}")
            try:
                u_raw = parts[user_col].strip()
                i_raw = parts[item_col].strip()
                if not u_raw or not i_raw:
                    raise ValueError("empty id field")
                ts = int(float(parts[ts_col])) if ts_col is not None else lineno
            except ValueError as exc:
                raise LogParseError(f"{path}:{lineno}: malformed row ({exc})") from exc
            u = user_vocab.setdefault(u_raw, len(user_vocab))
            i = item_vocab.setdefault(i_raw, len(item_vocab))
            users.append(u)
            items.append(i)
            timestamps.append(ts)
    if not users:
        raise LogParseError(f"{path}: no interaction rows")

    raw = len(users)
    earliest: dict[tuple[int, int], int] = {}
    for u, i, ts in zip(users, items, timestamps):
        key = (u, i)
        if key not in earliest or ts < earliest[key]:
            earliest[key] = ts
    pairs = sorted(earliest.items())
    u_arr = np.fromiter((p[0][0] for p in pairs), dtype=np.int64, count=len(pairs))
    i_arr = np.fromiter((p[0][1] for p in pairs), dtype=np.int64, count=len(pairs))
    t_arr = np.fromiter((p[1] for p in pairs), dtype=np.int64, count=len(pairs))

    user_names = [""] * len(user_vocab)
    for name, idx in user_vocab.items():
        user_names[idx] = name
    item_names = [""] * len(item_vocab)
    for name, idx in item_vocab.items():
        item_names[idx] = name
    return InteractionLog(user_names, item_names, u_arr, i_arr, t_arr, raw)


@dataclass
class DatasetStats:
    users: int
    items: int
    interactions: int

    def as_dict(self) -> dict[str, int]:
        return {"users": self.users, "items": self.items, "interactions": self.interactions}


EVAL_CANDIDATES = 100


@dataclass
class SplitDataset:
    """Frozen leave-one-out split.

    `eval_candidates[k][0]` is user k's held-out test item followed by 99 fixed
    negatives, so every method and round ranks the same candidate list.
    """

    user_ids: list[str]
    item_ids: list[str]
    train: list[np.ndarray]
    test: np.ndarray
    eval_candidates: np.ndarray
    unobserved_pool: list[np.ndarray]
    pre_filter: DatasetStats
    post_filter: DatasetStats
    seed: int

    @property
    def num_users(self) -> int:
        return len(self.train)

    @property
    def num_items(self) -> int:
        return len(self.item_ids)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in self.train:
            h.update(arr.tobytes())
        h.update(self.test.tobytes())
        h.update(self.eval_candidates.tobytes())
        return h.hexdigest()


def _eval_negative_rng(seed: int, user: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, 0x9E37, user]))


def filter_and_split(
    log: InteractionLog, min_interactions: int = 5, rng_seed: int = 0
) -> SplitDataset:
    """Drop sparse users, hold out each user's most recent item, freeze eval negatives.

    Timestamp ties break toward the larger item id.  Vocabularies are re-densified
    after filtering; 99 negatives per user are drawn without replacement from that
    user's unobserved items.
    """
    if log.num_events == 0:
        raise ValueError("interaction log is empty")
    pre = DatasetStats(log.num_users, log.num_items, log.num_events)

    counts = np.bincount(log.users, minlength=log.num_users)
    keep_user = counts >= min_interactions
    mask = keep_user[log.users]
    users, items, stamps = log.users[mask], log.items[mask], log.timestamps[mask]
    if users.size == 0:
        raise ValueError("no users survive the interaction filter")

    old_users = np.flatnonzero(keep_user)
    user_map = np.full(log.num_users, -1, dtype=np.int64)
    user_map[old_users] = np.arange(old_users.size)
    keep_item = np.zeros(log.num_items, dtype=bool)
    keep_item[items] = True
    old_items = np.flatnonzero(keep_item)
    item_map = np.full(log.num_items, -1, dtype=np.int64)
    item_map[old_items] = np.arange(old_items.size)
    users = user_map[users]
    items = item_map[items]

    m = old_users.size
    n = old_items.size
    post = DatasetStats(m, n, users.size)

    # Per user: latest timestamp wins, larger item id breaks ties.
    order = np.lexsort((items, stamps, users))
    users, items, stamps = users[order], items[order], stamps[order]
    bounds = np.searchsorted(users, np.arange(m + 1))

    train: list[np.ndarray] = []
    test = np.empty(m, dtype=np.int64)
    pools: list[np.ndarray] = []
    cand = np.empty((m, EVAL_CANDIDATES), dtype=np.int64)
    all_items = np.arange(n, dtype=np.int64)
    for k in range(m):
        lo, hi = bounds[k], bounds[k + 1]
        u_items = items[lo:hi]
        test[k] = u_items[-1]
        train_k = np.sort(u_items[:-1])
        train.append(train_k)
        observed = np.zeros(n, dtype=bool)
        observed[u_items] = True
        pool = all_items[~observed]
        if pool.size < EVAL_CANDIDATES:
            raise ValueError(
                f"user {log.user_ids[old_users[k]]!r} has only {pool.size} unobserved items; "
                f"the {EVAL_CANDIDATES}-candidate protocol is infeasible"
            )
        pools.append(pool.astype(np.int64))
        rng = _eval_negative_rng(rng_seed, k)
        negs = rng.choice(pool, size=EVAL_CANDIDATES - 1, replace=False)
        cand[k, 0] = test[k]
        cand[k, 1:] = negs

    return SplitDataset(
        user_ids=[log.user_ids[i] for i in old_users],
        item_ids=[log.item_ids[i] for i in old_items],
        train=train,
        test=test,
        eval_candidates=cand,
        unobserved_pool=pools,
        pre_filter=pre,
        post_filter=post,
        seed=rng_seed,
    )


def sample_train_negatives(
    ds: SplitDataset,
    user: int,
    negatives_per_positive: int = 4,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Labeled training samples for one user: each positive followed by its negatives.

    Negatives are uniform draws (with replacement across positives) from the user's
    unobserved pool, which excludes train and test items by construction.  Returns
    (items, labels) of length (1 + negatives_per_positive) * |train positives|.
    """
    if rng is None:
        rng = np.random.default_rng()
    pos = ds.train[user]
    pool = ds.unobserved_pool[user]
    npp = negatives_per_positive
    negs = pool[rng.integers(0, pool.size, size=pos.size * npp)]
    items = np.empty(pos.size * (npp + 1), dtype=np.int64)
    labels = np.zeros(items.size, dtype=np.float64)
    items[:: npp + 1] = pos
    labels[:: npp + 1] = 1.0
    block = items.reshape(pos.size, npp + 1)
    block[:, 1:] = negs.reshape(pos.size, npp)
    return items, labels


def save_split(ds: SplitDataset, path: str | Path) -> None:
    """Canonical split file: user, test item, train items, 99 eval negatives."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for k in range(ds.num_users):
            train = " ".join(str(i) for i in ds.train[k])
            negs = " ".join(str(i) for i in ds.eval_candidates[k, 1:])
            f.write(f"{k}\t{ds.test[k]}\t{train}\t{negs}\n")


def load_split_arrays(path: str | Path) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
    """Read back a canonical split file as (train, test, eval_candidates)."""
    train: list[np.ndarray] = []
    test: list[int] = []
    cand: list[list[int]] = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            _, t, tr, ng = line.rstrip("\n").split("\t")
            test.append(int(t))
            train.append(np.array([int(x) for x in tr.split()], dtype=np.int64))
            cand.append([int(t)] + [int(x) for x in ng.split()])
    return train, np.asarray(test, dtype=np.int64), np.asarray(cand, dtype=np.int64)
