"""Seeded synthetic implicit-feedback logs for demos and the test suite.

The generator plants a low-rank user/item affinity structure plus a heavy-tailed
item popularity curve, so trained rankers beat chance by a wide margin and
overfitting is measurable.  Counts are exact: after dropping users below the
interaction floor, the log reproduces the requested user/item/interaction totals.
The raw file additionally contains sub-floor chaff users and duplicated rows so
ingestion filters have something to do.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

FILMTRUST_SCALE = {"users": 1227, "items": 2059, "interactions": 34889}


@dataclass(frozen=True)
class SynthSpec:
    users: int = 1227
    items: int = 2059
    interactions: int = 34889
    min_per_user: int = 5
    max_per_user: int = 300
    latent_dim: int = 8
    affinity_weight: float = 1.2
    popularity_weight: float = 1.0
    noise_temperature: float = 1.0
    chaff_users: int = 40
    duplicate_rows: int = 200
    seed: int = 7

    def validate(self) -> None:
        if self.users < 1 or self.items < 1:
            raise ValueError("need at least one user and one item")
        if not (self.min_per_user * self.users <= self.interactions <= self.max_per_user * self.users):
            raise ValueError("interaction total incompatible with per-user bounds")
        if self.items < self.max_per_user:
            raise ValueError("max_per_user exceeds the item count")
        if self.interactions < self.items:
            raise ValueError("cannot cover every item with fewer interactions than items")


def _user_counts(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    counts = np.clip(
        np.round(rng.lognormal(mean=3.0, sigma=0.75, size=spec.users)).astype(np.int64),
        spec.min_per_user,
        spec.max_per_user,
    )
    diff = spec.interactions - int(counts.sum())
    step = 1 if diff > 0 else -1
    while diff != 0:
        k = int(rng.integers(0, spec.users))
        new = counts[k] + step
        if spec.min_per_user <= new <= spec.max_per_user:
            counts[k] = new
            diff -= step
    return counts


def _draw_interactions(spec: SynthSpec, counts: np.ndarray, rng: np.random.Generator) -> list[np.ndarray]:
    k = spec.latent_dim
    user_latent = rng.standard_normal((spec.users, k)) / np.sqrt(k)
    item_latent = rng.standard_normal((spec.items, k)) / np.sqrt(k)
    ranks = np.arange(spec.items, dtype=np.float64)
    popularity = (ranks + 10.0) ** -0.7
    popularity = np.log(popularity / popularity.max() + 1e-12)
    chosen: list[np.ndarray] = []
    for u in range(spec.users):
        scores = (
            spec.affinity_weight * (user_latent[u] @ item_latent.T)
            + spec.popularity_weight * popularity
        )
        gumbel = -np.log(-np.log(rng.uniform(size=spec.items)))
        keyed = scores + spec.noise_temperature * gumbel
        top = np.argpartition(keyed, -counts[u])[-counts[u]:]
        chosen.append(np.sort(top.astype(np.int64)))
    return chosen


def _force_item_coverage(
    spec: SynthSpec, chosen: list[np.ndarray], rng: np.random.Generator
) -> list[np.ndarray]:
    item_count = np.zeros(spec.items, dtype=np.int64)
    for items in chosen:
        item_count[items] += 1
    missing = list(np.flatnonzero(item_count == 0))
    user_order = rng.permutation(spec.users)
    cursor = 0
    for item in missing:
        placed = False
        for _ in range(spec.users):
            u = int(user_order[cursor % spec.users])
            cursor += 1
            mine = chosen[u]
            if item in mine:
                continue
            removable = mine[item_count[mine] >= 2]
            if removable.size == 0:
                continue
            victim = int(removable[int(rng.integers(0, removable.size))])
            mine = mine[mine != victim]
            chosen[u] = np.sort(np.append(mine, item))
            item_count[victim] -= 1
            item_count[item] += 1
            placed = True
            break
        if not placed:
            raise RuntimeError(f"could not place item {item}; loosen the generator settings")
    return chosen


def generate_log(path: str | Path, spec: SynthSpec = SynthSpec()) -> dict[str, int]:
    """Write a tab-separated user/item/rating/timestamp log; returns planted totals."""
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed & 0xFFFFFFFF, 0x5D7E]))
    counts = _user_counts(spec, rng)
    chosen = _force_item_coverage(spec, _draw_interactions(spec, counts, rng), rng)

    user_ext = rng.permutation(spec.users * 3)[: spec.users] + 1000
    item_ext = rng.permutation(spec.items * 3)[: spec.items] + 5000

    rows: list[tuple[int, int, float, int]] = []
    for u in range(spec.users):
        stamps = rng.permutation(chosen[u].size) + 1
        for item, ts in zip(chosen[u], stamps):
            rating = float(rng.integers(1, 9)) / 2.0
            rows.append((int(user_ext[u]), int(item_ext[item]), rating, int(ts)))

    # Chaff users below the interaction floor; their items already exist.
    popular = np.concatenate(chosen)[:: max(1, len(rows) // 200)]
    for j in range(spec.chaff_users):
        ext = 100 + j
        how_many = 1 + int(rng.integers(0, spec.min_per_user - 1))
        picks = rng.choice(popular, size=how_many, replace=False)
        for t, item in enumerate(picks):
            rows.append((int(ext), int(item_ext[item]), 2.0, t + 1))

    # Duplicate rows at later timestamps; deduplication keeps the original.
    dup_idx = rng.choice(len(rows), size=min(spec.duplicate_rows, len(rows)), replace=False)
    duplicates = [(u, i, r, ts + 1000) for (u, i, r, ts) in (rows[j] for j in dup_idx)]
    rows.extend(duplicates)

    order = rng.permutation(len(rows))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for j in order:
            u, i, r, ts = rows[j]
            f.write(f"{u}\t{i}\t{r}\t{ts}\n")
    return {
        "users": spec.users,
        "items": spec.items,
        "interactions": spec.interactions,
        "raw_rows": len(rows),
    }


def filmtrust_scale_spec(seed: int = 7) -> SynthSpec:
    return SynthSpec(seed=seed, **FILMTRUST_SCALE)


def tiny_spec(seed: int = 7) -> SynthSpec:
    return SynthSpec(
        users=60,
        items=180,
        interactions=1400,
        max_per_user=60,
        chaff_users=6,
        duplicate_rows=20,
        seed=seed,
    )
