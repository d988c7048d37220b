"""Post-convergence loss-landscape probes over the shared parameters.

Two probes: a 2-D loss grid along a random orthonormal direction pair, and
average loss under random unit perturbations swept over magnitudes.  Both are
pure reads: model state is never mutated, and losses are averaged over a fixed
sample of clients evaluating fixed labeled batches.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import SplitDataset, sample_train_negatives
from .model import ClientState, GlobalParams, batch_loss

LOSS_SATURATION = 1e30


@dataclass
class LandscapeGrid:
    alphas: np.ndarray
    losses: np.ndarray
    extent: float
    resolution: int
    direction_a: np.ndarray
    direction_b: np.ndarray
    num_clients: int


@dataclass
class MagnitudeSweep:
    magnitudes: tuple[float, ...]
    avg_losses: tuple[float, ...]
    num_directions: int
    num_clients: int
    unperturbed_loss: float


DEFAULT_MAGNITUDES = (10.0, 1.0, 1e-1, 1e-2, 1e-3, 1e-4)


def sample_directions(dim: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two orthonormal standard-Gaussian directions (Gram-Schmidt, redraw if parallel)."""
    if dim < 2:
        raise ValueError("need at least two dimensions")
    a = rng.standard_normal(dim)
    a /= np.linalg.norm(a)
    while True:
        b = rng.standard_normal(dim)
        b -= (b @ a) * a
        norm = np.linalg.norm(b)
        if norm > 1e-12:
            return a, b / norm


def _client_sample(num_users: int, max_clients: int | None, rng: np.random.Generator) -> np.ndarray:
    if max_clients is None or max_clients >= num_users:
        return np.arange(num_users)
    return np.sort(rng.choice(num_users, size=max_clients, replace=False))


def _frozen_batches(
    ds: SplitDataset,
    clients: list[ClientState],
    users: np.ndarray,
    negatives_per_positive: int,
    rng: np.random.Generator,
) -> list[tuple[ClientState, np.ndarray, np.ndarray]]:
    out = []
    for k in users:
        items, labels = sample_train_negatives(ds, int(k), negatives_per_positive, rng)
        out.append((clients[k], items, labels))
    return out


def _mean_loss(g: GlobalParams, batches) -> float:
    total = 0.0
    for state, items, labels in batches:
        total += batch_loss(g, state, items, labels)
    loss = total / len(batches)
    if not np.isfinite(loss) or loss > LOSS_SATURATION:
        return LOSS_SATURATION
    return loss


def _shifted(g: GlobalParams, shift: np.ndarray) -> GlobalParams:
    return GlobalParams.from_flat_co(
        g.flat_co() + shift, g.num_items, g.dim, g.score.variant, g.score.hidden
    )


def evaluate_grid(
    g: GlobalParams,
    clients: list[ClientState],
    ds: SplitDataset,
    extent: float = 0.5,
    resolution: int = 9,
    rng: np.random.Generator | None = None,
    negatives_per_positive: int = 4,
    max_clients: int | None = 200,
) -> LandscapeGrid:
    """Mean training loss on an R x R grid of shared-parameter offsets.

    The grid spans [-extent, extent]^2 along an orthonormal direction pair; the
    private embeddings are held fixed.  An odd resolution puts the unperturbed
    point at the center cell.
    """
    if rng is None:
        rng = np.random.default_rng()
    d1, d2 = sample_directions(g.t_co, rng)
    users = _client_sample(ds.num_users, max_clients, rng)
    batches = _frozen_batches(ds, clients, users, negatives_per_positive, rng)
    alphas = np.linspace(-extent, extent, resolution)
    losses = np.empty((resolution, resolution))
    for i, a1 in enumerate(alphas):
        for j, a2 in enumerate(alphas):
            losses[i, j] = _mean_loss(_shifted(g, a1 * d1 + a2 * d2), batches)
    return LandscapeGrid(alphas, losses, extent, resolution, d1, d2, users.size)


def magnitude_sweep(
    g: GlobalParams,
    clients: list[ClientState],
    ds: SplitDataset,
    magnitudes: tuple[float, ...] = DEFAULT_MAGNITUDES,
    num_directions: int = 4,
    rng: np.random.Generator | None = None,
    negatives_per_positive: int = 4,
    max_clients: int | None = 200,
) -> MagnitudeSweep:
    """Loss averaged over random unit directions scaled by each magnitude.

    Averages run over both the direction draws and the sampled clients.
    """
    if rng is None:
        rng = np.random.default_rng()
    if num_directions < 1:
        raise ValueError("need at least one direction")
    users = _client_sample(ds.num_users, max_clients, rng)
    batches = _frozen_batches(ds, clients, users, negatives_per_positive, rng)
    directions = []
    for _ in range(num_directions):
        v = rng.standard_normal(g.t_co)
        directions.append(v / np.linalg.norm(v))
    base = _mean_loss(g, batches)
    averages = []
    for mu in magnitudes:
        if mu == 0.0:
            averages.append(base)
            continue
        vals = [_mean_loss(_shifted(g, mu * v), batches) for v in directions]
        averages.append(float(np.mean(vals)))
    return MagnitudeSweep(tuple(magnitudes), tuple(averages), num_directions, users.size, base)


def write_grid_csv(grid: LandscapeGrid, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["alpha1", "alpha2", "loss"])
        for i, a1 in enumerate(grid.alphas):
            for j, a2 in enumerate(grid.alphas):
                w.writerow([repr(float(a1)), repr(float(a2)), repr(float(grid.losses[i, j]))])


def write_sweep_csv(sweep: MagnitudeSweep, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["magnitude", "avg_loss", "num_directions"])
        for mu, loss in zip(sweep.magnitudes, sweep.avg_losses):
            w.writerow([repr(float(mu)), repr(float(loss)), sweep.num_directions])
