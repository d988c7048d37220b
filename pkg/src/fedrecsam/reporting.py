"""Delimited result emission and the figures rendered alongside it."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .federation import RoundResult
from .landscape import LandscapeGrid, MagnitudeSweep
from .metrics import METRICS_HEADER

SUMMARY_HEADER = (
    "method", "param", "value",
    "hr@5_mean", "hr@5_std", "ndcg@5_mean", "ndcg@5_std",
    "hr@10_mean", "hr@10_std", "ndcg@10_mean", "ndcg@10_std",
)


def _fmt(value: object) -> object:
    # repr keeps full float precision so reruns are byte-comparable.
    return repr(value) if isinstance(value, float) else value


def write_rows_csv(path: str | Path, header: tuple[str, ...], rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in header])


def read_rows_csv(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def write_metrics_csv(path: str | Path, rows: list[dict]) -> None:
    write_rows_csv(path, METRICS_HEADER, rows)


def write_rounds_csv(path: str | Path, rounds: list[RoundResult]) -> None:
    # duration_sec is wall-clock and intentionally outside the determinism contract.
    header = ("round", "grad_norm", "mean_loss", "num_clients", "duration_sec")
    rows = [
        {
            "round": r.round_index,
            "grad_norm": r.grad_norm,
            "mean_loss": r.mean_loss,
            "num_clients": len(r.participants),
            "duration_sec": r.duration_sec,
        }
        for r in rounds
    ]
    write_rows_csv(path, header, rows)


def write_ranks_csv(path: str | Path, ranks: np.ndarray) -> None:
    rows = [{"user": int(u), "rank": int(r)} for u, r in enumerate(ranks)]
    write_rows_csv(path, ("user", "rank"), rows)


def plot_learning_curve(path: str | Path, rows: list[dict], ks: tuple[int, ...] = (5, 10)) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    rounds = [int(r["round"]) for r in rows]
    for k in ks:
        ax.plot(rounds, [float(r[f"hr@{k}"]) for r in rows], marker="o", label=f"HR@{k}")
        ax.plot(rounds, [float(r[f"ndcg@{k}"]) for r in rows], marker="s", label=f"NDCG@{k}")
    ax.set_xlabel("round")
    ax.set_ylabel("metric")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_summary(path: str | Path, rows: list[dict], metric: str = "hr@10") -> None:
    """Mean +/- std of one metric against the swept value, one line per method."""
    fig, ax = plt.subplots(figsize=(6, 4))
    methods = sorted({str(r["method"]) for r in rows})
    for method in methods:
        sub = [r for r in rows if str(r["method"]) == method]
        xs = [str(r["value"]) for r in sub]
        means = [float(r[f"{metric}_mean"]) for r in sub]
        stds = [float(r[f"{metric}_std"]) for r in sub]
        ax.errorbar(range(len(xs)), means, yerr=stds, marker="o", capsize=3, label=method)
        ax.set_xticks(range(len(xs)), xs, rotation=30)
    param = str(rows[0]["param"]) if rows else ""
    ax.set_xlabel(param or "configuration")
    ax.set_ylabel(metric)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_landscape_heatmap(path: str | Path, grid: LandscapeGrid) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    lo, hi = float(grid.alphas[0]), float(grid.alphas[-1])
    im = ax.imshow(
        grid.losses.T,
        origin="lower",
        extent=(lo, hi, lo, hi),
        aspect="equal",
        cmap="viridis",
    )
    fig.colorbar(im, ax=ax, label="mean loss")
    ax.set_xlabel("offset along direction 1")
    ax.set_ylabel("offset along direction 2")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_magnitude_sweep(path: str | Path, sweeps: dict[str, MagnitudeSweep]) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, sweep in sweeps.items():
        ax.plot(sweep.magnitudes, sweep.avg_losses, marker="o", label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("perturbation magnitude")
    ax.set_ylabel("average loss")
    ax.grid(True, alpha=0.3, which="both")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
