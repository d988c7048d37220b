"""Ranking evaluation over frozen 100-candidate lists: HR@K and NDCG@K."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SplitDataset
from .model import ClientState, GlobalParams, score_many

METRICS_HEADER = ("round", "method", "seed", "hr@5", "ndcg@5", "hr@10", "ndcg@10")


@dataclass
class EvalReport:
    ks: tuple[int, ...]
    hr: dict[int, float]
    ndcg: dict[int, float]
    ranks: np.ndarray

    def as_row(self, round_index: int, method: str, seed: int) -> dict[str, object]:
        row: dict[str, object] = {"round": round_index, "method": method, "seed": seed}
        for k in self.ks:
            row[f"hr@{k}"] = self.hr[k]
            row[f"ndcg@{k}"] = self.ndcg[k]
        return row


def rank_candidates(g: GlobalParams, c: ClientState, candidates: np.ndarray) -> int:
    """1-based rank of the first candidate (the held-out item) among all candidates.

    Candidates are ranked by descending score; ties go to the smaller item id.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    scores = score_many(g, c, candidates)
    target_score = scores[0]
    target_item = candidates[0]
    better = int(np.sum(scores[1:] > target_score))
    tied_ahead = int(np.sum((scores[1:] == target_score) & (candidates[1:] < target_item)))
    return 1 + better + tied_ahead


def compute_metrics(ranks: np.ndarray, k: int) -> tuple[float, float]:
    """(HR@k, NDCG@k) means over per-user 1-based ranks of the single test item."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("no ranks to aggregate")
    hits = ranks <= k
    hr = float(np.mean(hits))
    gains = np.where(hits, 1.0 / np.log2(ranks + 1.0), 0.0)
    ndcg = float(np.mean(gains))
    return hr, ndcg


def evaluate(
    g: GlobalParams,
    clients: list[ClientState],
    ds: SplitDataset,
    ks: tuple[int, ...] = (5, 10),
) -> EvalReport:
    """Rank each user's frozen candidate list and average the metrics in user order."""
    ranks = np.empty(ds.num_users, dtype=np.int64)
    for k in range(ds.num_users):
        ranks[k] = rank_candidates(g, clients[k], ds.eval_candidates[k])
    hr: dict[int, float] = {}
    ndcg: dict[int, float] = {}
    for k in ks:
        hr[k], ndcg[k] = compute_metrics(ranks, k)
    return EvalReport(tuple(ks), hr, ndcg, ranks)
