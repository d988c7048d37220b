"""Federated round loop: client sampling, local SAM updates, mean aggregation.

Every run is fully determined by (seed, config, dataset): per-component RNG
streams are derived by labeled hashing, so thread scheduling cannot perturb
sampling, and the in-round reduction order is fixed.
"""

from __future__ import annotations

import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .data import SplitDataset, sample_train_negatives
from .model import (
    ClientState,
    GlobalParams,
    SCORE_DOT,
    SCORE_VARIANTS,
    init_clients,
    init_global,
    make_batch_ctx,
)
from .optim import ADAM, OPTIMIZER_VARIANTS, OptimizerState, apply_update, make_optimizer
from .sam import (
    NormRegConfig,
    SamConfig,
    _norm_reg_shared,
    _private_step,
    _shared_step,
    norm_reg_gradient,
    resolve_norm_reg,
)
from .vectors import SharedVec

log = logging.getLogger(__name__)

METHOD_FEDRECGEL = "fedrecgel"
METHOD_BASELINE = "baseline_plain"
METHOD_NO_NONSHARED = "ablate_no_nonshared"
METHOD_NO_SHARED = "ablate_no_shared"
METHODS = (METHOD_FEDRECGEL, METHOD_BASELINE, METHOD_NO_NONSHARED, METHOD_NO_SHARED)


@lru_cache(maxsize=64)
def _label_entropy(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode()).digest()[:4], "little")


def component_rng(seed: int, label: str, *indices: int) -> np.random.Generator:
    """Deterministic RNG stream for one labeled component of a run."""
    entropy = [seed & 0xFFFFFFFF, _label_entropy(label), *[int(i) & 0xFFFFFFFF for i in indices]]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def component_seed(seed: int, label: str) -> int:
    return int(component_rng(seed, label).integers(0, 2**31 - 1))


@dataclass
class TrainConfig:
    rounds: int = 100
    clients_per_round: int | None = None
    local_epochs: int = 1
    batch_size: int = 256
    lr: float = 0.01
    embedding_dim: int = 32
    negatives_per_positive: int = 4
    method: str = METHOD_FEDRECGEL
    sam: SamConfig = field(default_factory=SamConfig)
    normreg: NormRegConfig = field(default_factory=NormRegConfig)
    seed: int = 0
    score_variant: str = SCORE_DOT
    hidden_units: int = 16
    optimizer: str = ADAM
    workers: int = 1

    def validate(self, num_users: int | None = None) -> None:
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be at least 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.score_variant not in SCORE_VARIANTS:
            raise ValueError(f"unknown score variant {self.score_variant!r}")
        if self.optimizer not in OPTIMIZER_VARIANTS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.clients_per_round is not None:
            if self.clients_per_round < 1:
                raise ValueError("clients_per_round must be at least 1")
            if num_users is not None and self.clients_per_round > num_users:
                raise ValueError("clients_per_round exceeds the number of users")


def resolve_method(cfg: TrainConfig) -> TrainConfig:
    """Apply the method's documented switches; everything else is untouched."""
    sam = cfg.sam
    normreg = cfg.normreg
    if cfg.method == METHOD_BASELINE:
        sam = replace(sam, rho_co=0.0, rho_ur=0.0)
        normreg = replace(normreg, enabled=False)
    elif cfg.method == METHOD_NO_NONSHARED:
        sam = replace(sam, rho_ur=0.0)
    elif cfg.method == METHOD_NO_SHARED:
        sam = replace(sam, rho_co=0.0)
    return replace(cfg, sam=sam, normreg=normreg)


@dataclass
class ClientStats:
    mean_loss: float
    num_samples: int
    num_batches: int


@dataclass
class RoundResult:
    round_index: int
    grad_norm: float
    mean_loss: float
    duration_sec: float
    participants: tuple[int, ...]


@dataclass
class TrainResult:
    global_params: GlobalParams
    clients: list[ClientState]
    rounds: list[RoundResult]
    config: TrainConfig
    server_opt: OptimizerState


def build_client_batches(
    ds: SplitDataset, user: int, cfg: TrainConfig, rng: np.random.Generator
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Labeled, shuffled batches for one client and one local epoch."""
    items, labels = sample_train_negatives(ds, user, cfg.negatives_per_positive, rng)
    order = rng.permutation(items.size)
    items, labels = items[order], labels[order]
    return [
        (items[lo:lo + cfg.batch_size], labels[lo:lo + cfg.batch_size])
        for lo in range(0, items.size, cfg.batch_size)
    ]


def client_update(
    user: int,
    snapshot: GlobalParams,
    state: ClientState,
    ds: SplitDataset,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[SharedVec, ClientState, ClientStats]:
    """One local pass: per batch, SAM-update the private embedding, then compute the
    shared SAM gradient at the updated embedding.  Returns the mean of per-batch
    shared gradients (plus the norm-regularizer term) on their union support,
    the updated client state, and loss statistics.  The snapshot is never written.
    """
    if ds.train[user].size == 0:
        log.warning("client %d has no training positives; skipped", user)
        zero = SharedVec.zeros(snapshot.num_items, snapshot.dim, snapshot.score.num_params)
        return zero, state.copy(), ClientStats(0.0, 0, 0)

    st = state.copy()
    accum: SharedVec | None = None
    loss_total = 0.0
    num_batches = 0
    num_samples = 0
    for _ in range(cfg.local_epochs):
        for items, labels in build_client_batches(ds, user, cfg, rng):
            ctx = make_batch_ctx(items, labels)
            if cfg.normreg.enabled:
                gn_ur = norm_reg_gradient(st.user_embedding, cfg.normreg, st.user_embedding.size)
                gn_co = _norm_reg_shared(snapshot, ctx[2], cfg.normreg)
            loss0, g_ur = _private_step(snapshot, st, ctx, cfg.sam)
            if cfg.normreg.enabled:
                g_ur = g_ur + gn_ur
            apply_update(st.opt, st.user_embedding, g_ur, cfg.lr)
            g_co = _shared_step(snapshot, st, ctx, cfg.sam)
            if cfg.normreg.enabled:
                g_co = g_co.add(gn_co)
            accum = g_co if accum is None else accum.add(g_co)
            loss_total += loss0
            num_batches += 1
            num_samples += items.size
    shared = accum.scaled(1.0 / num_batches)
    return shared, st, ClientStats(loss_total / num_batches, num_samples, num_batches)


def _content_key(sv: SharedVec) -> tuple[bytes, bytes, bytes]:
    return (sv.item_ids.tobytes(), sv.item_rows.tobytes(), sv.score.tobytes())


def aggregate(shared_grads: list[SharedVec]) -> np.ndarray:
    """Coordinate-wise mean with divisor len(shared_grads), as a dense flat vector.

    Inputs are reduced in a canonical content order, so the result does not depend
    on the order the caller collected them in.
    """
    if not shared_grads:
        raise ValueError("nothing to aggregate")
    ordered = sorted(shared_grads, key=_content_key)
    first = ordered[0]
    acc = np.zeros(first.flat_dim, dtype=np.float64)
    emb = acc[: first.n_items * first.dim].reshape(first.n_items, first.dim)
    score = acc[first.n_items * first.dim:]
    for sv in ordered:
        if sv.flat_dim != first.flat_dim:
            raise ValueError("shared-gradient dimensions disagree")
        emb[sv.item_ids] += sv.item_rows
        score += sv.score
    acc /= len(shared_grads)
    return acc


def init_model_state(
    ds: SplitDataset, cfg: TrainConfig
) -> tuple[GlobalParams, list[ClientState], OptimizerState]:
    rng = component_rng(cfg.seed, "init")
    params = init_global(ds.num_items, cfg.embedding_dim, rng, cfg.score_variant, cfg.hidden_units)
    clients = init_clients(ds.num_users, cfg.embedding_dim, rng, cfg.optimizer)
    server_opt = make_optimizer(cfg.optimizer, params.t_co)
    return params, clients, server_opt


def run_training(ds: SplitDataset, cfg: TrainConfig, round_hook=None) -> TrainResult:
    """Run the full federated procedure.

    Rounds are sequential; within a round the sampled clients run against one
    frozen snapshot (in threads when cfg.workers > 1) and the server applies the
    aggregated gradient through its optimizer.  `round_hook(round_index, params,
    clients, server_opt)` is called read-only after each server update.
    """
    cfg.validate(ds.num_users)
    cfg = resolve_method(cfg)
    m = ds.num_users
    n_sample = cfg.clients_per_round or m

    params, clients, server_opt = init_model_state(ds, cfg)
    total_train = int(sum(t.size for t in ds.train))
    default_big_n = total_train * (1 + cfg.negatives_per_positive)
    normreg = resolve_norm_reg(cfg.normreg, cfg.sam, params.t_co, cfg.embedding_dim, default_big_n)
    cfg = replace(cfg, normreg=normreg)

    def rebuild(flat_vec: np.ndarray) -> GlobalParams:
        return GlobalParams.from_flat_co(
            flat_vec, ds.num_items, cfg.embedding_dim, cfg.score_variant, cfg.hidden_units
        )

    flat = params.flat_co()
    results: list[RoundResult] = []
    for t in range(1, cfg.rounds + 1):
        started = time.perf_counter()
        sample_rng = component_rng(cfg.seed, "sampling", t)
        participants = np.sort(sample_rng.choice(m, size=n_sample, replace=False))
        snapshot = rebuild(flat).frozen_copy()

        def run_one(k: int) -> tuple[int, SharedVec, ClientState, ClientStats]:
            rng = component_rng(cfg.seed, "client", t, k)
            grad, new_state, stats = client_update(int(k), snapshot, clients[k], ds, cfg, rng)
            return int(k), grad, new_state, stats

        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                outputs = list(pool.map(run_one, participants))
        else:
            outputs = [run_one(k) for k in participants]
        outputs.sort(key=lambda out: out[0])

        grads = []
        losses = []
        for k, grad, new_state, stats in outputs:
            clients[k] = new_state
            grads.append(grad)
            losses.append(stats.mean_loss)
        agg = aggregate(grads)
        apply_update(server_opt, flat, agg, cfg.lr)

        results.append(
            RoundResult(
                round_index=t,
                grad_norm=float(np.linalg.norm(agg)),
                mean_loss=float(np.mean(losses)),
                duration_sec=time.perf_counter() - started,
                participants=tuple(int(k) for k in participants),
            )
        )
        if round_hook is not None:
            round_hook(t, rebuild(flat), clients, server_opt)

    return TrainResult(rebuild(flat), clients, results, cfg, server_opt)
