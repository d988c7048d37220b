from __future__ import annotations

import numpy as np
import pytest

from fedrecsam.data import LogFormat, filter_and_split, parse_log
from fedrecsam.synth import filmtrust_scale_spec, generate_log, tiny_spec


@pytest.fixture(scope="session")
def bench_log_path(tmp_path_factory):
    """Benchmark-scale synthetic log (FilmTrust-sized post-filter counts)."""
    path = tmp_path_factory.mktemp("data") / "bench.tsv"
    generate_log(path, filmtrust_scale_spec(seed=7))
    return path


@pytest.fixture(scope="session")
def bench_log(bench_log_path):
    return parse_log(bench_log_path, LogFormat())


@pytest.fixture(scope="session")
def bench_split(bench_log):
    return filter_and_split(bench_log, 5, rng_seed=123)


@pytest.fixture(scope="session")
def tiny_log_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "tiny.tsv"
    generate_log(path, tiny_spec(seed=11))
    return path


@pytest.fixture(scope="session")
def tiny_log(tiny_log_path):
    return parse_log(tiny_log_path, LogFormat())


@pytest.fixture(scope="session")
def tiny_split(tiny_log):
    return filter_and_split(tiny_log, 5, rng_seed=31)


def make_toy_split(num_users=3, num_items=5, seed=0, min_train=2, max_train=3):
    """Hand-rolled SplitDataset for toy oracle tests (no file round trip)."""
    from fedrecsam.data import DatasetStats, SplitDataset

    rng = np.random.default_rng(seed)
    train = []
    test = np.empty(num_users, dtype=np.int64)
    pools = []
    cand = np.empty((num_users, 100), dtype=np.int64)
    for k in range(num_users):
        size = int(rng.integers(min_train, max_train + 1))
        perm = rng.permutation(num_items)
        train.append(np.sort(perm[:size].astype(np.int64)))
        test[k] = perm[size]
        observed = np.zeros(num_items, dtype=bool)
        observed[train[-1]] = True
        observed[test[k]] = True
        pool = np.flatnonzero(~observed).astype(np.int64)
        pools.append(pool)
        cand[k] = np.concatenate([[test[k]], rng.choice(pool, size=99, replace=True)])
    interactions = int(sum(t.size for t in train) + num_users)
    stats = DatasetStats(num_users, num_items, interactions)
    return SplitDataset(
        user_ids=[str(k) for k in range(num_users)],
        item_ids=[str(i) for i in range(num_items)],
        train=train,
        test=test,
        eval_candidates=cand,
        unobserved_pool=pools,
        pre_filter=stats,
        post_filter=stats,
        seed=seed,
    )
