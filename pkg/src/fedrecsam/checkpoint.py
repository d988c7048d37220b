"""Bit-exact checkpointing of global parameters, client states, and optimizer moments."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import ClientState, GlobalParams, ScoreFn
from .optim import ADAM, AdamState, OptimizerState, SGD, SgdState

FORMAT_VERSION = 1


def _opt_arrays(states: list[OptimizerState], dim: int) -> dict[str, np.ndarray]:
    if isinstance(states[0], SgdState):
        return {
            "opt_variant": np.array([SGD]),
            "opt_steps": np.array([s.step for s in states], dtype=np.int64),
        }
    return {
        "opt_variant": np.array([ADAM]),
        "opt_steps": np.array([s.step for s in states], dtype=np.int64),
        "opt_m": np.stack([s.m for s in states]),
        "opt_v": np.stack([s.v for s in states]),
    }


def save_checkpoint(
    path: str | Path,
    params: GlobalParams,
    clients: list[ClientState],
    server_opt: OptimizerState,
    meta: dict | None = None,
) -> None:
    arrays: dict[str, np.ndarray] = {
        "version": np.array([FORMAT_VERSION], dtype=np.int64),
        "item_embeddings": params.item_embeddings,
        "score_flat": params.score.flat(),
        "score_variant": np.array([params.score.variant]),
        "score_hidden": np.array([params.score.hidden], dtype=np.int64),
        "user_embeddings": np.stack([c.user_embedding for c in clients]),
        "user_ids": np.array([c.user_id for c in clients], dtype=np.int64),
        "meta": np.array([json.dumps(meta or {}, sort_keys=True)]),
    }
    for key, value in _opt_arrays([c.opt for c in clients], params.dim).items():
        arrays[f"client_{key}"] = value
    server = _opt_arrays([server_opt], params.t_co)
    arrays["server_opt_variant"] = server["opt_variant"]
    arrays["server_opt_step"] = server["opt_steps"]
    if "opt_m" in server:
        arrays["server_opt_m"] = server["opt_m"][0]
        arrays["server_opt_v"] = server["opt_v"][0]
    np.savez(Path(path), **arrays)


def _load_opts(data, prefix: str, count: int) -> list[OptimizerState]:
    variant = str(data[f"{prefix}opt_variant"][0])
    steps = data[f"{prefix}opt_steps"]
    if variant == SGD:
        return [SgdState(int(steps[i])) for i in range(count)]
    m = data[f"{prefix}opt_m"]
    v = data[f"{prefix}opt_v"]
    return [AdamState(m[i].copy(), v[i].copy(), int(steps[i])) for i in range(count)]


def load_checkpoint(
    path: str | Path,
) -> tuple[GlobalParams, list[ClientState], OptimizerState, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        version = int(data["version"][0])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        emb = data["item_embeddings"].copy()
        variant = str(data["score_variant"][0])
        hidden = int(data["score_hidden"][0])
        score = ScoreFn.from_flat(variant, emb.shape[1], hidden, data["score_flat"])
        params = GlobalParams(emb, score)
        user_emb = data["user_embeddings"]
        user_ids = data["user_ids"]
        opts = _load_opts(data, "client_", user_emb.shape[0])
        clients = [
            ClientState(int(user_ids[i]), user_emb[i].copy(), opts[i])
            for i in range(user_emb.shape[0])
        ]
        server_variant = str(data["server_opt_variant"][0])
        if server_variant == SGD:
            server_opt: OptimizerState = SgdState(int(data["server_opt_step"][0]))
        else:
            server_opt = AdamState(
                data["server_opt_m"].copy(),
                data["server_opt_v"].copy(),
                int(data["server_opt_step"][0]),
            )
        meta = json.loads(str(data["meta"][0]))
    return params, clients, server_opt, meta
