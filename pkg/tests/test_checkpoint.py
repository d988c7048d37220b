import numpy as np
import pytest

from fedrecsam.checkpoint import load_checkpoint, save_checkpoint
from fedrecsam.federation import TrainConfig, init_model_state, run_training
from fedrecsam.optim import AdamState, SgdState

from conftest import make_toy_split


@pytest.mark.parametrize("optimizer,variant,hidden", [
    ("adam", "dot", 0),
    ("sgd", "dot", 0),
    ("adam", "mlp1", 4),
])
def test_roundtrip_bit_exact(tmp_path, optimizer, variant, hidden):
    ds = make_toy_split(num_users=3, num_items=7, seed=2)
    cfg = TrainConfig(rounds=2, embedding_dim=3, optimizer=optimizer,
                      score_variant=variant, hidden_units=hidden, seed=5, lr=0.03)
    result = run_training(ds, cfg)
    path = tmp_path / "ckpt.npz"
    meta = {"method": cfg.method, "seed": 5, "rounds": 2}
    save_checkpoint(path, result.global_params, result.clients, result.server_opt, meta)

    params, clients, server_opt, loaded_meta = load_checkpoint(path)
    assert np.array_equal(params.item_embeddings, result.global_params.item_embeddings)
    assert np.array_equal(params.score.flat(), result.global_params.score.flat())
    assert params.score.variant == variant
    assert len(clients) == 3
    for a, b in zip(clients, result.clients):
        assert a.user_id == b.user_id
        assert np.array_equal(a.user_embedding, b.user_embedding)
        assert a.opt.step == b.opt.step
        if isinstance(b.opt, AdamState):
            assert np.array_equal(a.opt.m, b.opt.m)
            assert np.array_equal(a.opt.v, b.opt.v)
        else:
            assert isinstance(a.opt, SgdState)
    assert server_opt.step == result.server_opt.step
    if isinstance(result.server_opt, AdamState):
        assert np.array_equal(server_opt.m, result.server_opt.m)
        assert np.array_equal(server_opt.v, result.server_opt.v)
    assert loaded_meta == meta


def test_checkpoint_resume_matches_state(tmp_path):
    # Loaded state must be usable in place of the original, bit for bit.
    ds = make_toy_split(num_users=2, num_items=6, seed=3)
    cfg = TrainConfig(rounds=1, embedding_dim=2, seed=1)
    result = run_training(ds, cfg)
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, result.global_params, result.clients, result.server_opt, None)
    params, clients, _, meta = load_checkpoint(path)
    assert meta == {}
    from fedrecsam.metrics import evaluate

    a = evaluate(result.global_params, result.clients, ds)
    b = evaluate(params, clients, ds)
    assert np.array_equal(a.ranks, b.ranks)


def test_unsupported_version_rejected(tmp_path):
    ds = make_toy_split(num_users=2, num_items=6, seed=4)
    cfg = TrainConfig(rounds=0, embedding_dim=2, seed=1)
    params, clients, server_opt = init_model_state(ds, cfg)
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, params, clients, server_opt, None)
    data = dict(np.load(path, allow_pickle=False))
    data["version"] = np.array([99], dtype=np.int64)
    np.savez(path, **data)
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)
