import math

import numpy as np
import pytest

from surfdec import autodiff as ad
from surfdec.autodiff import precision
from surfdec.checkpoint import load_checkpoint, save_checkpoint
from surfdec.encoding import encode_features, encode_labels
from surfdec.lattice import build_layout
from surfdec.model import (
    MAIN_CONFIG,
    SMALL_CONFIG,
    MLPConfig,
    ModelConfig,
    axis_split,
    forward,
    init_mlp_params,
    init_transformer_params,
    mixed_loss,
    mlp_forward,
    pos_encoding_3d,
    predict,
)
from surfdec.noise import NoiseParams, sample_history

TINY = ModelConfig(layers=2, d_model=12, heads=2, ffn_dim=16)


def _features(d, rounds, seed=0, p=0.08):
    layout = build_layout(d)
    s = sample_history(layout, NoiseParams(p, rounds), seed=seed, index=0)
    return encode_features(s, layout), s


def test_config_invariants():
    with pytest.raises(ValueError):
        ModelConfig(d_model=10, heads=3)
    with pytest.raises(ValueError):
        ModelConfig(confidence_threshold=1.0)
    meta = SMALL_CONFIG.metadata()
    assert ModelConfig.from_metadata(meta) == SMALL_CONFIG


def test_axis_split():
    assert axis_split(256) == (88, 84, 84)
    assert axis_split(64) == (24, 20, 20)
    for d in (12, 64, 256):
        t, h, w = axis_split(d)
        assert t + h + w == d and h % 2 == 0 and w % 2 == 0 and t % 2 == 0


@pytest.mark.parametrize("d", [3, 5, 7, 9, 11, 13])
def test_pos_encoding_distinct(d):
    enc = pos_encoding_3d(d, d, d, 64)
    assert len(np.unique(np.round(enc, 9), axis=0)) == enc.shape[0]


def test_pos_encoding_deterministic():
    a = pos_encoding_3d(4, 4, 4, 64)
    b = pos_encoding_3d(4, 4, 4, 64)
    assert np.array_equal(a, b)
    assert np.abs(a).max() <= 1.0 + 1e-12


def test_param_counts():
    main = init_transformer_params(MAIN_CONFIG).num_params()
    assert abs(main - 7.9e6) / 7.9e6 < 0.10, main
    small = init_transformer_params(SMALL_CONFIG).num_params()
    assert abs(small - 0.5e6) / 0.5e6 < 0.15, small


def test_mlp_param_count_formula():
    cfg = MLPConfig(distance=3, rounds=3)
    n_in = 4 * 4 * 4 * 6
    expected = (n_in * 512 + 512) + (512 * 512 + 512) + (512 * 54 + 54) + (512 * 2 + 2)
    assert init_mlp_params(cfg).num_params() == expected


def test_forward_shapes_d3():
    f, _ = _features(3, 3)
    store = init_transformer_params(TINY, seed=1)
    local, glob = forward(TINY, store, f)
    assert local.shape == (3, 3, 3, 2)
    assert glob.shape == (2,)


def test_forward_batched_matches_single():
    store = init_transformer_params(TINY, seed=1)
    feats = np.stack([_features(3, 3, seed=s)[0] for s in range(3)])
    bl, bg = forward(TINY, store, feats)
    for i in range(3):
        sl, sg = forward(TINY, store, feats[i])
        assert np.allclose(bl.data[i], sl.data, atol=1e-5)
        assert np.allclose(bg.data[i], sg.data, atol=1e-5)


def test_forward_rejects_bad_channels():
    with pytest.raises(ValueError):
        forward(TINY, init_transformer_params(TINY), np.zeros((4, 4, 4, 5)))


def test_sequence_length_freedom():
    """One parameter set runs at every distance — the transfer-learning hook."""
    store = init_transformer_params(TINY, seed=2)
    for d in (3, 5, 7):
        f, _ = _features(d, d, seed=d)
        local, glob = forward(TINY, store, f)
        assert local.shape == (d, d, d, 2) and glob.shape == (2,)


def test_zero_heads_start_at_no_error():
    f, _ = _features(3, 3)
    local, glob = forward(TINY, init_transformer_params(TINY, seed=3), f)
    assert np.array_equal(local.data, np.zeros_like(local.data))
    assert np.array_equal(glob.data, np.zeros_like(glob.data))
    assert not predict(local).any()


def test_predict_examples():
    logits = np.array([0.0, 3.0, -0.01, 2.9])
    assert predict(logits, 0.95).tolist() == [0, 1, 0, 0]  # sigma(3)=0.9526
    assert predict(logits, 0.5).tolist() == [0, 1, 0, 1]
    with pytest.raises(ValueError):
        predict(logits, 1.0)


def test_predict_monotone_in_threshold():
    rng = np.random.default_rng(0)
    logits = rng.normal(0, 4, 500)
    prev = predict(logits, 0.05)
    for thr in (0.3, 0.6, 0.9, 0.99):
        cur = predict(logits, thr)
        assert not (cur & ~prev).any()
        prev = cur


def test_mixed_loss_examples():
    local = ad.Tensor(np.zeros((2, 3, 3, 2)))
    glob = ad.Tensor(np.zeros(2))
    labels = np.zeros((2, 3, 3, 2))
    parities = np.zeros(2)
    full = mixed_loss(local, labels, glob, parities, 1.0, 1.0).item()
    assert abs(full - 2 * math.log(2)) < 1e-6
    only_local = mixed_loss(local, labels, glob, parities, 1.0, 0.0).item()
    assert abs(only_local - math.log(2)) < 1e-6
    sat = mixed_loss(ad.Tensor(np.full((2, 3, 3, 2), -40.0)), labels,
                     ad.Tensor(np.full(2, -40.0)), parities, 1.0, 1.0).item()
    assert sat < 1e-6
    with pytest.raises(ValueError):
        mixed_loss(local, labels, glob, parities, 1.0, -0.5)


def _full_model_grad_check(config, n_entries=3, rtol=1e-4, seed=5):
    f, s = _features(3, 3, seed=seed)
    labels = encode_labels(s).astype(np.float64)
    parities = np.array([s.z_obs_flip, s.x_obs_flip], dtype=np.float64)
    rng = np.random.default_rng(seed)

    with precision("float64"):
        store = init_transformer_params(config, seed=seed)
        # nudge the zero heads so their gradients are exercised too
        for name in ("local_head.w", "global_head.w"):
            store[name].data += rng.normal(0, 0.02, store[name].data.shape)

        def loss_value():
            local, glob = forward(config, store, f)
            return mixed_loss(local, labels, glob, parities, 2.0, 1.0)

        out = loss_value()
        out.backward()
        grads = {k: t.grad.copy() for k, t in store.items()}

        worst = 0.0
        eps = 1e-5
        for name, t in store.items():
            flat = t.data.reshape(-1)
            for idx in rng.choice(flat.size, size=min(n_entries, flat.size),
                                  replace=False):
                orig = flat[idx]
                flat[idx] = orig + eps
                up = loss_value().item()
                flat[idx] = orig - eps
                down = loss_value().item()
                flat[idx] = orig
                num = (up - down) / (2 * eps)
                tape = grads[name].reshape(-1)[idx]
                rel = abs(tape - num) / max(abs(num), 1e-6)
                worst = max(worst, rel)
    assert worst < rtol, worst


def test_full_model_gradient_check_tiny():
    _full_model_grad_check(TINY, n_entries=4)


def test_full_model_gradient_check_small():
    _full_model_grad_check(SMALL_CONFIG, n_entries=1)


def test_mlp_grad_check():
    f, s = _features(3, 3, seed=7)
    labels = encode_labels(s).astype(np.float64)
    parities = np.array([s.z_obs_flip, s.x_obs_flip], dtype=np.float64)
    cfg = MLPConfig(distance=3, rounds=3, hidden1=16, hidden2=16)
    rng = np.random.default_rng(7)
    with precision("float64"):
        store = init_mlp_params(cfg, seed=7)
        for name in ("local_head.w", "global_head.w"):
            store[name].data += rng.normal(0, 0.02, store[name].data.shape)

        def loss_value():
            local, glob = mlp_forward(cfg, store, f)
            return mixed_loss(local, labels, glob, parities, 2.0, 1.0)

        out = loss_value()
        out.backward()
        grads = {k: t.grad.copy() for k, t in store.items()}
        eps = 1e-5
        for name, t in store.items():
            flat = t.data.reshape(-1)
            for idx in rng.choice(flat.size, size=min(3, flat.size), replace=False):
                orig = flat[idx]
                flat[idx] = orig + eps
                up = loss_value().item()
                flat[idx] = orig - eps
                down = loss_value().item()
                flat[idx] = orig
                num = (up - down) / (2 * eps)
                tape = grads[name].reshape(-1)[idx]
                assert abs(tape - num) / max(abs(num), 1e-6) < 1e-4


def test_mlp_rejects_wrong_distance():
    cfg = MLPConfig(distance=5, rounds=5, hidden1=8, hidden2=8)
    store = init_mlp_params(cfg)
    f, _ = _features(3, 3)
    with pytest.raises(ValueError):
        mlp_forward(cfg, store, f)


def test_mlp_zero_weights_zero_logits():
    cfg = MLPConfig(distance=3, rounds=3, hidden1=8, hidden2=8)
    store = init_mlp_params(cfg)
    for _, t in store.items():
        t.data[:] = 0
    f, _ = _features(3, 3)
    local, glob = mlp_forward(cfg, store, f)
    assert not local.data.any() and not glob.data.any()


def test_checkpoint_roundtrip_preserves_forward(tmp_path):
    store = init_transformer_params(TINY, seed=9)
    f, _ = _features(3, 3, seed=9)
    ref_local, ref_glob = forward(TINY, store, f)
    path = tmp_path / "m.tqck"
    save_checkpoint(path, store.state_arrays(), TINY.metadata())
    arrays, meta = load_checkpoint(path)
    cfg = ModelConfig.from_metadata(meta)
    assert cfg == TINY
    store2 = init_transformer_params(cfg, seed=0)
    store2.load_arrays(arrays)
    local, glob = forward(cfg, store2, f)
    assert np.array_equal(local.data, ref_local.data)
    assert np.array_equal(glob.data, ref_glob.data)
