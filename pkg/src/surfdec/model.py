"""Transformer decoder network and MLP baseline.

Encoder consumes the (rounds+1, D+1, D+1, 6) syndrome feature grid as a
flat token sequence; the decoder queries one token per data-qubit cell
(rounds, D, D) built purely from positional encodings.  Heads: two
logits per cell (X / Z error) and two global observable-flip logits from
mean-pooled encoder output.  Shapes depend only on the input grid, so a
trained parameter set runs unchanged at any code distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import ParamStore


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 6
    d_model: int = 256
    heads: int = 8
    ffn_dim: int = 512
    confidence_threshold: float = 0.95
    global_loss_weight: float = 1.0
    pos_weight_policy: str = "inverse-frequency"

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError(
                f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not 0 < self.confidence_threshold < 1:
            raise ValueError(f"threshold must be in (0,1), got {self.confidence_threshold}")
        if self.global_loss_weight < 0:
            raise ValueError("global_loss_weight must be >= 0")

    def metadata(self) -> dict[str, str]:
        return {
            "kind": "transformer",
            "layers": str(self.layers),
            "d_model": str(self.d_model),
            "heads": str(self.heads),
            "ffn_dim": str(self.ffn_dim),
            "confidence_threshold": repr(self.confidence_threshold),
            "global_loss_weight": repr(self.global_loss_weight),
            "pos_weight_policy": self.pos_weight_policy,
        }

    @classmethod
    def from_metadata(cls, meta: dict[str, str]) -> "ModelConfig":
        return cls(
            layers=int(meta["layers"]),
            d_model=int(meta["d_model"]),
            heads=int(meta["heads"]),
            ffn_dim=int(meta["ffn_dim"]),
            confidence_threshold=float(meta["confidence_threshold"]),
            global_loss_weight=float(meta["global_loss_weight"]),
            pos_weight_policy=meta.get("pos_weight_policy", "inverse-frequency"),
        )


MAIN_CONFIG = ModelConfig()
SMALL_CONFIG = ModelConfig(layers=6, d_model=64, heads=2, ffn_dim=128)


def axis_split(d_model: int) -> tuple[int, int, int]:
    """Per-axis encoding widths (time, row, col): even thirds, remainder
    to the time axis."""
    third = (d_model // 3) & ~1
    return d_model - 2 * third, third, third


def _axis_encoding(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    k = np.arange(dim // 2)[None, :]
    ang = pos * (10000.0 ** (-2.0 * k / dim))
    enc = np.zeros((length, dim))
    enc[:, 0::2] = np.sin(ang)
    enc[:, 1::2] = np.cos(ang)
    return enc


def pos_encoding_3d(t: int, h: int, w: int, d_model: int) -> np.ndarray:
    """(t*h*w, d_model) sinusoidal encoding; axes concatenated time|row|col."""
    dt, dh, dw = axis_split(d_model)
    et = _axis_encoding(t, dt)[:, None, None, :]
    eh = _axis_encoding(h, dh)[None, :, None, :]
    ew = _axis_encoding(w, dw)[None, None, :, :]
    out = np.concatenate(
        [
            np.broadcast_to(et, (t, h, w, dt)),
            np.broadcast_to(eh, (t, h, w, dh)),
            np.broadcast_to(ew, (t, h, w, dw)),
        ],
        axis=-1,
    )
    return out.reshape(t * h * w, d_model)


# -- parameters ---------------------------------------------------------


def _xavier(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


def _add_linear(store, rng, name, fan_in, fan_out, zero=False):
    w = np.zeros((fan_in, fan_out)) if zero else _xavier(rng, fan_in, fan_out)
    store.add(f"{name}.w", w)
    store.add(f"{name}.b", np.zeros(fan_out))


def _add_ln(store, name, dim):
    store.add(f"{name}.g", np.ones(dim))
    store.add(f"{name}.b", np.zeros(dim))


def _add_attention(store, rng, name, d):
    for part in ("q", "k", "v", "o"):
        _add_linear(store, rng, f"{name}.{part}", d, d)


def init_transformer_params(config: ModelConfig, seed: int = 0) -> ParamStore:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    d, f = config.d_model, config.ffn_dim
    _add_linear(store, rng, "embed", 6, d)
    for i in range(config.layers):
        _add_ln(store, f"enc{i}.ln1", d)
        _add_attention(store, rng, f"enc{i}.attn", d)
        _add_ln(store, f"enc{i}.ln2", d)
        _add_linear(store, rng, f"enc{i}.ffn1", d, f)
        _add_linear(store, rng, f"enc{i}.ffn2", f, d)
    _add_ln(store, "enc_norm", d)
    for i in range(config.layers):
        _add_ln(store, f"dec{i}.ln1", d)
        _add_attention(store, rng, f"dec{i}.self", d)
        _add_ln(store, f"dec{i}.ln2", d)
        _add_attention(store, rng, f"dec{i}.cross", d)
        _add_ln(store, f"dec{i}.ln3", d)
        _add_linear(store, rng, f"dec{i}.ffn1", d, f)
        _add_linear(store, rng, f"dec{i}.ffn2", f, d)
    _add_ln(store, "dec_norm", d)
    # zero-init heads: the model starts out predicting "no error"
    _add_linear(store, rng, "local_head", d, 2, zero=True)
    _add_linear(store, rng, "global_head", d, 2, zero=True)
    return store


# -- forward ------------------------------------------------------------


def _linear(x, store, name):
    w = store[f"{name}.w"]
    b = store[f"{name}.b"]
    if x.ndim <= 2:
        return ad.matmul(x, w) + b
    # flatten leading dims so the projection is one large GEMM instead of
    # a long loop of tiny per-batch ones
    lead = x.shape[:-1]
    flat = ad.reshape(x, (-1, x.shape[-1]))
    return ad.reshape(ad.matmul(flat, w) + b, lead + (w.shape[1],))


def _lnorm(x, store, name):
    return ad.layer_norm(x, store[f"{name}.g"], store[f"{name}.b"])


def _split_heads(x, b, heads):
    _, l, d = x.shape[-3], x.shape[-2], x.shape[-1]
    return ad.transpose(ad.reshape(x, (b, l, heads, d // heads)), (0, 2, 1, 3))


def _attention(store, name, x_q, x_kv, heads):
    b, lq, d = x_q.shape
    lk = x_kv.shape[1]
    q = _split_heads(_linear(x_q, store, f"{name}.q"), b, heads)
    k = _split_heads(_linear(x_kv, store, f"{name}.k"), b, heads)
    v = _split_heads(_linear(x_kv, store, f"{name}.v"), b, heads)
    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                      1.0 / math.sqrt(d // heads))
    out = ad.matmul(ad.softmax(scores), v)
    out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (b, lq, d))
    return _linear(out, store, f"{name}.o")


def _ffn(store, prefix, x):
    return _linear(ad.relu(_linear(x, store, f"{prefix}.ffn1")), store, f"{prefix}.ffn2")


def forward(config: ModelConfig, store: ParamStore, features: np.ndarray):
    """Run the network.

    features: (T, H, W, 6) or batched (B, T, H, W, 6), T = rounds + 1,
    H = W = D + 1.  Returns (local_logits, global_logits) Tensors of
    shape (B, rounds, D, D, 2) and (B, 2) (batch axis squeezed away if
    the input was unbatched).
    """
    single = features.ndim == 4
    if single:
        features = features[None]
    if features.ndim != 5 or features.shape[-1] != 6:
        raise ValueError(f"expected (B, T, H, W, 6) features, got {features.shape}")
    bsz, t, h, w, _ = features.shape
    rounds, d_code = t - 1, h - 1
    d = config.d_model

    x = Tensor(features.reshape(bsz, t * h * w, 6))
    x = _linear(x, store, "embed") + Tensor(pos_encoding_3d(t, h, w, d))
    for i in range(config.layers):
        xn = _lnorm(x, store, f"enc{i}.ln1")
        x = x + _attention(store, f"enc{i}.attn", xn, xn, config.heads)
        x = x + _ffn(store, f"enc{i}", _lnorm(x, store, f"enc{i}.ln2"))
    memory = _lnorm(x, store, "enc_norm")

    queries = pos_encoding_3d(rounds, d_code, d_code, d)
    y = Tensor(np.broadcast_to(queries[None], (bsz, rounds * d_code * d_code, d)).copy())
    for i in range(config.layers):
        yn = _lnorm(y, store, f"dec{i}.ln1")
        y = y + _attention(store, f"dec{i}.self", yn, yn, config.heads)
        y = y + _attention(store, f"dec{i}.cross", _lnorm(y, store, f"dec{i}.ln2"),
                           memory, config.heads)
        y = y + _ffn(store, f"dec{i}", _lnorm(y, store, f"dec{i}.ln3"))
    y = _lnorm(y, store, "dec_norm")

    local = ad.reshape(_linear(y, store, "local_head"),
                       (bsz, rounds, d_code, d_code, 2))
    glob = _linear(ad.mean(memory, axis=1), store, "global_head")
    if single:
        local = ad.reshape(local, (rounds, d_code, d_code, 2))
        glob = ad.reshape(glob, (2,))
    return local, glob


def mixed_loss(local_logits, labels, global_logits, parities,
               pos_weight: float = 1.0, global_weight: float = 1.0):
    """weighted_bce over per-cell logits + λ · plain bce over the two
    observable-flip logits."""
    if global_weight < 0:
        raise ValueError("global loss weight must be >= 0")
    loss = ad.weighted_bce(local_logits, labels, pos_weight=pos_weight)
    if global_weight:
        loss = loss + ad.scale(ad.weighted_bce(global_logits, parities), global_weight)
    return loss


def predict(local_logits, threshold: float = 0.95) -> np.ndarray:
    """Binary error grid: 1 where post-sigmoid confidence exceeds threshold."""
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must be in (0,1), got {threshold}")
    data = local_logits.data if isinstance(local_logits, Tensor) else np.asarray(local_logits)
    # sigma(x) > thr  <=>  x > logit(thr); avoids evaluating the sigmoid
    return (data > math.log(threshold / (1 - threshold))).astype(np.uint8)


# -- MLP baseline -------------------------------------------------------


@dataclass(frozen=True)
class MLPConfig:
    distance: int
    rounds: int
    hidden1: int = 512
    hidden2: int = 512
    confidence_threshold: float = 0.95
    global_loss_weight: float = 1.0
    pos_weight_policy: str = "inverse-frequency"

    @property
    def input_size(self) -> int:
        return (self.rounds + 1) * (self.distance + 1) ** 2 * 6

    def metadata(self) -> dict[str, str]:
        return {
            "kind": "mlp",
            "distance": str(self.distance),
            "rounds": str(self.rounds),
            "hidden1": str(self.hidden1),
            "hidden2": str(self.hidden2),
            "confidence_threshold": repr(self.confidence_threshold),
            "global_loss_weight": repr(self.global_loss_weight),
            "pos_weight_policy": self.pos_weight_policy,
        }

    @classmethod
    def from_metadata(cls, meta: dict[str, str]) -> "MLPConfig":
        return cls(
            distance=int(meta["distance"]),
            rounds=int(meta["rounds"]),
            hidden1=int(meta["hidden1"]),
            hidden2=int(meta["hidden2"]),
            confidence_threshold=float(meta["confidence_threshold"]),
            global_loss_weight=float(meta["global_loss_weight"]),
            pos_weight_policy=meta.get("pos_weight_policy", "inverse-frequency"),
        )


def init_mlp_params(config: MLPConfig, seed: int = 0) -> ParamStore:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    local_out = config.rounds * config.distance**2 * 2
    _add_linear(store, rng, "fc1", config.input_size, config.hidden1)
    _add_linear(store, rng, "fc2", config.hidden1, config.hidden2)
    _add_linear(store, rng, "local_head", config.hidden2, local_out, zero=True)
    _add_linear(store, rng, "global_head", config.hidden2, 2, zero=True)
    return store


def mlp_forward(config: MLPConfig, store: ParamStore, features: np.ndarray):
    """Flatten -> two ReLU hidden layers -> the same two heads.  Input
    size is fixed by (distance, rounds): no cross-distance transfer."""
    single = features.ndim == 4
    if single:
        features = features[None]
    bsz = features.shape[0]
    flat = features.reshape(bsz, -1)
    if flat.shape[1] != config.input_size:
        raise ValueError(
            f"expected {config.input_size} flattened features for D={config.distance}, "
            f"rounds={config.rounds}; got {flat.shape[1]}")
    h = ad.relu(_linear(Tensor(flat), store, "fc1"))
    h = ad.relu(_linear(h, store, "fc2"))
    local = ad.reshape(_linear(h, store, "local_head"),
                       (bsz, config.rounds, config.distance, config.distance, 2))
    glob = _linear(h, store, "global_head")
    if single:
        local = ad.reshape(local, local.shape[1:])
        glob = ad.reshape(glob, (2,))
    return local, glob
