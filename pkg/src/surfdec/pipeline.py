"""End-to-end orchestration: two-stage decoding, training, transfer,
logical-error-rate evaluation, threshold sweeps and ablation harnesses.

Evaluation shards shots across worker processes; every shot is a pure
function of (seed, shot index) and aggregation is order-independent, so
results are identical for any worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import multiprocessing
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .encoding import Dataset, DatasetHeader, features_from_detections, write_dataset
from .lattice import CodeLayout, build_layout
from .matching import (
    apply_correction_residual,
    build_graph,
    mwpm_decode,
    uf_decode,
)
from .model import (
    MLPConfig,
    ModelConfig,
    forward,
    init_mlp_params,
    init_transformer_params,
    mixed_loss,
    mlp_forward,
    predict,
)
from .noise import NoiseParams, sample_batch
from .optim import ParamStore, adam_step, lr_at

DECODERS = ("mwpm", "uf")

EVAL_COLUMNS = (
    "decoder", "distance", "p", "shots", "failures", "ler", "ci_lo", "ci_hi",
    "class0", "class1", "raw_defects", "residual_defects",
)
THRESHOLD_COLUMNS = ("decoder", "distance", "p", "ler", "ci_lo", "ci_hi")
CURVE_COLUMNS = ("epoch", "step", "lr", "train_loss", "holdout_loss", "class0", "class1")


def wilson_interval(failures: int, shots: int, z: float = 1.959964) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if shots <= 0:
        raise ValueError("shots must be positive")
    phat = failures / shots
    denom = 1 + z * z / shots
    center = (phat + z * z / (2 * shots)) / denom
    half = z * math.sqrt(phat * (1 - phat) / shots + z * z / (4 * shots * shots)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class EvalReport:
    decoder: str
    distance: int
    p: float
    shots: int
    failures: int
    failures_z: int
    failures_x: int
    logical_error_rate: float
    ci_lo: float
    ci_hi: float
    class0_accuracy: float | None
    class1_accuracy: float | None
    raw_defects: float
    residual_defects: float | None
    seconds_per_shot: float

    def row(self) -> dict:
        return {
            "decoder": self.decoder,
            "distance": self.distance,
            "p": repr(self.p),
            "shots": self.shots,
            "failures": self.failures,
            "ler": f"{self.logical_error_rate:.6g}",
            "ci_lo": f"{self.ci_lo:.6g}",
            "ci_hi": f"{self.ci_hi:.6g}",
            "class0": "" if self.class0_accuracy is None else f"{self.class0_accuracy:.6g}",
            "class1": "" if self.class1_accuracy is None else f"{self.class1_accuracy:.6g}",
            "raw_defects": f"{self.raw_defects:.6g}",
            "residual_defects": (
                "" if self.residual_defects is None else f"{self.residual_defects:.6g}"
            ),
        }


# -- model wrapper ------------------------------------------------------


@dataclass
class Model:
    config: ModelConfig | MLPConfig
    store: ParamStore

    @property
    def is_mlp(self) -> bool:
        return isinstance(self.config, MLPConfig)

    def forward(self, features: np.ndarray):
        if self.is_mlp:
            return mlp_forward(self.config, self.store, features)
        return forward(self.config, self.store, features)

    def save(self, path) -> None:
        save_checkpoint(path, self.store.state_arrays(), self.config.metadata())

    @classmethod
    def load(cls, path) -> "Model":
        arrays, meta = load_checkpoint(path)
        return cls.from_parts(meta, arrays)

    @classmethod
    def from_parts(cls, meta: dict[str, str], arrays: dict[str, np.ndarray]) -> "Model":
        if meta.get("kind") == "mlp":
            config = MLPConfig.from_metadata(meta)
            store = init_mlp_params(config, seed=0)
        else:
            config = ModelConfig.from_metadata(meta)
            store = init_transformer_params(config, seed=0)
        store.load_arrays(arrays)
        return cls(config, store)


def new_model(config: ModelConfig | MLPConfig, seed: int = 0) -> Model:
    if isinstance(config, MLPConfig):
        return Model(config, init_mlp_params(config, seed))
    return Model(config, init_transformer_params(config, seed))


# -- decoding -----------------------------------------------------------


@lru_cache(maxsize=16)
def _geometry(distance: int, rounds: int):
    layout = build_layout(distance)
    gx = build_graph(layout, rounds, "X")
    gz = build_graph(layout, rounds, "Z")
    return layout, gx, gz


def _decode_parity(graph, detections, decoder: str) -> int:
    defects = graph.defects_from_detections(detections)
    if decoder == "mwpm":
        return mwpm_decode(graph, defects).correction_parity
    if decoder == "uf":
        return uf_decode(graph, defects).correction_parity
    raise ValueError(f"unknown decoder {decoder!r}; expected one of {DECODERS}")


def classical_decode(layout: CodeLayout, detections: np.ndarray,
                     decoder: str = "mwpm") -> tuple[int, int]:
    """Predicted (z_obs_flip, x_obs_flip) for one detection volume."""
    rounds = detections.shape[0] - 1
    _, gx, gz = _geometry(layout.distance, rounds)
    return _decode_parity(gz, detections, decoder), _decode_parity(gx, detections, decoder)


def _model_stage(model: Model, detections: np.ndarray, layout: CodeLayout,
                 batch: int = 256):
    """Batched first stage: predicted per-round error grids and the parity
    contribution of those predictions over the logical supports."""
    n, num_layers, _ = detections.shape
    rounds = num_layers - 1
    d = layout.distance
    preds = np.empty((n, rounds, d, d, 2), dtype=np.uint8)
    thr = model.config.confidence_threshold
    for s in range(0, n, batch):
        feats = features_from_detections(detections[s:s + batch], layout, rounds)
        local, _ = model.forward(feats)
        preds[s:s + batch] = predict(local, thr)
    pred_x = preds[..., 0].reshape(n, rounds, d * d)
    pred_z = preds[..., 1].reshape(n, rounds, d * d)
    zsup = list(layout.logical_z_support)
    xsup = list(layout.logical_x_support)
    par_z = pred_x.sum(axis=1)[:, zsup].sum(axis=1) % 2
    par_x = pred_z.sum(axis=1)[:, xsup].sum(axis=1) % 2
    return pred_x, pred_z, par_z.astype(np.uint8), par_x.astype(np.uint8)


def two_stage_decode(model: Model, detections: np.ndarray, layout: CodeLayout,
                     global_decoder: str = "mwpm") -> tuple[int, int]:
    """Model predicts errors and clears their syndrome signature; the
    classical decoder handles the residual; final parity per observable is
    the XOR of both contributions."""
    pred_x, pred_z, par_z, par_x = _model_stage(model, detections[None], layout)
    residual = apply_correction_residual(detections, pred_x[0], pred_z[0], layout)
    gz, gx = classical_decode(layout, residual, global_decoder)
    return int(par_z[0]) ^ gz, int(par_x[0]) ^ gx


# -- evaluation ---------------------------------------------------------

_EVAL_CHUNK = 2048


def _eval_chunk(task) -> dict:
    (distance, rounds, p, seed, start, count, decoder, model_parts) = task
    layout, gx, gz = _geometry(distance, rounds)
    batch = sample_batch(layout, NoiseParams(p, rounds), seed, start, count)
    det = batch.detections

    agg = {
        "shots": count,
        "raw_defects": int(det.sum()),
        "tn": 0, "fp": 0, "tp": 0, "fn": 0,
        "residual_defects": 0,
        "failures": 0, "failures_z": 0, "failures_x": 0,
    }

    if model_parts is not None:
        model = Model.from_parts(*model_parts)
        pred_x, pred_z, par_z, par_x = _model_stage(model, det, layout)
        labels_x = batch.x_errors
        labels_z = batch.z_errors
        pos = int(labels_x.sum() + labels_z.sum())
        tp = int((pred_x & labels_x).sum() + (pred_z & labels_z).sum())
        pred_pos = int(pred_x.sum() + pred_z.sum())
        total = labels_x.size + labels_z.size
        agg["tp"] = tp
        agg["fn"] = pos - tp
        agg["fp"] = pred_pos - tp
        agg["tn"] = total - pos - (pred_pos - tp)
    else:
        par_z = np.zeros(count, dtype=np.uint8)
        par_x = np.zeros(count, dtype=np.uint8)
        pred_x = pred_z = None

    for i in range(count):
        d_i = det[i]
        if pred_x is not None:
            d_i = apply_correction_residual(d_i, pred_x[i], pred_z[i], layout)
            agg["residual_defects"] += int(d_i.sum())
        pz = par_z[i] ^ _decode_parity(gz, d_i, decoder)
        px = par_x[i] ^ _decode_parity(gx, d_i, decoder)
        wrong_z = pz != batch.z_obs_flip[i]
        wrong_x = px != batch.x_obs_flip[i]
        agg["failures_z"] += int(wrong_z)
        agg["failures_x"] += int(wrong_x)
        agg["failures"] += int(wrong_z or wrong_x)
    return agg


def evaluate(decoder: str, distance: int, p: float, shots: int, seed: int,
             rounds: int | None = None, workers: int = 1,
             model: Model | None = None) -> EvalReport:
    """Monte-Carlo logical-error-rate estimate.

    A shot fails if either observable's decoded parity is wrong; the
    Wilson 95% interval covers the combined rate.  With `model`, runs the
    two-stage pipeline and additionally reports per-cell class accuracies
    and mean raw/residual defect counts.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if decoder not in DECODERS:
        raise ValueError(f"unknown decoder {decoder!r}; expected one of {DECODERS}")
    rounds = distance if rounds is None else rounds
    model_parts = None
    if model is not None:
        model_parts = (model.config.metadata(), model.store.state_arrays())

    tasks = [
        (distance, rounds, p, seed, start, min(_EVAL_CHUNK, shots - start),
         decoder, model_parts)
        for start in range(0, shots, _EVAL_CHUNK)
    ]
    t0 = time.perf_counter()
    if workers > 1 and len(tasks) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers) as pool:
            results = pool.map(_eval_chunk, tasks)
    else:
        results = [_eval_chunk(t) for t in tasks]
    elapsed = time.perf_counter() - t0

    tot = {k: sum(r[k] for r in results) for k in results[0]}
    lo, hi = wilson_interval(tot["failures"], shots)
    if model is not None:
        neg = tot["tn"] + tot["fp"]
        pos = tot["tp"] + tot["fn"]
        class0 = tot["tn"] / neg if neg else 1.0
        class1 = tot["tp"] / pos if pos else 1.0
        residual = tot["residual_defects"] / shots
    else:
        class0 = class1 = residual = None
    return EvalReport(
        decoder=decoder, distance=distance, p=p, shots=shots,
        failures=tot["failures"], failures_z=tot["failures_z"],
        failures_x=tot["failures_x"],
        logical_error_rate=tot["failures"] / shots, ci_lo=lo, ci_hi=hi,
        class0_accuracy=class0, class1_accuracy=class1,
        raw_defects=tot["raw_defects"] / shots, residual_defects=residual,
        seconds_per_shot=elapsed / shots,
    )


# -- dataset generation -------------------------------------------------


def generate_dataset(path, distance: int, rounds: int, p: float, count: int,
                     seed: int, chunk: int = 8192) -> DatasetHeader:
    layout = build_layout(distance)
    params = NoiseParams(p, rounds)
    header = DatasetHeader(distance, rounds, count, p, seed)
    batches = (
        sample_batch(layout, params, seed, start, min(chunk, count - start))
        for start in range(0, count, chunk)
    )
    write_dataset(path, header, batches)
    return header


# -- training -----------------------------------------------------------


def _resolve_pos_weight(policy: str, labels: np.ndarray) -> float:
    if policy == "none":
        return 1.0
    if policy == "inverse-frequency":
        ones = int(labels.sum())
        if ones == 0:
            return 1.0
        return (labels.size - ones) / ones
    try:
        value = float(policy)
    except ValueError:
        raise ValueError(f"unknown pos_weight policy {policy!r}") from None
    if value <= 0:
        raise ValueError("pos_weight must be positive")
    return value


def _class_counts(pred: np.ndarray, labels: np.ndarray) -> tuple[int, int, int, int]:
    tp = int((pred & labels).sum())
    fp = int(pred.sum()) - tp
    fn = int(labels.sum()) - tp
    tn = labels.size - tp - fp - fn
    return tn, fp, fn, tp


def train(config: ModelConfig | MLPConfig, dataset: Dataset, epochs: int,
          peak_lr: float = 0.001, weight_decay: float = 0.0001,
          batch_size: int = 256, seed: int = 0,
          constant_lr: float | None = None, init_model: Model | None = None,
          curve_path=None, log=None) -> tuple[Model, list[dict]]:
    """Train on a dataset; the final 5% of the file is the held-out split.

    Returns the trained model and per-epoch history rows
    (epoch, step, lr, train_loss, holdout_loss, class0, class1).
    """
    header = dataset.header
    layout = build_layout(header.distance)
    if isinstance(config, MLPConfig) and (
            config.distance != header.distance or config.rounds != header.rounds):
        raise ValueError(
            f"MLP grid D={config.distance}/rounds={config.rounds} does not match "
            f"dataset D={header.distance}/rounds={header.rounds}")

    n = len(dataset)
    n_hold = max(1, n // 20)
    n_train = n - n_hold
    if n_train < 1:
        raise ValueError("dataset too small to split")

    model = init_model if init_model is not None else new_model(config, seed)
    store = model.store
    config = model.config

    train_labels = dataset.labels[:n_train]
    pos_weight = _resolve_pos_weight(config.pos_weight_policy, train_labels)

    steps_per_epoch = max(1, math.ceil(n_train / batch_size))
    total_steps = max(1, epochs * steps_per_epoch)
    warmup = max(1, int(0.05 * total_steps))

    rng = np.random.default_rng(seed)
    history = []
    step = 0
    lr = constant_lr if constant_lr is not None else 0.0
    for epoch in range(epochs):
        order = rng.permutation(n_train)
        loss_sum = 0.0
        for s in range(0, n_train, batch_size):
            idx = order[s:s + batch_size]
            feats = features_from_detections(
                dataset.detections[idx], layout, header.rounds)
            labels = dataset.labels[idx].astype(np.float32)
            parities = dataset.parities[idx].astype(np.float32)
            local, glob = model.forward(feats)
            loss = mixed_loss(local, labels, glob, parities, pos_weight,
                              config.global_loss_weight)
            store.zero_grad()
            loss.backward()
            step += 1
            if constant_lr is None:
                lr = lr_at(min(step, total_steps), peak_lr, warmup, total_steps)
            adam_step(store, lr, weight_decay=weight_decay)
            loss_sum += loss.item() * len(idx)
        train_loss = loss_sum / n_train

        hold_loss, class0, class1 = _holdout_metrics(
            model, dataset, n_train, layout, pos_weight, batch_size)
        row = {
            "epoch": epoch + 1, "step": step, "lr": f"{lr:.6g}",
            "train_loss": f"{train_loss:.6g}", "holdout_loss": f"{hold_loss:.6g}",
            "class0": f"{class0:.6g}", "class1": f"{class1:.6g}",
        }
        history.append(row)
        if log is not None:
            log(row)
        if curve_path is not None:
            write_csv(curve_path, CURVE_COLUMNS, history)
    return model, history


def _holdout_metrics(model: Model, dataset: Dataset, n_train: int,
                     layout: CodeLayout, pos_weight: float, batch_size: int):
    header = dataset.header
    loss_sum = 0.0
    tn = fp = fn = tp = 0
    n_hold = len(dataset) - n_train
    for s in range(n_train, len(dataset), batch_size):
        sl = slice(s, min(s + batch_size, len(dataset)))
        feats = features_from_detections(dataset.detections[sl], layout, header.rounds)
        labels = dataset.labels[sl]
        local, glob = model.forward(feats)
        loss = mixed_loss(local, labels.astype(np.float32), glob,
                          dataset.parities[sl].astype(np.float32), pos_weight,
                          model.config.global_loss_weight)
        loss_sum += loss.item() * (sl.stop - sl.start)
        pred = predict(local, 0.5)
        a, b, c, d = _class_counts(pred, labels)
        tn, fp, fn, tp = tn + a, fp + b, fn + c, tp + d
    class0 = tn / (tn + fp) if tn + fp else 1.0
    class1 = tp / (tp + fn) if tp + fn else 1.0
    return loss_sum / n_hold, class0, class1


def transfer(source: Model, dataset: Dataset, epochs: int = 10,
             lr: float = 0.0005, seed: int = 0, weight_decay: float = 0.0,
             batch_size: int = 256, curve_path=None, log=None) -> tuple[Model, list[dict]]:
    """Fine-tune a transformer checkpoint on a (possibly different-D)
    dataset at a constant learning rate.  Weights are reused unchanged;
    positional encodings are recomputed from the new grid at forward time."""
    if source.is_mlp:
        raise ValueError("transfer requires a transformer source; the MLP baseline "
                         "has distance-specific shapes")
    copy = Model(source.config, init_transformer_params(source.config, seed=0))
    copy.store.load_arrays(source.store.state_arrays())
    return train(copy.config, dataset, epochs, seed=seed, constant_lr=lr,
                 weight_decay=weight_decay, batch_size=batch_size,
                 init_model=copy, curve_path=curve_path, log=log)


# -- threshold sweep ----------------------------------------------------


def threshold_sweep(decoder: str, distances, ps, shots: int, seed: int,
                    workers: int = 1, log=None):
    """Evaluate a (distance, p) grid.  Returns (rows, crossing) where
    crossing is the p-interval in which the LER ordering between the
    smallest and largest distance reverses (None if it never does)."""
    distances = sorted(distances)
    ps = sorted(ps)
    if len(distances) < 2:
        raise ValueError("threshold sweep needs at least 2 distances")
    rows = []
    ler = {}
    for d in distances:
        for p in ps:
            rep = evaluate(decoder, d, p, shots, seed, workers=workers)
            ler[(d, p)] = rep.logical_error_rate
            rows.append({
                "decoder": decoder, "distance": d, "p": repr(p),
                "ler": f"{rep.logical_error_rate:.6g}",
                "ci_lo": f"{rep.ci_lo:.6g}", "ci_hi": f"{rep.ci_hi:.6g}",
            })
            if log is not None:
                log(rows[-1])
    lo_d, hi_d = distances[0], distances[-1]
    crossing = None
    for p0, p1 in zip(ps, ps[1:]):
        before = ler[(lo_d, p0)] - ler[(hi_d, p0)]
        after = ler[(lo_d, p1)] - ler[(hi_d, p1)]
        if (before > 0) != (after > 0):
            crossing = (p0, p1)
            break
    return rows, crossing


# -- ablation harnesses -------------------------------------------------


def ablation_global_loss(config: ModelConfig, dataset: Dataset, ps, eval_shots: int,
                         epochs: int, seed: int, workers: int = 1, log=None):
    """Train once with the global-parity loss off and once on; evaluate
    the two-stage pipeline over `ps`.  Table-2-shaped rows."""
    rows = []
    for lam in (0.0, 1.0):
        cfg = dataclasses.replace(config, global_loss_weight=lam)
        model, _ = train(cfg, dataset, epochs, seed=seed)
        for p in ps:
            rep = evaluate("mwpm", dataset.header.distance, p, eval_shots,
                           seed + 1, workers=workers, model=model)
            row = {"global_loss": repr(lam), **rep.row()}
            rows.append(row)
            if log is not None:
                log(row)
    return rows


def ablation_model_size(configs, dataset: Dataset, ps, eval_shots: int,
                        epochs: int, seed: int, workers: int = 1, log=None):
    """Train each named config on the same data; evaluate over `ps`.
    Table-3-shaped rows (config label x p)."""
    rows = []
    for label, cfg in configs:
        model, _ = train(cfg, dataset, epochs, seed=seed)
        n_params = model.store.num_params()
        for p in ps:
            rep = evaluate("mwpm", dataset.header.distance, p, eval_shots,
                           seed + 1, workers=workers, model=model)
            row = {"config": label, "params": n_params, **rep.row()}
            rows.append(row)
            if log is not None:
                log(row)
    return rows


def class_accuracy_report(model: Model, distance: int, ps, shots: int, seed: int,
                          rounds: int | None = None, log=None):
    """Per-p class-0 / class-1 accuracy of the model's local predictions
    over freshly sampled shots.  Fig-8-shaped rows."""
    rounds = distance if rounds is None else rounds
    layout = build_layout(distance)
    rows = []
    for p in ps:
        batch = sample_batch(layout, NoiseParams(p, rounds), seed, 0, shots)
        pred_x, pred_z, _, _ = _model_stage(model, batch.detections, layout)
        pred = np.stack([pred_x, pred_z], axis=-1)
        labels = np.stack([batch.x_errors, batch.z_errors], axis=-1)
        tn, fp, fn, tp = _class_counts(pred, labels)
        row = {
            "p": repr(p),
            "class0": f"{tn / (tn + fp):.6g}" if tn + fp else "1",
            "class1": f"{tp / (tp + fn):.6g}" if tp + fn else "1",
        }
        rows.append(row)
        if log is not None:
            log(row)
    return rows


# -- CSV helpers --------------------------------------------------------


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(columns))
        w.writeheader()
        w.writerows(rows)


def format_csv(columns, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns))
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
