"""Command-line entry point.

Subcommands: layout | sample | decode | train | transfer | eval |
threshold | ablate.  Every flag mirrors a config-file key (flat
`key=value` lines, `#` comments); precedence is flag > config file >
default.  Randomized commands require --seed.  Exit codes: 0 success,
1 usage error, 2 data/format error.  CSV goes to stdout unless --out is
given.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .checkpoint import CheckpointFormatError
from .encoding import DatasetFormatError, read_dataset
from .lattice import build_layout
from . import pipeline
from .model import MAIN_CONFIG, SMALL_CONFIG, MLPConfig, ModelConfig
from .pipeline import (
    CURVE_COLUMNS,
    EVAL_COLUMNS,
    THRESHOLD_COLUMNS,
    Model,
    evaluate,
    format_csv,
    generate_dataset,
    threshold_sweep,
    train,
    transfer,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise UsageError(message)


def _parse_config_file(path) -> dict[str, str]:
    values = {}
    try:
        with open(path) as f:
            for ln, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{ln}: expected key=value, got {line!r}")
                k, v = line.split("=", 1)
                values[k.strip()] = v.strip()
    except OSError as e:
        raise UsageError(f"cannot read config file: {e}") from e
    return values


def _merge_config(args: argparse.Namespace, parser: _Parser) -> argparse.Namespace:
    """flag > config file > default; unknown config keys rejected."""
    if not getattr(args, "config", None):
        return args
    file_values = _parse_config_file(args.config)
    actions = {a.dest: a for a in parser._actions
               if a.dest not in ("help", "config")}
    unknown = set(file_values) - set(actions)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key, raw in file_values.items():
        if getattr(args, key) is not None:  # flag wins
            continue
        a = actions[key]
        try:
            value = (a.type or str)(raw)
        except (TypeError, ValueError) as e:
            raise UsageError(f"config key {key}: {e}") from e
        if a.choices and value not in a.choices:
            raise UsageError(f"config key {key}: invalid choice {value!r}")
        setattr(args, key, value)
    return args


def _require(args, *keys):
    for key in keys:
        if getattr(args, key) is None:
            raise UsageError(f"missing required setting: {key.replace('_', '-')}")


def _default(args, **defaults):
    for key, value in defaults.items():
        if getattr(args, key) is None:
            setattr(args, key, value)


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    return int(os.environ.get("QEC_WORKERS", "1"))


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _distances(spec: str) -> tuple[int, ...]:
    return tuple(int(x) for x in spec.split(","))


def _floats(spec: str) -> tuple[float, ...]:
    return tuple(float(x) for x in spec.split(","))


def _model_config(args) -> ModelConfig | MLPConfig:
    _default(args, arch="transformer", threshold=0.95, global_loss_weight=1.0,
             pos_weight="inverse-frequency")
    common = dict(confidence_threshold=args.threshold,
                  global_loss_weight=args.global_loss_weight,
                  pos_weight_policy=args.pos_weight)
    if args.arch == "mlp":
        _default(args, hidden1=512, hidden2=512)
        header = read_dataset(args.data).header
        return MLPConfig(distance=header.distance, rounds=header.rounds,
                         hidden1=args.hidden1, hidden2=args.hidden2, **common)
    if args.preset is not None:
        base = {"small": SMALL_CONFIG, "main": MAIN_CONFIG}[args.preset]
        return dataclasses.replace(base, **common)
    _default(args, layers=6, d_model=64, heads=2, ffn_dim=128)
    return ModelConfig(layers=args.layers, d_model=args.d_model, heads=args.heads,
                       ffn_dim=args.ffn_dim, **common)


# -- subcommand bodies --------------------------------------------------


def _cmd_layout(args):
    _require(args, "distance")
    layout = build_layout(args.distance)
    lines = [f"distance {layout.distance}: {layout.num_qubits} data qubits, "
             f"{layout.num_checks} checks"]
    for i, c in enumerate(layout.checks):
        lines.append(f"check {i:3d}  kind {c.kind}  vertex {c.vertex}  "
                     f"support {sorted(c.support)}")
    lines.append(f"logical Z support: {sorted(layout.logical_z_support)}")
    lines.append(f"logical X support: {sorted(layout.logical_x_support)}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


def _cmd_sample(args):
    _require(args, "distance", "p", "shots", "seed", "out")
    _default(args, rounds=args.distance)
    generate_dataset(args.out, args.distance, args.rounds, args.p, args.shots,
                     args.seed)
    return 0


def _cmd_decode(args):
    _require(args, "decoder", "distance", "p", "shots", "seed")
    rep = evaluate(args.decoder, args.distance, args.p, args.shots, args.seed,
                   rounds=args.rounds, workers=_workers(args))
    _emit(args, format_csv(EVAL_COLUMNS, [rep.row()]))
    return 0


def _cmd_train(args):
    _require(args, "data", "epochs", "seed", "out")
    _default(args, lr=0.001, wd=0.0001, batch=256)
    dataset = read_dataset(args.data)
    config = _model_config(args)
    model, history = train(config, dataset, args.epochs, peak_lr=args.lr,
                           weight_decay=args.wd, batch_size=args.batch,
                           seed=args.seed, curve_path=args.curve)
    model.save(args.out)
    if args.curve is None:
        sys.stdout.write(format_csv(CURVE_COLUMNS, history))
    return 0


def _cmd_transfer(args):
    _require(args, "source", "data", "seed", "out")
    _default(args, epochs=10, lr=0.0005, batch=256)
    source = Model.load(args.source)
    dataset = read_dataset(args.data)
    model, history = transfer(source, dataset, epochs=args.epochs, lr=args.lr,
                              seed=args.seed, batch_size=args.batch,
                              curve_path=args.curve)
    model.save(args.out)
    if args.curve is None:
        sys.stdout.write(format_csv(CURVE_COLUMNS, history))
    return 0


def _cmd_eval(args):
    _require(args, "model", "distance", "p", "shots", "seed")
    _default(args, global_decoder="mwpm")
    model = Model.load(args.model)
    rep = evaluate(args.global_decoder, args.distance, args.p, args.shots,
                   args.seed, rounds=args.rounds, workers=_workers(args),
                   model=model)
    _emit(args, format_csv(EVAL_COLUMNS, [rep.row()]))
    return 0


def _cmd_threshold(args):
    _require(args, "decoder", "distances", "ps", "shots", "seed")
    rows, crossing = threshold_sweep(args.decoder, _distances(args.distances),
                                     _floats(args.ps), args.shots, args.seed,
                                     workers=_workers(args))
    _emit(args, format_csv(THRESHOLD_COLUMNS, rows))
    if crossing:
        print(f"# crossing in p interval [{crossing[0]}, {crossing[1]}]",
              file=sys.stderr)
    return 0


def _cmd_ablate(args):
    _require(args, "mode", "seed")
    workers = _workers(args)
    if args.mode == "class-accuracy":
        _require(args, "model", "distance", "ps", "shots")
        model = Model.load(args.model)
        rows = pipeline.class_accuracy_report(model, args.distance,
                                              _floats(args.ps), args.shots,
                                              args.seed)
        _emit(args, format_csv(("p", "class0", "class1"), rows))
        return 0
    _require(args, "data", "ps", "shots", "epochs")
    dataset = read_dataset(args.data)
    config = _model_config(args)
    if args.mode == "global-loss":
        rows = pipeline.ablation_global_loss(config, dataset, _floats(args.ps),
                                             args.shots, args.epochs, args.seed,
                                             workers=workers)
        _emit(args, format_csv(("global_loss",) + EVAL_COLUMNS, rows))
    else:  # model-size
        configs = [("small", dataclasses.replace(
                        SMALL_CONFIG, global_loss_weight=config.global_loss_weight)),
                   ("main", dataclasses.replace(
                        MAIN_CONFIG, global_loss_weight=config.global_loss_weight))]
        if not args.paper_scale:
            # desk-scale stand-ins with the same size ordering
            configs = [("small", dataclasses.replace(config, d_model=32, heads=2,
                                                     ffn_dim=64, layers=2)),
                       ("main", dataclasses.replace(config, d_model=64, heads=2,
                                                    ffn_dim=128, layers=2))]
        rows = pipeline.ablation_model_size(configs, dataset, _floats(args.ps),
                                            args.shots, args.epochs, args.seed,
                                            workers=workers)
        _emit(args, format_csv(("config", "params") + EVAL_COLUMNS, rows))
    return 0


# -- parser construction ------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--out", help="output path (default: stdout for CSV)")


def _add_model_flags(p):
    p.add_argument("--arch", choices=("transformer", "mlp"),
                   help="model family (default transformer)")
    p.add_argument("--preset", choices=("small", "main"),
                   help="named transformer size from the reference setup")
    p.add_argument("--layers", type=int, help="encoder/decoder block count (default 6)")
    p.add_argument("--d-model", dest="d_model", type=int,
                   help="embedding width (default 64)")
    p.add_argument("--heads", type=int, help="attention heads (default 2)")
    p.add_argument("--ffn-dim", dest="ffn_dim", type=int,
                   help="feed-forward width (default 128)")
    p.add_argument("--hidden1", type=int, help="MLP first hidden width (default 512)")
    p.add_argument("--hidden2", type=int, help="MLP second hidden width (default 512)")
    p.add_argument("--threshold", type=float,
                   help="positive-prediction confidence (default 0.95)")
    p.add_argument("--global-loss-weight", dest="global_loss_weight", type=float,
                   help="weight of the global-parity loss term (default 1.0)")
    p.add_argument("--pos-weight", dest="pos_weight",
                   help="'inverse-frequency', 'none' or a number (default inverse-frequency)")


def build_parser() -> _Parser:
    parser = _Parser(prog="surfdec",
                     description="Surface-code decoding workbench")
    sub = parser.add_subparsers(dest="command", metavar="command",
                              parser_class=_Parser)

    p = sub.add_parser("layout",
                       help="print the code geometry for a distance")
    p.add_argument("--distance", type=int, help="code distance (odd, >= 3)")
    _add_common(p)

    p = sub.add_parser("sample",
                       help="generate a .tqec dataset")
    p.add_argument("--distance", type=int, help="code distance")
    p.add_argument("--rounds", type=int, help="measurement rounds (default: distance)")
    p.add_argument("--p", type=float, help="physical error rate")
    p.add_argument("--shots", type=int, help="number of samples")
    p.add_argument("--seed", type=int, help="RNG seed (required)")
    _add_common(p)

    p = sub.add_parser("decode",
                       help="classical decoder logical-error-rate estimate")
    p.add_argument("--decoder", choices=("mwpm", "uf"), help="global decoder")
    p.add_argument("--distance", type=int, help="code distance")
    p.add_argument("--rounds", type=int, help="measurement rounds (default: distance)")
    p.add_argument("--p", type=float, help="physical error rate")
    p.add_argument("--shots", type=int, help="Monte-Carlo shots")
    p.add_argument("--seed", type=int, help="RNG seed (required)")
    p.add_argument("--workers", type=int,
                   help="parallel workers (default: $QEC_WORKERS or 1)")
    _add_common(p)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", help="training dataset (.tqec)")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--lr", type=float, help="peak learning rate (default 0.001)")
    p.add_argument("--wd", type=float, help="weight decay (default 0.0001)")
    p.add_argument("--batch", type=int, help="batch size (default 256)")
    p.add_argument("--seed", type=int, help="RNG seed (required)")
    p.add_argument("--curve", help="write the loss curve CSV here")
    _add_model_flags(p)
    _add_common(p)

    p = sub.add_parser("transfer",
                       help="fine-tune a transformer checkpoint on new data")
    p.add_argument("--source", help="source checkpoint (.tqck)")
    p.add_argument("--data", help="fine-tuning dataset (.tqec)")
    p.add_argument("--epochs", type=int, help="fine-tuning epochs (default 10)")
    p.add_argument("--lr", type=float, help="constant learning rate (default 0.0005)")
    p.add_argument("--batch", type=int, help="batch size (default 256)")
    p.add_argument("--seed", type=int, help="RNG seed (required)")
    p.add_argument("--curve", help="write the loss curve CSV here")
    _add_common(p)

    p = sub.add_parser("eval",
                       help="two-stage model + global decoder evaluation")
    p.add_argument("--model", help="model checkpoint (.tqck)")
    p.add_argument("--global", dest="global_decoder", choices=("mwpm", "uf"),
                   help="global decoder for residuals (default mwpm)")
    p.add_argument("--distance", type=int, help="code distance")
    p.add_argument("--rounds", type=int, help="measurement rounds (default: distance)")
    p.add_argument("--p", type=float, help="physical error rate")
    p.add_argument("--shots", type=int, help="Monte-Carlo shots")
    p.add_argument("--seed", type=int, help="RNG seed (required)")
    p.add_argument("--workers", type=int,
                   help="parallel workers (default: $QEC_WORKERS or 1)")
    _add_common(p)

    p = sub.add_parser("threshold",
                       help="LER curves over a (distance, p) grid")
    p.add_argument("--decoder", choices=("mwpm", "uf"), help="decoder")
    p.add_argument("--distances", help="comma-separated distances, e.g. 3,5,7")
    p.add_argument("--ps", help="comma-separated physical error rates")
    p.add_argument("--shots", type=int, help="shots per grid point")
    p.add_argument("--seed", type=int, help="RNG seed (required)")
    p.add_argument("--workers", type=int,
                   help="parallel workers (default: $QEC_WORKERS or 1)")
    _add_common(p)

    p = sub.add_parser("ablate",
                       help="ablation matrices as labeled CSVs")
    p.add_argument("--mode", choices=("global-loss", "model-size", "class-accuracy"),
                   help="which ablation to run")
    p.add_argument("--data", help="training dataset (.tqec)")
    p.add_argument("--model", help="checkpoint for class-accuracy mode")
    p.add_argument("--distance", type=int, help="distance for class-accuracy mode")
    p.add_argument("--ps", help="comma-separated physical error rates")
    p.add_argument("--shots", type=int, help="evaluation shots per point")
    p.add_argument("--epochs", type=int, help="training epochs per cell")
    p.add_argument("--seed", type=int, help="RNG seed (required)")
    p.add_argument("--workers", type=int,
                   help="parallel workers (default: $QEC_WORKERS or 1)")
    p.add_argument("--paper-scale", action="store_true", default=False,
                   help="use the full small/main configs in model-size mode")
    _add_model_flags(p)
    _add_common(p)

    return parser


_COMMANDS = {
    "layout": _cmd_layout,
    "sample": _cmd_sample,
    "decode": _cmd_decode,
    "train": _cmd_train,
    "transfer": _cmd_transfer,
    "eval": _cmd_eval,
    "threshold": _cmd_threshold,
    "ablate": _cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        sub = next(a for a in parser._actions
                   if isinstance(a, argparse._SubParsersAction))
        args = _merge_config(args, sub.choices[args.command])
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (DatasetFormatError, CheckpointFormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
