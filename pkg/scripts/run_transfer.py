#!/usr/bin/env python3
"""Transfer-learning comparison (runs/transfer/).

Trains a small-config D=5 source (4 epochs on 2x10^4 samples), then for
seeds {1,2} fine-tunes it on D=3 data (10 epochs, constant lr 0.0005)
against a from-scratch run on the same data, and finishes with a
D=5 -> D=7 fine-tuning smoke run.  Outputs: source_d5.tqck plus one
curve CSV per run.
"""

from common import RUNS, dataset, log

from surfdec.encoding import read_dataset
from surfdec.model import SMALL_CONFIG
from surfdec.pipeline import Model, train, transfer

OUT = RUNS / "transfer"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    d5 = dataset("d5_p01_20k.tqec", 5, 5, 0.01, 20_000, seed=1002)
    d3 = dataset("d3_p01_20k.tqec", 3, 3, 0.01, 20_000, seed=1003)
    d7 = dataset("d7_p01_2k.tqec", 7, 7, 0.01, 2_000, seed=1004)

    src_path = OUT / "source_d5.tqck"
    if not src_path.exists():
        log("training D=5 source, 4 epochs")
        # batch 32 at D=5: the (rounds+1)(D+1)^2-token attention tapes
        # exceed the 6 GB available here at batch 64 and up
        model, _ = train(SMALL_CONFIG, read_dataset(d5), epochs=4, seed=7,
                         batch_size=32,
                         curve_path=OUT / "source_d5_curve.csv",
                         log=lambda r: log(f"  epoch {r['epoch']}: {r['train_loss']}"))
        model.save(src_path)
    source = Model.load(src_path)
    ds3 = read_dataset(d3)

    for seed in (1, 2):
        t_curve = OUT / f"transfer_d3_seed{seed}.csv"
        if not t_curve.exists():
            log(f"transfer D=5->D=3 seed {seed}")
            transfer(source, ds3, epochs=10, lr=0.0005, seed=seed,
                     curve_path=t_curve,
                     log=lambda r: log(f"  epoch {r['epoch']}: holdout {r['holdout_loss']}"))
        s_curve = OUT / f"scratch_d3_seed{seed}.csv"
        if not s_curve.exists():
            log(f"scratch D=3 seed {seed}")
            train(SMALL_CONFIG, ds3, epochs=10, seed=seed, curve_path=s_curve,
                  log=lambda r: log(f"  epoch {r['epoch']}: holdout {r['holdout_loss']}"))

    d7_curve = OUT / "transfer_d7_smoke.csv"
    if not d7_curve.exists():
        log("transfer D=5->D=7 smoke, 1 epoch")
        transfer(source, read_dataset(d7), epochs=1, lr=0.0005, seed=1,
                 batch_size=8, curve_path=d7_curve)
    log("transfer done")


if __name__ == "__main__":
    main()
