#!/usr/bin/env python3
"""Ablation matrices (runs/ablation_table2.csv, runs/ablation_table3.csv).

Desk-scale functional runs: global-parity-loss on/off across 10 error
rates, and a two-size model comparison across 5 error rates.  Training
uses 2x10^4 D=3 samples for 2 epochs per cell; evaluation 2000 shots per
point.
"""

import dataclasses

from common import RUNS, dataset, log

from surfdec.encoding import read_dataset
from surfdec.model import ModelConfig
from surfdec.pipeline import (
    EVAL_COLUMNS,
    ablation_global_loss,
    ablation_model_size,
    write_csv,
)

PS10 = (0.0025, 0.005, 0.0075, 0.01, 0.0125, 0.015, 0.0175, 0.02, 0.03, 0.05)
PS5 = (0.005, 0.0075, 0.01, 0.015, 0.02)
BASE = ModelConfig(layers=2, d_model=32, heads=2, ffn_dim=64,
                   pos_weight_policy="10")


def main():
    data = read_dataset(dataset("d3_p01_20k.tqec", 3, 3, 0.01, 20_000, seed=1003))

    t2 = RUNS / "ablation_table2.csv"
    if not t2.exists():
        log("global-loss ablation (2 trainings, 10 eval points each)")
        rows = ablation_global_loss(
            BASE, data, PS10, eval_shots=2000, epochs=2, seed=61,
            log=lambda r: log(f"  lambda={r['global_loss']} p={r['p']} ler={r['ler']}"))
        write_csv(t2, ("global_loss",) + EVAL_COLUMNS, rows)

    t3 = RUNS / "ablation_table3.csv"
    if not t3.exists():
        log("model-size ablation")
        configs = [("small", BASE),
                   ("main", dataclasses.replace(BASE, d_model=64, ffn_dim=128))]
        rows = ablation_model_size(
            configs, data, PS5, eval_shots=2000, epochs=2, seed=62,
            log=lambda r: log(f"  config={r['config']} p={r['p']} ler={r['ler']}"))
        write_csv(t3, ("config", "params") + EVAL_COLUMNS, rows)
    log("ablations done")


if __name__ == "__main__":
    main()
