#!/usr/bin/env python3
"""Produce every cached artifact under runs/ in dependency-safe order.

Each stage skips outputs that already exist, so the runner can resume.
Expect roughly 11 h single-core end to end; the training stage in
train_small_d3.py dominates.
"""

from common import log

import run_ablations
import run_table1
import run_threshold
import run_transfer
import train_small_d3


def main():
    for stage in (train_small_d3, run_transfer, run_table1,
                  run_threshold, run_ablations):
        log(f"=== {stage.__name__} ===")
        stage.main()
    log("all artifacts present")


if __name__ == "__main__":
    main()
