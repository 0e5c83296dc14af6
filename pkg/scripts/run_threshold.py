#!/usr/bin/env python3
"""MWPM threshold sweep (runs/threshold_mwpm.csv).

D in {3,5,7} x p in {0.0025, 0.005, 0.01, 0.02, 0.03, 0.04, 0.05},
10^5 shots per point, seed 3001.  The large-D high-p corner dominates
the runtime (~1 h total on one core).
"""

from common import RUNS, log

from surfdec.pipeline import THRESHOLD_COLUMNS, threshold_sweep, write_csv

OUT = RUNS / "threshold_mwpm.csv"
PS = (0.0025, 0.005, 0.01, 0.02, 0.03, 0.04, 0.05)


def main():
    if OUT.exists():
        log(f"{OUT} exists, skipping")
        return
    rows, crossing = threshold_sweep(
        "mwpm", (3, 5, 7), PS, 100_000, seed=3001,
        log=lambda r: log(f"  D={r['distance']} p={r['p']} ler={r['ler']}"))
    write_csv(OUT, THRESHOLD_COLUMNS, rows)
    log(f"threshold done; crossing interval {crossing}")


if __name__ == "__main__":
    main()
