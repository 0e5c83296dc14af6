#!/usr/bin/env python3
"""Classical-decoder logical error rates at p = 0.01 (runs/table1_eval.csv).

Three rows: MWPM D=3, MWPM D=5, UF D=5; 10^6 shots each, seed 2001.
Regenerate by deleting the output file and re-running.
"""

from common import RUNS, log

from surfdec.pipeline import EVAL_COLUMNS, evaluate, write_csv

OUT = RUNS / "table1_eval.csv"


def main():
    if OUT.exists():
        log(f"{OUT} exists, skipping")
        return
    rows = []
    for decoder, distance in (("mwpm", 3), ("mwpm", 5), ("uf", 5)):
        log(f"evaluating {decoder} D={distance} p=0.01, 1e6 shots")
        rep = evaluate(decoder, distance, 0.01, 1_000_000, seed=2001)
        log(f"  ler={rep.logical_error_rate:.5f} "
            f"ci=[{rep.ci_lo:.5f},{rep.ci_hi:.5f}] "
            f"({rep.seconds_per_shot * 1e6:.0f} us/shot)")
        rows.append(rep.row())
        write_csv(OUT.with_suffix(".partial"), EVAL_COLUMNS, rows)
    write_csv(OUT, EVAL_COLUMNS, rows)
    OUT.with_suffix(".partial").unlink(missing_ok=True)
    log("table1 done")


if __name__ == "__main__":
    main()
