"""Shared helpers for the experiment scripts.

Every script is idempotent: finished outputs are skipped, so the
sequential runner (run_all.py) can resume after an interruption.
"""

import pathlib
import sys
import time

ROOT = pathlib.Path(__file__).resolve().parent.parent
RUNS = ROOT / "runs"
DATA = RUNS / "data"

sys.path.insert(0, str(ROOT / "src"))


def log(msg: str) -> None:
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def dataset(name: str, distance: int, rounds: int, p: float, count: int, seed: int):
    from surfdec.pipeline import generate_dataset

    DATA.mkdir(parents=True, exist_ok=True)
    path = DATA / name
    if not path.exists():
        log(f"sampling {name}: D={distance} p={p} n={count}")
        generate_dataset(path, distance, rounds, p, count, seed)
    return path
