"""Shared argument handling and table printing for the study scripts."""

import argparse
import csv
import time
from pathlib import Path

from robust_policy import experiments as ex


def parse(description: str, default_out: str) -> argparse.Namespace:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seeds", type=int, default=10, help="number of seeds (0..seeds-1)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=default_out)
    return p.parse_args()


def run(grid: ex.ExperimentGrid, workers) -> None:
    start = time.perf_counter()
    rows = ex.sweep(grid, workers)
    took = time.perf_counter() - start
    with (Path(grid.output) / "summary.csv").open() as fh:
        summary = list(csv.DictReader(fh))
    print(f"{'gamma*':>7} {'gamma':>7} {'n':>6} {'estimator':>10}  mean regret ± sd  (failed)")
    for s in summary:
        print(f"{float(s['gamma_star']):7g} {float(s['gamma']):7g} {int(s['n']):6d} {s['estimator']:>10}  "
              f"{float(s['mean_true_regret']):+.3f} ± {float(s['sd_true_regret']):.3f}  ({s['failed']})")
    failed = sum(1 for r in rows if r.error)
    print(f"{len(rows)} runs, {failed} failed, {took / 60:.1f} min; files in {grid.output}")
