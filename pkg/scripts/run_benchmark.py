"""Full method vs the S+T baseline on the blobs-shift benchmark, one line per seed.

    python3 scripts/run_benchmark.py [--config configs/blobs_benchmark.cfg] [--seeds 10]
"""
import argparse
import time

import numpy as np

from idmne.cli import supervised_only
from idmne.config import load_config
from idmne.trainer import run


def compare(cfg, seed):
    trial = cfg.with_seed(seed)
    data = trial.data.build()
    _, full, _ = run(trial.train, data)
    _, base, _ = run(supervised_only(trial.train), data)
    return full[-1].acc_eval, base[-1].acc_eval


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/blobs_benchmark.cfg")
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    cfg = load_config(args.config)
    gaps = []
    for s in range(args.seeds):
        t0 = time.perf_counter()
        full, base = compare(cfg, s)
        gaps.append(full - base)
        print(f"seed {s}: full {full:.4f}  S+T {base:.4f}  gap {100 * (full - base):+.2f} pp  ({time.perf_counter() - t0:.1f}s)")
    gaps = np.array(gaps)
    print(f"mean gap {100 * gaps.mean():+.2f} pp, positive in {(gaps > 0).sum()}/{gaps.size} seeds")


if __name__ == "__main__":
    main()
