"""Seven-variant ablation on the benchmark, printed as a table with 95% intervals.

    python3 scripts/ablation_table.py [--config configs/blobs_benchmark.cfg] [--out runs/ablation]
"""
import argparse
import sys

from idmne.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/blobs_benchmark.cfg")
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()
    sys.exit(main(["ablate", "--config", args.config, "--out", args.out]))
