"""Final accuracy and pseudo-label precision for a range of confidence thresholds.

    python3 scripts/tau_sweep.py [--config configs/blobs_benchmark.cfg] [--taus 0.5,0.7,0.9,0.95,0.99]
"""
import argparse
import sys
from pathlib import Path

from idmne.cli import main
from idmne.metrics import read_metrics_csv

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/blobs_benchmark.cfg")
    ap.add_argument("--out", default="runs/tau_sweep")
    ap.add_argument("--taus", default="0.5,0.7,0.9,0.95,0.99")
    args = ap.parse_args()
    code = main(["sweep-tau", "--config", args.config, "--out", args.out, "--tau-list", args.taus])
    if code:
        sys.exit(code)
    rows = read_metrics_csv(Path(args.out) / "tau_sweep.csv")
    last = {}
    for r in rows:
        last[r["tau"]] = r
    print(f"{'tau':>6} {'acc_eval':>9} {'pl_count':>9} {'pl_acc':>7}")
    for tau, r in sorted(last.items()):
        pl_acc = "" if r["pl_acc"] is None else f"{r['pl_acc']:.3f}"
        print(f"{tau:6.2f} {r['acc_eval']:9.4f} {r['pl_count']:9d} {pl_acc:>7}")
