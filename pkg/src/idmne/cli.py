"""``idmne train|ablate|sweep-tau|eval``.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from idmne.config import ExperimentConfig, dump_config, load_config
from idmne.data import CsvFormatError, DomainData, load_csv
from idmne.errors import CheckpointError, ConfigError, NumericError
from idmne.metrics import accuracy, calibration, format_value, write_metrics_csv
from idmne.model import load_checkpoint
from idmne.pseudo import AUDIT_COLUMNS, write_audit_rows
from idmne.trainer import TrainConfig, run, save_state

log = logging.getLogger("idmne")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

NO_AUX = dict(enable_sdm=False, enable_mdm=False, enable_psr=False, enable_nsr=False, enable_pa=False)

# name -> switch overrides on top of the experiment's TrainConfig
ABLATION_VARIANTS: dict[str, dict] = {
    "Baseline1": {**NO_AUX, "enable_pseudo": False},
    "Baseline1+SDM": {**NO_AUX, "enable_sdm": True},
    "Baseline1+MDM": {**NO_AUX, "enable_mdm": True},
    "Baseline1+SDM+MDM": {**NO_AUX, "enable_sdm": True, "enable_mdm": True},
    "Baseline2+PSR": {**NO_AUX, "enable_sdm": True, "enable_mdm": True, "enable_psr": True},
    "Baseline2+NSR": {**NO_AUX, "enable_sdm": True, "enable_mdm": True, "enable_nsr": True},
    "Baseline2+PA": {**NO_AUX, "enable_sdm": True, "enable_mdm": True, "enable_pa": True},
}

SUMMARY_COLUMNS = ["variant", "n_trials", "acc_mean", "acc_ci95", "accd_mean", "ece_mean"]


def supervised_only(config: TrainConfig) -> TrainConfig:
    """Source plus labeled-target cross-entropy only (the S+T baseline)."""
    return config.replace(**ABLATION_VARIANTS["Baseline1"])


def train_to_dir(cfg: ExperimentConfig, data: DomainData, out: Path) -> list[dict]:
    """Train once; write metrics.csv, pseudo_labels.csv and checkpoint.idmne into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.idmne"
    with open(out / "pseudo_labels.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AUDIT_COLUMNS)
        truth = data.unlabeled.y_true

        def audit(plset):
            write_audit_rows(writer, plset, data.unlabeled.ids, truth)

        _, history, state = run(cfg.train, data, ckpt, cfg.checkpoint_every, audit=audit)
    rows = [m.row() for m in history]
    write_metrics_csv(out / "metrics.csv", rows)
    save_state(ckpt, state, cfg.train)
    (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
    return rows


def ci95_halfwidth(values) -> float:
    """Half-width of the two-sided 95% Student-t interval of the mean."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return math.nan
    return float(stats.t.ppf(0.975, v.size - 1) * v.std(ddof=1) / np.sqrt(v.size))


def summarize(per_variant: dict[str, list[dict]]) -> list[dict]:
    out = []
    for name, finals in per_variant.items():
        accs = [r["acc_eval"] for r in finals]
        out.append({
            "variant": name,
            "n_trials": len(finals),
            "acc_mean": float(np.mean(accs)),
            "acc_ci95": ci95_halfwidth(accs),
            "accd_mean": float(np.mean([r["accd"] for r in finals])),
            "ece_mean": float(np.mean([r["ece"] for r in finals])),
        })
    return out


def _prepare(args) -> tuple[ExperimentConfig, Path]:
    if not args.config:
        raise ConfigError("--config PATH is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg.with_seed(args.seed), seeds=(args.seed,))
    out = Path(args.out or cfg.out_dir)
    return cfg, out


def cmd_train(args) -> int:
    cfg, out = _prepare(args)
    data = cfg.data.build()
    rows = train_to_dir(cfg, data, out)
    if rows:
        last = rows[-1]
        print(f"epoch={last['epoch']} acc_eval={format_value(last['acc_eval'])} accd={format_value(last['accd'])}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg, out = _prepare(args)
    seeds = cfg.trial_seeds()
    datasets = {s: cfg.with_seed(s).data.build() for s in seeds}
    per_variant: dict[str, list[dict]] = {}
    for name, switches in ABLATION_VARIANTS.items():
        per_variant[name] = []
        for s in seeds:
            trial = cfg.with_seed(s)
            trial = dataclasses.replace(trial, train=trial.train.replace(**switches))
            rows = train_to_dir(trial, datasets[s], out / "ablation" / name / f"seed{s}")
            per_variant[name].append(rows[-1] if rows else _untrained_row(trial, datasets[s]))
    summary = summarize(per_variant)
    _write_rows(out / "ablation_summary.csv", SUMMARY_COLUMNS, summary)
    for row in summary:
        ci = "" if math.isnan(row["acc_ci95"]) else f" ± {100 * row['acc_ci95']:.2f}"
        print(f"{row['variant']:<20} {100 * row['acc_mean']:6.2f}{ci}")
    return EXIT_OK


def _untrained_row(cfg: ExperimentConfig, data: DomainData) -> dict:
    from idmne.trainer import init_state

    state = init_state(cfg.train, data)
    return {"acc_eval": accuracy(data.eval.x, data.eval.y, state.params), "accd": 1.0,
            "ece": calibration(data.eval.x, data.eval.y, state.params).ece}


def cmd_sweep_tau(args) -> int:
    cfg, out = _prepare(args)
    taus = cfg.tau_list
    if args.tau_list:
        try:
            taus = tuple(float(v) for v in args.tau_list.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"--tau-list: cannot parse {args.tau_list!r}") from None
    if not taus or any(not 0 < t <= 1 for t in taus):
        raise ConfigError("tau values must lie in (0, 1]")
    data = cfg.data.build()
    combined = []
    for tau in taus:
        trial = dataclasses.replace(cfg, train=cfg.train.replace(tau=tau))
        rows = train_to_dir(trial, data, out / "sweep" / f"tau_{tau:g}")
        combined += [{"tau": tau, **r} for r in rows]
    write_metrics_csv(out / "tau_sweep.csv", combined, leading=("tau",))
    print(f"wrote {out / 'tau_sweep.csv'} ({len(combined)} rows)")
    return EXIT_OK


def cmd_eval(args) -> int:
    if not args.checkpoint:
        raise ConfigError("--checkpoint PATH is required")
    if args.data:
        ds = load_csv(args.data)
        ev = ds.subset(np.flatnonzero((ds.domain == "target") & (ds.split == "eval") & (ds.y >= 0)))
        if len(ev) == 0:
            raise ConfigError(f"{args.data} has no labeled target eval rows")
        x, y = ev.x, ev.y
    elif args.config:
        cfg, _ = _prepare(args)
        data = cfg.data.build()
        x, y = data.eval.x, data.eval.y
    else:
        raise ConfigError("eval needs --data CSV or --config PATH")
    params, _ = load_checkpoint(args.checkpoint)
    if x.shape[1] != params.d_in:
        raise ConfigError(f"dataset width {x.shape[1]} does not match checkpoint input width {params.d_in}")
    report = calibration(x, y, params)
    print("n,acc_eval,ece")
    print(f"{len(y)},{format_value(accuracy(x, y, params))},{format_value(report.ece)}")
    return EXIT_OK


def _write_rows(path: Path, columns: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], str) else format_value(r[c]) for c in columns])


COMMANDS = {"train": cmd_train, "ablate": cmd_ablate, "sweep-tau": cmd_sweep_tau, "eval": cmd_eval}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idmne", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", help="experiment config file (section.key = value lines)")
    p.add_argument("--out", help="output directory (overrides experiment.out_dir)")
    p.add_argument("--seed", type=int, help="seed for both data generation and training")
    p.add_argument("--tau-list", help="comma-separated thresholds for sweep-tau")
    p.add_argument("--checkpoint", help="checkpoint file for eval")
    p.add_argument("--data", help="dataset CSV for eval (target rows with split=eval)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CheckpointError, CsvFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
