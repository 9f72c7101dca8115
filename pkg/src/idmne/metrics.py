"""Evaluation metrics: accuracy, centroid-distance alignment (ACCD), calibration."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from idmne import autodiff as ad
from idmne.model import ModelParams, extract, predict_proba

log = logging.getLogger(__name__)

N_BINS = 100


def _probs(x, params: ModelParams) -> np.ndarray:
    with ad.no_grad():
        return predict_proba(x, params).data


def accuracy(x, y, params: ModelParams) -> float:
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("accuracy of an empty evaluation set")
    return float(np.mean(_probs(x, params).argmax(axis=1) == y))


def unit_features(x, params: ModelParams) -> np.ndarray:
    with ad.no_grad():
        return ad.l2_normalize(extract(x, params)).data


def _centroid(rows: np.ndarray) -> np.ndarray:
    # correctly rounded column sums, so the centroid depends only on the multiset of rows
    return np.array([math.fsum(col) for col in rows.T]) / rows.shape[0]


def class_centroid_distances(f_src, y_src, f_tgt, y_tgt) -> dict[int, float]:
    """Per-class Euclidean distance between source and target feature centroids."""
    y_src, y_tgt = np.asarray(y_src), np.asarray(y_tgt)
    out = {}
    for c in np.union1d(y_src, y_tgt):
        in_s, in_t = y_src == c, y_tgt == c
        if not in_s.any() or not in_t.any():
            log.warning("class %d missing from one domain; skipped in ACCD", c)
            continue
        out[int(c)] = float(np.linalg.norm(_centroid(f_src[in_s]) - _centroid(f_tgt[in_t])))
    return out


@dataclass
class AccdState:
    initial: dict[int, float]
    history: dict[int, float] = field(default_factory=dict)
    per_class: dict[int, dict[int, float]] = field(default_factory=dict)

    @classmethod
    def from_model(cls, x_src, y_src, x_tgt, y_tgt, params: ModelParams) -> "AccdState":
        d0 = class_centroid_distances(unit_features(x_src, params), y_src, unit_features(x_tgt, params), y_tgt)
        zero = [c for c, d in d0.items() if d <= 0.0]
        for c in zero:
            log.warning("class %d has zero initial centroid distance; excluded from ACCD", c)
            del d0[c]
        state = cls(initial=d0)
        state.history[0] = 1.0
        state.per_class[0] = {c: 1.0 for c in d0}
        return state


def accd_from_features(f_src, y_src, f_tgt, y_tgt, state: AccdState, epoch: int) -> float:
    dists = class_centroid_distances(f_src, y_src, f_tgt, y_tgt)
    ratios = {c: d / state.initial[c] for c, d in dists.items() if c in state.initial}
    if not ratios:
        raise ValueError("no class present in both domains")
    value = float(np.mean([ratios[c] for c in sorted(ratios)]))
    state.per_class[epoch] = ratios
    state.history[epoch] = value
    return value


def accd(x_src, y_src, x_tgt, y_tgt, params: ModelParams, state: AccdState, epoch: int) -> float:
    """Mean over classes of the centroid distance divided by its initial-model value."""
    return accd_from_features(
        unit_features(x_src, params), y_src, unit_features(x_tgt, params), y_tgt, state, epoch
    )


@dataclass
class CalibrationReport:
    edges: np.ndarray
    counts: np.ndarray
    mean_confidence: np.ndarray
    accuracy: np.ndarray
    ece: float

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())


def bin_index(confidences, n_bins: int = N_BINS) -> np.ndarray:
    """Left-closed, right-open bins over [0, 1]; the final bin is closed."""
    edges = np.arange(n_bins + 1) / n_bins
    idx = np.searchsorted(edges, np.asarray(confidences), side="right") - 1
    return np.clip(idx, 0, n_bins - 1)


def calibration_from_scores(confidences, correct, n_bins: int = N_BINS) -> CalibrationReport:
    conf = np.asarray(confidences, dtype=np.float64)
    hit = np.asarray(correct, dtype=np.float64)
    idx = bin_index(conf, n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=n_bins)
    hit_sum = np.bincount(idx, weights=hit, minlength=n_bins)
    nz = counts > 0
    mean_conf = np.where(nz, conf_sum / np.maximum(counts, 1), np.nan)
    acc = np.where(nz, hit_sum / np.maximum(counts, 1), np.nan)
    n = conf.size
    ece = float(np.sum(counts[nz] / n * np.abs(acc[nz] - mean_conf[nz]))) if n else 0.0
    return CalibrationReport(np.arange(n_bins + 1) / n_bins, counts, mean_conf, acc, ece)


def calibration(x, y, params: ModelParams, n_bins: int = N_BINS) -> CalibrationReport:
    p = _probs(x, params)
    return calibration_from_scores(p.max(axis=1), p.argmax(axis=1) == np.asarray(y), n_bins)


METRICS_COLUMNS = [
    "epoch", "iter", "lr", "l_sup", "l_sdm", "l_mdm", "l_psr", "l_nsr", "l_pa", "l_total",
    "acc_eval", "accd", "ece", "pl_count", "pl_correct", "pl_acc",
]
_INT_COLUMNS = {"epoch", "iter", "pl_count", "pl_correct"}


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".9g")


def write_metrics_csv(path, rows: list[dict], leading: tuple[str, ...] = ()) -> None:
    """One row per epoch, fixed column order, 9 significant digits.

    ``leading`` names extra per-row columns written first (the threshold sweep adds ``tau``).
    """
    columns = list(leading) + METRICS_COLUMNS
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row[c]) for c in columns])


def read_metrics_csv(path) -> list[dict]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                if v == "":
                    row[k] = None
                elif k in _INT_COLUMNS:
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            out.append(row)
    return out
