"""Epoch-start pseudo-labeling of confident unlabeled target samples."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from idmne import autodiff as ad
from idmne.model import ModelParams, predict_proba


@dataclass
class PseudoLabelSet:
    """Confident samples of one epoch. ``index`` points into the unlabeled pool."""

    index: np.ndarray
    labels: np.ndarray
    confidence: np.ndarray
    epoch: int = 0
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.index.size)


def select_confident(probs: np.ndarray, tau: float, epoch: int = 0) -> PseudoLabelSet:
    """Rows whose top probability is at least ``tau`` (boundary included)."""
    if not 0 < tau <= 1:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    probs = np.asarray(probs)
    conf = probs.max(axis=1)
    idx = np.flatnonzero(conf >= tau)
    return PseudoLabelSet(idx, probs[idx].argmax(axis=1), conf[idx], epoch)


def assign_pseudo_labels(x_u, params: ModelParams, tau: float, epoch: int = 0) -> PseudoLabelSet:
    with ad.no_grad():
        probs = predict_proba(x_u, params).data
    return select_confident(probs, tau, epoch)


def pseudo_label_accuracy(plset: PseudoLabelSet, ground_truth) -> tuple[int, int, float | None]:
    """(count, correct, accuracy); accuracy is None for an empty set."""
    count = len(plset)
    if count == 0:
        return 0, 0, None
    truth = np.asarray(ground_truth)[plset.index]
    correct = int(np.sum(truth == plset.labels))
    return count, correct, correct / count


def expand_labeled(x_l, y_l, x_u, plset: PseudoLabelSet) -> tuple[np.ndarray, np.ndarray]:
    """The labeled target pool plus this epoch's pseudo-labeled samples."""
    x = np.vstack([x_l, np.asarray(x_u)[plset.index]])
    y = np.concatenate([np.asarray(y_l, dtype=np.intp), plset.labels.astype(np.intp)])
    return x, y


AUDIT_COLUMNS = ["epoch", "sample_id", "class", "confidence", "correct"]


def write_audit_rows(writer: csv.writer, plset: PseudoLabelSet, sample_ids, ground_truth=None) -> None:
    ids = np.asarray(sample_ids)
    truth = None if ground_truth is None else np.asarray(ground_truth)
    for i, c, p in zip(plset.index, plset.labels, plset.confidence):
        ok = "" if truth is None or truth[i] < 0 else int(truth[i] == c)
        writer.writerow([plset.epoch, int(ids[i]), int(c), f"{p:.9g}", ok])
