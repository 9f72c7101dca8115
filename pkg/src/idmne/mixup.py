"""Inter-domain mixup: convex mixing of labeled source/target pairs.

Sample-level mixing acts on raw inputs, manifold-level mixing on
extractor features. Both mix one-hot labels with the same ratio.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from idmne import autodiff as ad
from idmne.autodiff import Tensor
from idmne.errors import ConfigError, DimensionError


@dataclass
class MixedSample:
    x_m: np.ndarray
    y_m: np.ndarray
    lam: float | np.ndarray


@dataclass
class MixedFeature:
    f_m: Tensor
    y_m: np.ndarray
    lam: float | np.ndarray


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def sample_lambda(alpha: float, rng: np.random.Generator, size: int | None = None):
    """Symmetric Beta(alpha, alpha) ratio, drawn as G1 / (G1 + G2)."""
    if not alpha > 0:
        raise ConfigError(f"mixup alpha must be positive, got {alpha}")
    g1 = rng.standard_gamma(alpha, size)
    g2 = rng.standard_gamma(alpha, size)
    return g1 / (g1 + g2)


def _column(lam, n_rows: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim == 0:
        return np.full((n_rows, 1), float(lam))
    if lam.shape != (n_rows,):
        raise DimensionError(f"need one ratio per pair ({n_rows}), got shape {lam.shape}")
    return lam.reshape(-1, 1)


def _mix_labels(ys_onehot, yt_onehot, lam_col) -> np.ndarray:
    ys = np.atleast_2d(np.asarray(ys_onehot, dtype=np.float64))
    yt = np.atleast_2d(np.asarray(yt_onehot, dtype=np.float64))
    if ys.shape != yt.shape:
        raise DimensionError(f"label shapes differ: {ys.shape} vs {yt.shape}")
    return lam_col * ys + (1.0 - lam_col) * yt


def mix_samples(xs, ys_onehot, xt, yt_onehot, lam) -> MixedSample:
    """Rows of ``xs``/``xt`` are paired one-to-one; ``lam`` is a scalar or one ratio per row."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    xt = np.atleast_2d(np.asarray(xt, dtype=np.float64))
    if xs.shape != xt.shape:
        raise DimensionError(f"input shapes differ: {xs.shape} vs {xt.shape}")
    lam_col = _column(lam, xs.shape[0])
    x_m = lam_col * xs + (1.0 - lam_col) * xt
    return MixedSample(x_m, _mix_labels(ys_onehot, yt_onehot, lam_col), lam)


def mix_features(fs: Tensor, ys_onehot, ft: Tensor, yt_onehot, lam) -> MixedFeature:
    fs, ft = ad.as_tensor(fs), ad.as_tensor(ft)
    if fs.shape != ft.shape:
        raise DimensionError(f"feature shapes differ: {fs.shape} vs {ft.shape}")
    n = fs.shape[0] if len(fs.shape) == 2 else 1
    lam_col = _column(lam, n)
    if len(fs.shape) == 1:
        lam_col = lam_col.reshape(-1)
    f_m = ad.add(ad.mul(fs, lam_col), ad.mul(ft, 1.0 - lam_col))
    return MixedFeature(f_m, _mix_labels(ys_onehot, yt_onehot, lam_col.reshape(-1, 1)), lam)


def pair_indices(n_source: int, n_target: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random one-to-one pairing; surplus rows of the larger batch stay unpaired."""
    n_pair = min(n_source, n_target)
    return rng.permutation(n_source)[:n_pair], rng.permutation(n_target)[:n_pair]
