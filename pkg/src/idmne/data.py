"""Synthetic domain-shift benchmarks, few-shot target splits, CSV I/O and batch sampling."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from idmne.errors import ConfigError


class CsvFormatError(ValueError):
    pass


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    ids: np.ndarray
    domain: np.ndarray
    split: np.ndarray
    n_classes: int
    # ground truth kept for auditing once labels are hidden from training
    y_true: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).reshape(len(self.y), -1)
        self.y = np.asarray(self.y, dtype=np.intp)
        n = self.y.size
        for name in ("ids", "domain", "split"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries, expected {n}")
        labeled = self.y[self.y >= 0]
        if labeled.size and labeled.max() >= self.n_classes:
            raise ValueError(f"label {labeled.max()} out of range for {self.n_classes} classes")
        if np.any(self.y < -1):
            raise ValueError("labels must be class indices or -1 for unlabeled")

    def __len__(self) -> int:
        return int(self.y.size)

    @property
    def d_in(self) -> int:
        return int(self.x.shape[1])

    @property
    def labels(self) -> np.ndarray:
        """Ground-truth labels when available (audit use only)."""
        return self.y if self.y_true is None else self.y_true

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.intp)
        return Dataset(
            self.x[index],
            self.y[index],
            self.ids[index],
            self.domain[index],
            self.split[index],
            self.n_classes,
            None if self.y_true is None else self.y_true[index],
        )

    def hide_labels(self) -> "Dataset":
        out = self.subset(np.arange(len(self)))
        out.y_true = self.labels.copy()
        out.y = np.full(len(self), -1, dtype=np.intp)
        return out

    def with_split(self, split: str) -> "Dataset":
        out = self.subset(np.arange(len(self)))
        out.split = np.full(len(self), split, dtype=object)
        return out


def _make(x, y, start_id: int, domain: str, n_classes: int) -> Dataset:
    n = len(y)
    return Dataset(
        x, y, np.arange(start_id, start_id + n), np.full(n, domain, dtype=object),
        np.full(n, "train", dtype=object), n_classes,
    )


def _balanced_labels(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n) % k)


def _moons(n: int, noise: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    y = _balanced_labels(n, 2, rng)
    t = rng.uniform(0.0, np.pi, n)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    # centred on the origin so the shift is a pure rotation about it
    x = np.where(y[:, None] == 0, upper, lower) - np.array([0.5, 0.25])
    return x + noise * rng.standard_normal((n, 2)), y


def gen_two_moons_shift(
    n_source: int, n_target: int, rotation_deg: float, noise_sigma: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Two-moons source; target drawn the same way then rotated about the origin."""
    if n_source < 2 or n_target < 2:
        raise ConfigError("two-moons needs at least 2 samples per domain")
    if not 0.0 <= rotation_deg <= 90.0:
        raise ConfigError(f"rotation must lie in [0, 90] degrees, got {rotation_deg}")
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be non-negative, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    xs, ys = _moons(n_source, noise_sigma, rng)
    xt, yt = _moons(n_target, noise_sigma, rng)
    a = np.deg2rad(rotation_deg)
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return _make(xs, ys, 0, "source", 2), _make(xt @ rot.T, yt, n_source, "target", 2)


def gen_blobs_shift(
    n_classes: int,
    d_in: int,
    shift_vector,
    scale: float,
    seed: int,
    sizes: tuple[int, int] = (2000, 2000),
    spread: float = 1.0,
) -> tuple[Dataset, Dataset]:
    """Unit-covariance Gaussian class blobs; target means moved by ``shift_vector``
    and target covariance multiplied by ``scale``. Class means are drawn
    N(0, spread^2 I)."""
    if n_classes < 2:
        raise ConfigError(f"blobs need at least 2 classes, got {n_classes}")
    shift = np.asarray(shift_vector, dtype=np.float64).reshape(-1)
    if shift.size != d_in:
        raise ConfigError(f"shift vector has {shift.size} entries, expected d_in={d_in}")
    if scale <= 0:
        raise ConfigError(f"covariance scale must be positive, got {scale}")
    rng = np.random.default_rng(seed)
    means = spread * rng.standard_normal((n_classes, d_in))
    n_s, n_t = sizes
    ys = _balanced_labels(n_s, n_classes, rng)
    xs = means[ys] + rng.standard_normal((n_s, d_in))
    yt = _balanced_labels(n_t, n_classes, rng)
    xt = means[yt] + shift + np.sqrt(scale) * rng.standard_normal((n_t, d_in))
    return _make(xs, ys, 0, "source", n_classes), _make(xt, yt, n_s, "target", n_classes)


def uniform_shift(magnitude: float, d_in: int) -> np.ndarray:
    """A shift of the given Euclidean length along the all-ones diagonal."""
    return np.full(d_in, magnitude / np.sqrt(d_in))


@dataclass(frozen=True)
class ShotSpec:
    shots_per_class: int = 3
    seed: int = 0
    eval_fraction: float = 0.5

    def __post_init__(self):
        if self.shots_per_class < 1:
            raise ConfigError("shots_per_class must be positive")
        if not 0.0 <= self.eval_fraction < 1.0:
            raise ConfigError("eval_fraction must lie in [0, 1)")


def split_few_shot(target: Dataset, spec: ShotSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified split into (labeled few-shot, unlabeled, held-out eval)."""
    rng = np.random.default_rng(spec.seed)
    labels = target.labels
    lab, unl, ev = [], [], []
    for c in range(target.n_classes):
        members = np.flatnonzero(labels == c)
        if members.size < spec.shots_per_class + 1:
            raise ConfigError(
                f"class {c} has {members.size} target samples; need at least {spec.shots_per_class + 1}"
            )
        members = rng.permutation(members)
        lab.append(members[: spec.shots_per_class])
        rest = members[spec.shots_per_class:]
        n_eval = int(round(spec.eval_fraction * rest.size))
        if spec.eval_fraction > 0 and rest.size > 1:
            n_eval = min(max(n_eval, 1), rest.size - 1)
        ev.append(rest[:n_eval])
        unl.append(rest[n_eval:])
    labeled = target.subset(np.sort(np.concatenate(lab)))
    unlabeled = target.subset(np.sort(np.concatenate(unl))).hide_labels()
    held_out = target.subset(np.sort(np.concatenate(ev))).with_split("eval")
    return labeled, unlabeled, held_out


def feature_std(*arrays: np.ndarray) -> np.ndarray:
    return np.vstack(arrays).std(axis=0)


def perturb(x, strength: float, feat_std, rng: np.random.Generator) -> np.ndarray:
    """Additive Gaussian jitter with per-feature std ``strength * feat_std``."""
    if strength < 0:
        raise ConfigError(f"perturbation strength must be non-negative, got {strength}")
    x = np.asarray(x, dtype=np.float64)
    return x + rng.standard_normal(x.shape) * (strength * np.asarray(feat_std))


@dataclass(frozen=True)
class BatchPlan:
    source: int = 24
    labeled: int = 24
    expanded: int = 24
    unlabeled: int = 48

    def __post_init__(self):
        if min(self.source, self.labeled, self.expanded, self.unlabeled) < 1:
            raise ConfigError("all batch sizes must be at least 1")


def sample_indices(pool_size: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Without replacement when the pool is large enough, with replacement otherwise."""
    if pool_size < 1:
        raise ValueError("cannot sample a batch from an empty pool")
    if pool_size < size:
        return rng.integers(0, pool_size, size)
    return rng.choice(pool_size, size, replace=False)


def sample_batches(pool_sizes: tuple[int, int, int, int], plan: BatchPlan, rngs) -> tuple[np.ndarray, ...]:
    """Index batches into (D_s, D_l, D_l', D_u); one rng per pool keeps pools independent."""
    sizes = (plan.source, plan.labeled, plan.expanded, plan.unlabeled)
    return tuple(sample_indices(n, b, r) for n, b, r in zip(pool_sizes, sizes, rngs))


@dataclass
class DomainData:
    """The four pools of a semi-supervised adaptation task."""

    source: Dataset
    labeled: Dataset
    unlabeled: Dataset
    eval: Dataset

    @property
    def n_classes(self) -> int:
        return self.source.n_classes

    @property
    def d_in(self) -> int:
        return self.source.d_in

    def train_feature_std(self) -> np.ndarray:
        return feature_std(self.source.x, self.labeled.x, self.unlabeled.x)

    def target_with_truth(self) -> tuple[np.ndarray, np.ndarray]:
        """All target samples whose ground truth is known (for diagnostics only)."""
        parts = [self.labeled, self.eval]
        if self.unlabeled.y_true is not None:
            parts.append(self.unlabeled)
        return np.vstack([p.x for p in parts]), np.concatenate([p.labels for p in parts])


def csv_header(d_in: int) -> list[str]:
    return ["id", "domain", "split", "label"] + [f"f{i}" for i in range(d_in)]


def save_csv(path, datasets) -> None:
    datasets = [d for d in datasets if len(d)]
    d_in = datasets[0].d_in
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(d_in))
        for ds in datasets:
            for i in range(len(ds)):
                label = "" if ds.y[i] < 0 else int(ds.y[i])
                w.writerow([int(ds.ids[i]), ds.domain[i], ds.split[i], label] + [repr(float(v)) for v in ds.x[i]])


def load_csv(path, n_classes: int | None = None) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    header = rows[0]
    d_in = len(header) - 4
    if d_in < 1 or header != csv_header(d_in):
        raise CsvFormatError(f"{path}: header must be id,domain,split,label,f0,...,f<d-1>; got {','.join(header)}")
    ids, dom, spl, ys, xs, line_of = [], [], [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            ids.append(int(row[0]))
            ys.append(int(row[3]) if row[3] != "" else -1)
            xs.append([float(v) for v in row[4:]])
        except ValueError as exc:
            raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
        if row[1] not in ("source", "target"):
            raise CsvFormatError(f"{path}:{lineno}: domain must be source or target, got {row[1]!r}")
        if row[2] not in ("train", "eval"):
            raise CsvFormatError(f"{path}:{lineno}: split must be train or eval, got {row[2]!r}")
        if not np.all(np.isfinite(xs[-1])):
            raise CsvFormatError(f"{path}:{lineno}: non-finite feature value")
        dom.append(row[1])
        spl.append(row[2])
        line_of.append(lineno)
    y = np.array(ys, dtype=np.intp)
    if n_classes is None:
        n_classes = int(y.max()) + 1 if (y >= 0).any() else 2
    bad = np.flatnonzero(y >= n_classes)
    if bad.size:
        raise CsvFormatError(f"{path}:{line_of[bad[0]]}: label {y[bad[0]]} outside [0, {n_classes})")
    x = np.array(xs, dtype=np.float64).reshape(len(ys), d_in)
    return Dataset(x, y, np.array(ids), np.array(dom, dtype=object), np.array(spl, dtype=object), n_classes)


def domain_data_from_csv(ds: Dataset) -> DomainData:
    """Source rows train the model; labeled target-train rows form the few-shot pool,
    unlabeled target-train rows the unlabeled pool, target-eval rows the eval set."""
    src = ds.subset(np.flatnonzero((ds.domain == "source") & (ds.split == "train")))
    tgt_train = (ds.domain == "target") & (ds.split == "train")
    labeled = ds.subset(np.flatnonzero(tgt_train & (ds.y >= 0)))
    unlabeled = ds.subset(np.flatnonzero(tgt_train & (ds.y < 0)))
    ev = ds.subset(np.flatnonzero((ds.domain == "target") & (ds.split == "eval")))
    if np.any(src.y < 0):
        raise ConfigError("source rows must be labeled")
    for name, part in (("source", src), ("labeled target", labeled), ("unlabeled target", unlabeled)):
        if len(part) == 0:
            raise ConfigError(f"dataset has no {name} training rows")
    if len(ev) == 0 or np.any(ev.y < 0):
        raise ConfigError("target eval rows must exist and be labeled")
    return DomainData(src, labeled, unlabeled, ev)
