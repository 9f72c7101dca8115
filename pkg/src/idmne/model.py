"""MLP feature extractor followed by a cosine prototype classifier.

The classifier has no bias: logits are ``W^T f / (T * ||f||)``. Features
are kept un-normalized; normalization happens inside :func:`classify` so
manifold mixup can operate on raw extractor outputs.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from idmne import autodiff as ad
from idmne.autodiff import Tensor
from idmne.errors import CheckpointError, ConfigError, DimensionError

CHECKPOINT_MAGIC = "IDMNE1"

ACTIVATIONS = {"relu": ad.relu, "linear": lambda t: t}


@dataclass(frozen=True)
class ModelSpec:
    d_in: int
    n_classes: int
    hidden: tuple[int, ...] = (64, 64)
    d_feat: int = 64
    temperature: float = 0.05
    activation: str = "relu"

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}; choose from {sorted(ACTIVATIONS)}")
        if self.d_in < 1 or self.d_feat < 1 or any(h < 1 for h in self.hidden):
            raise ConfigError("layer widths must be positive")

    @property
    def widths(self) -> list[int]:
        return [self.d_in, *self.hidden, self.d_feat]


@dataclass
class ModelParams:
    layers: list[tuple[Tensor, Tensor]]
    prototypes: Tensor
    temperature: float = 0.05
    activation: str = "relu"

    def __post_init__(self):
        if self.prototypes.shape[1] < 2:
            raise ConfigError("prototype matrix needs at least 2 columns")
        if self.layers and self.layers[-1][0].shape[1] != self.prototypes.shape[0]:
            raise DimensionError(
                f"extractor output width {self.layers[-1][0].shape[1]} does not match "
                f"prototype rows {self.prototypes.shape[0]}"
            )
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")

    @property
    def d_in(self) -> int:
        return self.layers[0][0].shape[0] if self.layers else self.prototypes.shape[0]

    @property
    def n_classes(self) -> int:
        return self.prototypes.shape[1]

    def tensors(self) -> list[Tensor]:
        """Trainable tensors in a fixed order (weights, biases, prototypes)."""
        out = []
        for w, b in self.layers:
            out += [w, b]
        out.append(self.prototypes)
        return out

    def copy(self) -> "ModelParams":
        layers = [(Tensor(w.data.copy(), True), Tensor(b.data.copy(), True)) for w, b in self.layers]
        return ModelParams(layers, Tensor(self.prototypes.data.copy(), True), self.temperature, self.activation)


@dataclass
class Prediction:
    probs: np.ndarray
    confidence: float = field(init=False)
    argmax_class: int = field(init=False)

    def __post_init__(self):
        # np.argmax returns the lowest index among ties
        self.argmax_class = int(np.argmax(self.probs))
        self.confidence = float(self.probs[self.argmax_class])


def init_params(spec: ModelSpec, seed: int) -> ModelParams:
    """He-uniform extractor weights, zero biases, unit-norm Gaussian prototypes."""
    rng = np.random.default_rng(seed)
    widths = spec.widths
    layers = []
    for d_in, d_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / d_in)
        w = rng.uniform(-bound, bound, size=(d_in, d_out))
        layers.append((Tensor(w, True, f"w{len(layers)}"), Tensor(np.zeros(d_out), True, f"b{len(layers)}")))
    protos = rng.standard_normal((spec.d_feat, spec.n_classes))
    protos /= np.linalg.norm(protos, axis=0, keepdims=True)
    return ModelParams(layers, Tensor(protos, True, "prototypes"), spec.temperature, spec.activation)


def _as_batch(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=np.float64)
    return Tensor(arr.reshape(1, -1) if arr.ndim == 1 else arr)


def extract(x, params: ModelParams) -> Tensor:
    """Raw (pre-normalization) features for a batch of rows."""
    h = _as_batch(x)
    if h.shape[-1] != params.d_in:
        raise DimensionError(f"input width {h.shape[-1]} does not match extractor input width {params.d_in}")
    act = ACTIVATIONS[params.activation]
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        h = ad.add(ad.matmul(h, w), b)
        if i < last:
            h = act(h)
    return h


def logits(features: Tensor, params: ModelParams) -> Tensor:
    unit = ad.l2_normalize(features)
    return ad.scale(ad.matmul(unit, params.prototypes), 1.0 / params.temperature)


def classify(features: Tensor, params: ModelParams) -> Tensor:
    return ad.softmax(logits(features, params))


def predict_proba(x, params: ModelParams) -> Tensor:
    return classify(extract(x, params), params)


def predict(x, params: ModelParams) -> Prediction:
    probs = predict_proba(x, params).data
    if probs.shape[0] != 1:
        raise DimensionError("predict() takes a single sample; use predict_proba for batches")
    return Prediction(probs[0].copy())


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def save_checkpoint(path, params: ModelParams, seed: int, cfg_hash: str = "", extra: dict | None = None) -> None:
    """Write params as ``IDMNE1`` followed by one JSON line (row-major values)."""
    body = {
        "seed": seed,
        "config_hash": cfg_hash,
        "temperature": params.temperature,
        "activation": params.activation,
        "tensors": [{"shape": list(t.shape), "values": t.data.reshape(-1).tolist()} for t in params.tensors()],
    }
    if extra:
        body["extra"] = extra
    Path(path).write_text(CHECKPOINT_MAGIC + "\n" + json.dumps(body) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    header, _, rest = text.partition("\n")
    if header != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: expected header {CHECKPOINT_MAGIC!r}, found {header[:16]!r}")
    try:
        body = json.loads(rest)
        tensors = []
        for entry in body["tensors"]:
            arr = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
            tensors.append(Tensor(arr, True))
        if len(tensors) % 2 != 1:
            raise ValueError("tensor count must be odd (weight/bias pairs + prototypes)")
        layers = [(tensors[i], tensors[i + 1]) for i in range(0, len(tensors) - 1, 2)]
        params = ModelParams(layers, tensors[-1], float(body["temperature"]), body["activation"])
    except (ValueError, KeyError, TypeError, DimensionError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc
    meta = {k: body.get(k) for k in ("seed", "config_hash", "extra")}
    return params, meta
