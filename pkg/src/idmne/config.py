"""Flat ``section.key = value`` experiment files.

Example::

    # blobs benchmark, 3-shot
    data.generator = blobs
    data.n_classes = 5
    train.epochs = 30
    train.tau = 0.95
    model.hidden = 64,64
    experiment.seeds = 0,1,2

Unknown keys are errors; every value is type-checked against its default.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from idmne.data import (
    DomainData,
    ShotSpec,
    domain_data_from_csv,
    gen_blobs_shift,
    gen_two_moons_shift,
    load_csv,
    split_few_shot,
    uniform_shift,
)
from idmne.errors import ConfigError
from idmne.trainer import TrainConfig

MODEL_KEYS = ("hidden", "d_feat", "activation", "temperature")


@dataclass
class DataConfig:
    generator: str = "blobs"
    seed: int = 0
    n_classes: int = 5
    d_in: int = 8
    shift: float = 2.0
    scale: float = 1.0
    spread: float = 1.0
    n_source: int = 2000
    n_target: int = 2000
    rotation_deg: float = 30.0
    noise_sigma: float = 0.1
    shots: int = 3
    eval_fraction: float = 0.5
    path: str = ""

    def build(self, seed: int | None = None) -> DomainData:
        seed = self.seed if seed is None else seed
        if self.generator == "csv":
            if not self.path:
                raise ConfigError("data.path is required when data.generator = csv")
            try:
                return domain_data_from_csv(load_csv(self.path))
            except OSError as exc:
                raise ConfigError(f"cannot read dataset {self.path}: {exc}") from exc
        if self.generator == "blobs":
            src, tgt = gen_blobs_shift(
                self.n_classes, self.d_in, uniform_shift(self.shift, self.d_in), self.scale, seed,
                (self.n_source, self.n_target), self.spread,
            )
        elif self.generator == "moons":
            src, tgt = gen_two_moons_shift(self.n_source, self.n_target, self.rotation_deg, self.noise_sigma, seed)
        else:
            raise ConfigError(f"unknown data.generator {self.generator!r}; use blobs, moons or csv")
        labeled, unlabeled, held_out = split_few_shot(tgt, ShotSpec(self.shots, seed, self.eval_fraction))
        return DomainData(src, labeled, unlabeled, held_out)


@dataclass
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    out_dir: str = "runs/default"
    trials: int = 1
    seeds: tuple[int, ...] = ()
    tau_list: tuple[float, ...] = (0.8, 0.9, 0.95)
    checkpoint_every: int = 0
    source_text: str = ""

    def trial_seeds(self) -> list[int]:
        if self.seeds:
            return list(self.seeds)
        return [self.train.seed + i for i in range(self.trials)]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Same experiment with data and training both seeded by ``seed``."""
        return dataclasses.replace(
            self, train=self.train.replace(seed=seed), data=dataclasses.replace(self.data, seed=seed)
        )


def _coerce(raw: str, default, key: str):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            kind = type(default[0]) if default else int
            return tuple(kind(s) for s in items)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None


_EXPERIMENT_TYPES = {"out_dir": "", "trials": 0, "seeds": (0,), "tau_list": (0.0,), "checkpoint_every": 0}


def parse_config_text(text: str, origin: str = "<config>") -> ExperimentConfig:
    train_defaults = TrainConfig().to_dict()
    train_defaults["hidden"] = (0,)
    data_defaults = dataclasses.asdict(DataConfig())
    train_kw, data_kw, exp_kw = {}, {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or "." not in key:
            raise ConfigError(f"{origin}:{lineno}: expected 'section.key = value', got {line!r}")
        section, name = key.split(".", 1)
        if section == "train" and name in train_defaults and name not in MODEL_KEYS[:3]:
            train_kw[name] = _coerce(value, train_defaults[name], key)
        elif section == "model" and name in MODEL_KEYS:
            train_kw[name] = _coerce(value, train_defaults[name], key)
        elif section == "data" and name in data_defaults:
            data_kw[name] = _coerce(value, data_defaults[name], key)
        elif section == "experiment" and name in _EXPERIMENT_TYPES:
            exp_kw[name] = _coerce(value, _EXPERIMENT_TYPES[name], key)
        else:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
    try:
        train = TrainConfig(**train_kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    data = DataConfig(**data_kw)
    if data.generator not in ("blobs", "moons", "csv"):
        raise ConfigError(f"unknown data.generator {data.generator!r}; use blobs, moons or csv")
    if data.generator == "csv" and not data.path:
        raise ConfigError("data.path is required when data.generator = csv")
    cfg = ExperimentConfig(train=train, data=data, source_text=text, **exp_kw)
    if cfg.trials < 1:
        raise ConfigError("experiment.trials must be at least 1")
    if any(not 0 < t <= 1 for t in cfg.tau_list):
        raise ConfigError("experiment.tau_list values must lie in (0, 1]")
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from None
    return parse_config_text(text, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Render a fully-resolved config in the same flat format."""

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (tuple, list)):
            return ",".join(str(x) for x in v)
        return str(v)

    lines = []
    for k, v in cfg.train.to_dict().items():
        section = "model" if k in MODEL_KEYS else "train"
        lines.append(f"{section}.{k} = {fmt(v)}")
    lines += [f"data.{k} = {fmt(v)}" for k, v in dataclasses.asdict(cfg.data).items()]
    for k in _EXPERIMENT_TYPES:
        lines.append(f"experiment.{k} = {fmt(getattr(cfg, k))}")
    return "\n".join(lines) + "\n"
