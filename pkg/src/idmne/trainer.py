"""Training loop: epoch-start pseudo-labeling, per-step batch assembly,
weighted loss, heavy-ball SGD with an inverse-decay learning rate."""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from idmne import autodiff as ad
from idmne.data import BatchPlan, DomainData, perturb, sample_batches
from idmne.errors import ConfigError, NumericError
from idmne.losses import TERMS, LossBreakdown, StepBatch, loss_terms, loss_total, term_weights
from idmne.metrics import AccdState, accd, accuracy, calibration
from idmne.mixup import pair_indices, sample_lambda
from idmne.model import ModelParams, ModelSpec, config_hash, init_params, load_checkpoint, save_checkpoint
from idmne.pseudo import PseudoLabelSet, assign_pseudo_labels, expand_labeled, pseudo_label_accuracy

log = logging.getLogger(__name__)

SWITCHES = ("sdm", "mdm", "psr", "nsr", "pa")


@dataclass
class TrainConfig:
    epochs: int = 30
    iterations_per_epoch: int = 25
    lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 5e-4
    decay_prototypes: bool = True
    tau: float = 0.95
    alpha: float = 2.0
    beta: float = 1.0
    gamma: float = 0.1
    temperature: float = 0.05
    hidden: tuple[int, ...] = (64, 64)
    d_feat: int = 64
    activation: str = "relu"
    batch_source: int = 24
    batch_labeled: int = 24
    batch_expanded: int = 24
    batch_unlabeled: int = 48
    perturb_strength: float = 0.1
    seed: int = 0
    enable_sdm: bool = True
    enable_mdm: bool = True
    enable_psr: bool = True
    enable_nsr: bool = True
    enable_pa: bool = True
    enable_pseudo: bool = True

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> None:
        if self.epochs < 0 or self.iterations_per_epoch < 1:
            raise ConfigError("epochs must be >= 0 and iterations_per_epoch >= 1")
        for name in ("lr", "temperature", "alpha"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("momentum", "weight_decay", "beta", "gamma", "perturb_strength"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not 0 < self.tau <= 1:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        self.batch_plan  # validates sizes

    @property
    def batch_plan(self) -> BatchPlan:
        return BatchPlan(self.batch_source, self.batch_labeled, self.batch_expanded, self.batch_unlabeled)

    def model_spec(self, d_in: int, n_classes: int) -> ModelSpec:
        return ModelSpec(d_in, n_classes, self.hidden, self.d_feat, self.temperature, self.activation)

    def weights(self) -> dict[str, float | None]:
        return term_weights(self.beta, self.gamma, {t: getattr(self, f"enable_{t}") for t in SWITCHES})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    def hash(self) -> str:
        return config_hash(json.dumps(self.to_dict(), sort_keys=True))

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def lr_at(t: int, eta0: float) -> float:
    if t < 0:
        raise ValueError("iteration index must be non-negative")
    return eta0 / (1.0 + 0.0001 * t) ** 0.75


def sgd_step(params: list[ad.Tensor], velocity: list[np.ndarray], grads: list[np.ndarray], lr: float,
             momentum: float, weight_decay: float, decay_mask: list[bool] | None = None) -> None:
    """In place: ``v <- m*v + (g + wd*theta)``, ``theta <- theta - lr*v``."""
    decay_mask = decay_mask or [True] * len(params)
    for p, v, g, decay in zip(params, velocity, grads, decay_mask):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        d = g + weight_decay * p.data if decay and weight_decay else g
        v *= momentum
        v += d
        p.data -= lr * v


def _rng_streams(seed: int) -> dict[str, np.random.Generator]:
    init_ss, data_ss, mix_ss = np.random.SeedSequence(seed).spawn(3)
    pools = data_ss.spawn(5)
    names = ("source", "labeled", "expanded", "unlabeled", "perturb")
    streams = {"init": np.random.default_rng(init_ss), "mixup": np.random.default_rng(mix_ss)}
    streams.update({n: np.random.default_rng(s) for n, s in zip(names, pools)})
    return streams


@dataclass
class EpochMetrics:
    epoch: int
    iter: int
    lr: float
    losses: LossBreakdown
    acc_eval: float
    accd: float
    ece: float
    pl_count: int
    pl_correct: int | None
    pl_acc: float | None

    def row(self) -> dict:
        out = {"epoch": self.epoch, "iter": self.iter, "lr": self.lr}
        out.update({k: v for k, v in self.losses.as_dict().items() if k != "total"})
        out["l_total"] = self.losses.total
        out.update(acc_eval=self.acc_eval, accd=self.accd, ece=self.ece, pl_count=self.pl_count,
                   pl_correct=self.pl_correct, pl_acc=self.pl_acc)
        return out


@dataclass
class TrainState:
    params: ModelParams
    velocity: list[np.ndarray]
    rngs: dict[str, np.random.Generator]
    t: int = 0
    epoch: int = 0
    accd_state: AccdState | None = None
    history: list[EpochMetrics] = field(default_factory=list)
    lr_log: list[float] = field(default_factory=list)


def init_state(config: TrainConfig, data: DomainData) -> TrainState:
    rngs = _rng_streams(config.seed)
    seed = int(rngs["init"].integers(2**63))
    params = init_params(config.model_spec(data.d_in, data.n_classes), seed)
    state = TrainState(params, [np.zeros_like(p.data) for p in params.tensors()], rngs)
    x_t, y_t = data.target_with_truth()
    state.accd_state = AccdState.from_model(data.source.x, data.source.y, x_t, y_t, params)
    return state


def _decay_mask(params: ModelParams, config: TrainConfig) -> list[bool]:
    mask = [True] * len(params.tensors())
    mask[-1] = config.decay_prototypes
    return mask


def _diagnose_nan(batch: StepBatch, params: ModelParams, config: TrainConfig) -> str:
    bad = []
    for name, w in config.weights().items():
        if w is None:
            continue
        try:
            with ad.Tape() as tape:
                term = loss_terms(batch, params, config.tau, {name: 1.0})[name]
        except NumericError:
            bad.append(f"l_{name}")
            continue
        if not term.requires_grad:
            continue
        for p in params.tensors():
            p.grad = None
        tape.backward(term)
        if not np.isfinite(term.item()) or any(p.grad is not None and not np.all(np.isfinite(p.grad)) for p in params.tensors()):
            bad.append(f"l_{name}")
    return ", ".join(bad) or "unknown term"


def train_step(state: TrainState, batch: StepBatch, config: TrainConfig) -> LossBreakdown:
    params = state.params
    tensors = params.tensors()
    for p in tensors:
        p.grad = None
    try:
        with ad.Tape() as tape:
            total, breakdown, _ = loss_total(batch, params, config.tau, config.beta, config.gamma, config.weights())
    except NumericError as exc:
        raise NumericError(
            f"{exc} at iteration {state.t} (from {_diagnose_nan(batch, params, config)})"
        ) from exc
    if total.requires_grad:
        tape.backward(total)
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in tensors]
    if not np.isfinite(breakdown.total) or not all(np.all(np.isfinite(g)) for g in grads):
        raise NumericError(
            f"non-finite loss or gradient at iteration {state.t} (from {_diagnose_nan(batch, params, config)})"
        )
    lr = lr_at(state.t, config.lr)
    state.lr_log.append(lr)
    sgd_step(tensors, state.velocity, grads, lr, config.momentum, config.weight_decay, _decay_mask(params, config))
    state.t += 1
    return breakdown


def build_batch(state: TrainState, data: DomainData, x_lp: np.ndarray, y_lp: np.ndarray,
                config: TrainConfig, feat_std: np.ndarray) -> StepBatch:
    r = state.rngs
    pools = (len(data.source), len(data.labeled), len(y_lp), len(data.unlabeled))
    i_s, i_l, i_lp, i_u = sample_batches(pools, config.batch_plan, (r["source"], r["labeled"], r["expanded"], r["unlabeled"]))
    x_u = data.unlabeled.x[i_u]
    x_u_aug = perturb(x_u, config.perturb_strength, feat_std, r["perturb"])
    pair_s, pair_t = pair_indices(i_s.size, i_lp.size, r["mixup"])
    lam1 = sample_lambda(config.alpha, r["mixup"], pair_s.size)
    lam2 = sample_lambda(config.alpha, r["mixup"], pair_s.size)
    return StepBatch(
        data.source.x[i_s], data.source.y[i_s], data.labeled.x[i_l], data.labeled.y[i_l],
        x_lp[i_lp], y_lp[i_lp], x_u, x_u_aug, pair_s, pair_t, lam1, lam2,
    )


def evaluate(state: TrainState, data: DomainData, epoch: int) -> tuple[float, float, float]:
    params = state.params
    acc = accuracy(data.eval.x, data.eval.y, params)
    x_t, y_t = data.target_with_truth()
    a = accd(data.source.x, data.source.y, x_t, y_t, params, state.accd_state, epoch)
    ece = calibration(data.eval.x, data.eval.y, params).ece
    return acc, a, ece


def train_epoch(state: TrainState, data: DomainData, config: TrainConfig,
                feat_std: np.ndarray | None = None, audit=None) -> EpochMetrics:
    """One pass of pseudo-labeling followed by ``iterations_per_epoch`` SGD steps."""
    feat_std = data.train_feature_std() if feat_std is None else feat_std
    epoch = state.epoch + 1
    if config.enable_pseudo:
        plset = assign_pseudo_labels(data.unlabeled.x, state.params, config.tau, epoch)
    else:
        plset = PseudoLabelSet(np.array([], dtype=np.intp), np.array([], dtype=np.intp), np.array([]), epoch)
    x_lp, y_lp = expand_labeled(data.labeled.x, data.labeled.y, data.unlabeled.x, plset)
    if audit is not None:
        audit(plset)
    sums = dict.fromkeys(LossBreakdown().as_dict(), 0.0)
    for _ in range(config.iterations_per_epoch):
        batch = build_batch(state, data, x_lp, y_lp, config, feat_std)
        parts = train_step(state, batch, config).as_dict()
        for k in sums:
            sums[k] += parts[k]
    n = config.iterations_per_epoch
    losses = LossBreakdown(**{k: v / n for k, v in sums.items()})
    state.epoch = epoch
    acc, a, ece = evaluate(state, data, epoch)
    if data.unlabeled.y_true is not None:
        count, correct, pl_acc = pseudo_label_accuracy(plset, data.unlabeled.y_true)
    else:
        count, correct, pl_acc = len(plset), None, None
    metrics = EpochMetrics(epoch, state.t, state.lr_log[-1], losses, acc, a, ece, count, correct, pl_acc)
    state.history.append(metrics)
    log.info("epoch %d acc=%.4f accd=%.4f pl=%d loss=%.4f", epoch, acc, a, count, losses.total)
    return metrics


def _state_extra(state: TrainState) -> dict:
    return {
        "t": state.t,
        "epoch": state.epoch,
        "velocity": [v.reshape(-1).tolist() for v in state.velocity],
        "rngs": {k: g.bit_generator.state for k, g in state.rngs.items()},
        "accd_initial": {str(k): v for k, v in state.accd_state.initial.items()},
        "history": [
            {**dataclasses.asdict(m), "losses": m.losses.as_dict()} for m in state.history
        ],
        "lr_log": state.lr_log,
    }


def save_state(path, state: TrainState, config: TrainConfig) -> None:
    save_checkpoint(path, state.params, config.seed, config.hash(), {"state": _state_extra(state)})


def load_state(path, config: TrainConfig, data: DomainData) -> TrainState:
    params, meta = load_checkpoint(path)
    extra = (meta.get("extra") or {}).get("state")
    if extra is None:
        raise ConfigError(f"{path} holds parameters only; cannot resume training from it")
    if meta.get("config_hash") != config.hash():
        raise ConfigError(f"{path} was written under a different training config")
    rngs = _rng_streams(config.seed)
    for k, st in extra["rngs"].items():
        rngs[k].bit_generator.state = st
    velocity = [np.array(v, dtype=np.float64).reshape(p.shape) for v, p in zip(extra["velocity"], params.tensors())]
    state = TrainState(params, velocity, rngs, extra["t"], extra["epoch"], lr_log=list(extra["lr_log"]))
    initial = {int(k): v for k, v in extra["accd_initial"].items()}
    state.accd_state = AccdState(initial=initial)
    for h in extra["history"]:
        h = dict(h)
        h["losses"] = LossBreakdown(**h["losses"])
        state.history.append(EpochMetrics(**h))
    return state


def run(config: TrainConfig, data: DomainData, checkpoint_path=None, checkpoint_every: int = 0,
        resume_from=None, audit=None) -> tuple[ModelParams, list[EpochMetrics], TrainState]:
    """Train for ``config.epochs`` epochs, optionally resuming from and writing checkpoints."""
    state = load_state(resume_from, config, data) if resume_from else init_state(config, data)
    feat_std = data.train_feature_std()
    while state.epoch < config.epochs:
        train_epoch(state, data, config, feat_std, audit)
        if checkpoint_path and checkpoint_every and state.epoch % checkpoint_every == 0:
            save_state(checkpoint_path, state, config)
    return state.params, state.history, state


def assert_lr_schedule(state: TrainState, config: TrainConfig) -> None:
    for t, lr in enumerate(state.lr_log):
        if lr != lr_at(t, config.lr):
            raise AssertionError(f"learning rate at step {t} was {lr}, expected {lr_at(t, config.lr)}")


__all__ = [
    "EpochMetrics", "TrainConfig", "TrainState", "TERMS", "assert_lr_schedule", "build_batch",
    "evaluate", "init_state", "load_state", "lr_at", "run", "save_state", "sgd_step", "train_epoch",
    "train_step",
]
