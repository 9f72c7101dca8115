"""The six training losses and their weighted sum.

Masks, pseudo-labels, complementary labels and pairwise labels are taken
from detached predictions; only probabilities carry gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from idmne import autodiff as ad
from idmne.autodiff import Tensor
from idmne.mixup import mix_features, mix_samples, one_hot
from idmne.model import ModelParams, classify, extract, predict_proba

PROB_EPS = 1e-7
TERMS = ("sup", "sdm", "mdm", "psr", "nsr", "pa")


def _zero() -> Tensor:
    return Tensor(0.0)


def _as_rows(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=np.float64))


def soft_cross_entropy(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over rows of ``-sum_k targets_k * log(max(p_k, eps))``."""
    logp = ad.log(ad.clip(probs, PROB_EPS, 1.0))
    per_row = ad.sum_(ad.mul(logp, targets), axis=1)
    return ad.neg(ad.mean(per_row))


def loss_sup(x_s, y_s, x_l, y_l, params: ModelParams) -> Tensor:
    xs, xl = _as_rows(x_s), _as_rows(x_l)
    x = np.vstack([r for r in (xs, xl) if r.size])
    y = np.concatenate([np.asarray(y_s, dtype=np.intp).reshape(-1), np.asarray(y_l, dtype=np.intp).reshape(-1)])
    if y.size == 0:
        raise ValueError("supervised loss needs at least one labeled sample")
    return soft_cross_entropy(predict_proba(x, params), one_hot(y, params.n_classes))


def loss_sdm(x_s, y_s, x_t, y_t, lam, params: ModelParams) -> Tensor:
    """Cross-entropy on inputs mixed pairwise (row i of source with row i of target)."""
    if len(y_s) == 0:
        return _zero()
    k = params.n_classes
    mixed = mix_samples(x_s, one_hot(y_s, k), x_t, one_hot(y_t, k), lam)
    return soft_cross_entropy(predict_proba(mixed.x_m, params), mixed.y_m)


def loss_mdm(x_s, y_s, x_t, y_t, lam, params: ModelParams) -> Tensor:
    """Cross-entropy on extractor features mixed pairwise, classified through the normalizing head."""
    n = len(y_s)
    if n == 0:
        return _zero()
    k = params.n_classes
    feats = extract(np.vstack([_as_rows(x_s), _as_rows(x_t)]), params)
    f_s = ad.take(feats, np.arange(n))
    f_t = ad.take(feats, np.arange(n, 2 * n))
    mixed = mix_features(f_s, one_hot(y_s, k), f_t, one_hot(y_t, k), lam)
    return soft_cross_entropy(classify(mixed.f_m, params), mixed.y_m)


def _clean_probs(x_u, params: ModelParams) -> np.ndarray:
    with ad.no_grad():
        return predict_proba(x_u, params).data


def loss_psr(x_u, x_u_aug, params: ModelParams, tau: float, clean_probs: np.ndarray | None = None) -> Tensor:
    """Confident samples: cross-entropy of the perturbed prediction against the clean pseudo-label."""
    p = _clean_probs(x_u, params) if clean_probs is None else clean_probs
    conf_idx = np.flatnonzero(p.max(axis=1) >= tau)
    if conf_idx.size == 0:
        return _zero()
    pseudo = p[conf_idx].argmax(axis=1)
    p_aug = predict_proba(_as_rows(x_u_aug)[conf_idx], params)
    return soft_cross_entropy(p_aug, one_hot(pseudo, params.n_classes))


def loss_nsr(x_u, params: ModelParams, tau: float, probs: Tensor | None = None) -> Tensor:
    """Unconfident samples: push the least likely class further toward zero."""
    probs = predict_proba(x_u, params) if probs is None else probs
    p = probs.data
    low_idx = np.flatnonzero(p.max(axis=1) < tau)
    if low_idx.size == 0:
        return _zero()
    complementary = p[low_idx].argmin(axis=1)
    picked = ad.sum_(ad.mul(ad.take(probs, low_idx), one_hot(complementary, p.shape[1])), axis=1)
    not_class = ad.clip(ad.add(ad.neg(picked), 1.0), PROB_EPS, 1.0)
    return ad.neg(ad.mean(ad.log(not_class)))


def loss_pa(x_u, x_l, y_l, params: ModelParams, tau: float, probs_u: Tensor | None = None) -> Tensor:
    """Binary cross-entropy on prediction inner products of confident unlabeled vs labeled target samples.

    Summed over labeled partners, divided by the number of confident unlabeled samples.
    """
    probs_u = predict_proba(x_u, params) if probs_u is None else probs_u
    p = probs_u.data
    conf_idx = np.flatnonzero(p.max(axis=1) >= tau)
    y_l = np.asarray(y_l, dtype=np.intp).reshape(-1)
    if conf_idx.size == 0 or y_l.size == 0:
        return _zero()
    pseudo = p[conf_idx].argmax(axis=1)
    same = (pseudo[:, None] == y_l[None, :]).astype(np.float64)
    probs_l = predict_proba(x_l, params)
    pu = ad.take(probs_u, conf_idx)
    sim = ad.clip(ad.matmul(pu, ad.transpose(probs_l)), PROB_EPS, 1.0 - PROB_EPS)
    # 1 - <pu, pl> as <pu, (sum of pl over the other classes)>: no cancellation near sim = 1
    k = p.shape[1]
    others = ad.matmul(probs_l, Tensor(np.ones((k, k)) - np.eye(k)))
    dissim = ad.clip(ad.matmul(pu, ad.transpose(others)), PROB_EPS, 1.0 - PROB_EPS)
    bce = ad.add(ad.mul(ad.log(sim), same), ad.mul(ad.log(dissim), 1.0 - same))
    return ad.scale(ad.sum_(bce), -1.0 / conf_idx.size)


@dataclass
class LossBreakdown:
    l_sup: float = 0.0
    l_sdm: float = 0.0
    l_mdm: float = 0.0
    l_psr: float = 0.0
    l_nsr: float = 0.0
    l_pa: float = 0.0
    total: float = 0.0

    def recompute_total(self, beta: float, gamma: float) -> float:
        return self.l_sup + beta * (self.l_sdm + self.l_mdm) + gamma * (self.l_psr + self.l_nsr + self.l_pa)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class StepBatch:
    """Everything one optimization step consumes, already sampled."""

    x_s: np.ndarray
    y_s: np.ndarray
    x_l: np.ndarray
    y_l: np.ndarray
    x_lp: np.ndarray
    y_lp: np.ndarray
    x_u: np.ndarray
    x_u_aug: np.ndarray
    pair_s: np.ndarray
    pair_t: np.ndarray
    lam_sample: np.ndarray
    lam_feature: np.ndarray


def term_weights(beta: float, gamma: float, enabled: dict[str, bool] | None = None) -> dict[str, float | None]:
    """Per-term multipliers; ``None`` marks a term that is skipped entirely."""
    enabled = enabled or {}
    group = {"sup": 1.0, "sdm": beta, "mdm": beta, "psr": gamma, "nsr": gamma, "pa": gamma}
    return {t: (w if enabled.get(t, True) else None) for t, w in group.items()}


def loss_terms(batch: StepBatch, params: ModelParams, tau: float, weights: dict[str, float | None]) -> dict[str, Tensor]:
    """Evaluate every term whose weight is not None."""
    terms: dict[str, Tensor] = {}
    b = batch
    if weights.get("sup") is not None:
        terms["sup"] = loss_sup(b.x_s, b.y_s, b.x_l, b.y_l, params)
    xs_p, ys_p = b.x_s[b.pair_s], b.y_s[b.pair_s]
    xt_p, yt_p = b.x_lp[b.pair_t], b.y_lp[b.pair_t]
    if weights.get("sdm") is not None:
        terms["sdm"] = loss_sdm(xs_p, ys_p, xt_p, yt_p, b.lam_sample, params)
    if weights.get("mdm") is not None:
        terms["mdm"] = loss_mdm(xs_p, ys_p, xt_p, yt_p, b.lam_feature, params)
    need_u = any(weights.get(t) is not None for t in ("psr", "nsr", "pa"))
    if need_u:
        probs_u = predict_proba(b.x_u, params)
        if weights.get("psr") is not None:
            terms["psr"] = loss_psr(b.x_u, b.x_u_aug, params, tau, clean_probs=probs_u.data)
        if weights.get("nsr") is not None:
            terms["nsr"] = loss_nsr(b.x_u, params, tau, probs=probs_u)
        if weights.get("pa") is not None:
            terms["pa"] = loss_pa(b.x_u, b.x_lp, b.y_lp, params, tau, probs_u=probs_u)
    return terms


def loss_total(
    batch: StepBatch, params: ModelParams, tau: float, beta: float, gamma: float, weights: dict[str, float | None] | None = None
) -> tuple[Tensor, LossBreakdown, dict[str, Tensor]]:
    """Weighted total in fixed term order, plus the per-term breakdown."""
    weights = term_weights(beta, gamma) if weights is None else weights
    terms = loss_terms(batch, params, tau, weights)
    total = terms["sup"] if "sup" in terms else _zero()
    for name in TERMS[1:]:
        if name in terms:
            total = ad.add(total, ad.scale(terms[name], weights[name]))
    breakdown = LossBreakdown(**{f"l_{n}": t.item() for n, t in terms.items()}, total=total.item())
    return total, breakdown, terms
