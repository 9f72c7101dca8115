"""Straight-line scalar reference implementations.

Plain Python lists and ``math`` only. Nothing here imports the autodiff,
model or losses modules; these functions are the independent side of every
equivalence test. Forward values only.

A model is passed as a dict::

    {"layers": [(W, b), ...], "prototypes": W, "temperature": T, "activation": "relu"}

with ``W`` as nested lists in (fan_in, fan_out) layout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

EPS = 1e-7


@dataclass
class OracleResult:
    value: float
    contributions: list[float] = field(default_factory=list)


def model_from_params(params) -> dict:
    """Copy a parameter object's arrays into nested lists (data access only)."""
    return {
        "layers": [(w.data.tolist(), b.data.tolist()) for w, b in params.layers],
        "prototypes": params.prototypes.data.tolist(),
        "temperature": params.temperature,
        "activation": params.activation,
    }


def _dense(x, w, b):
    out = []
    for j in range(len(b)):
        s = b[j]
        for i in range(len(x)):
            s += x[i] * w[i][j]
        out.append(s)
    return out


def oracle_features(x, model) -> list[float]:
    h = list(x)
    layers = model["layers"]
    for n, (w, b) in enumerate(layers):
        h = _dense(h, w, b)
        if n < len(layers) - 1 and model["activation"] == "relu":
            h = [v if v > 0 else 0.0 for v in h]
    return h


def oracle_head(f, model) -> list[float]:
    norm = math.sqrt(sum(v * v for v in f))
    assert norm >= 1e-12, "degenerate feature"
    protos = model["prototypes"]
    k = len(protos[0])
    z = []
    for c in range(k):
        dot = 0.0
        for i in range(len(f)):
            dot += f[i] / norm * protos[i][c]
        z.append(dot / model["temperature"])
    top = max(z)
    e = [math.exp(v - top) for v in z]
    s = sum(e)
    return [v / s for v in e]


def oracle_predict(x, model) -> list[float]:
    return oracle_head(oracle_features(x, model), model)


def _ce(p, target) -> float:
    return -sum(t * math.log(max(pk, EPS)) for pk, t in zip(p, target) if t != 0.0)


def _onehot(y, k):
    return [1.0 if c == y else 0.0 for c in range(k)]


def _mean(contribs):
    return OracleResult(sum(contribs) / len(contribs), contribs) if contribs else OracleResult(0.0, [])


def oracle_loss_sup(xs, ys, model) -> OracleResult:
    assert len(xs) == len(ys) and xs, "need labeled samples"
    contribs = []
    for x, y in zip(xs, ys):
        p = oracle_predict(x, model)
        contribs.append(-math.log(max(p[y], EPS)))
    return _mean(contribs)


def oracle_loss_sdm(xs, ys, xt, yt, lams, model) -> OracleResult:
    k = len(model["prototypes"][0])
    contribs = []
    for a, ya, b, yb, lam in zip(xs, ys, xt, yt, lams):
        xm = [lam * u + (1 - lam) * v for u, v in zip(a, b)]
        ym = [lam * u + (1 - lam) * v for u, v in zip(_onehot(ya, k), _onehot(yb, k))]
        contribs.append(_ce(oracle_predict(xm, model), ym))
    return _mean(contribs)


def oracle_loss_mdm(xs, ys, xt, yt, lams, model) -> OracleResult:
    k = len(model["prototypes"][0])
    contribs = []
    for a, ya, b, yb, lam in zip(xs, ys, xt, yt, lams):
        fa, fb = oracle_features(a, model), oracle_features(b, model)
        fm = [lam * u + (1 - lam) * v for u, v in zip(fa, fb)]
        ym = [lam * u + (1 - lam) * v for u, v in zip(_onehot(ya, k), _onehot(yb, k))]
        contribs.append(_ce(oracle_head(fm, model), ym))
    return _mean(contribs)


def _argmax(p):
    best = 0
    for c in range(1, len(p)):
        if p[c] > p[best]:
            best = c
    return best


def _argmin(p):
    best = 0
    for c in range(1, len(p)):
        if p[c] < p[best]:
            best = c
    return best


def oracle_loss_psr(xu, xu_aug, model, tau) -> OracleResult:
    contribs = []
    for x, xa in zip(xu, xu_aug):
        p = oracle_predict(x, model)
        if max(p) >= tau:
            pa = oracle_predict(xa, model)
            contribs.append(-math.log(max(pa[_argmax(p)], EPS)))
    return _mean(contribs)


def oracle_nsr_from_probs(probs, tau) -> OracleResult:
    contribs = []
    for p in probs:
        if max(p) < tau:
            q = 1.0 - p[_argmin(p)]
            contribs.append(-math.log(min(max(q, EPS), 1.0)))
    return _mean(contribs)


def oracle_loss_nsr(xu, model, tau) -> OracleResult:
    return oracle_nsr_from_probs([oracle_predict(x, model) for x in xu], tau)


def oracle_pa_from_probs(probs_u, probs_l, y_l, tau) -> OracleResult:
    contribs = []
    n_conf = 0
    for pu in probs_u:
        if max(pu) < tau:
            continue
        n_conf += 1
        yhat = _argmax(pu)
        row = 0.0
        for pl, yl in zip(probs_l, y_l):
            if yhat == yl:
                s = sum(a * b for a, b in zip(pu, pl))
                row += math.log(min(max(s, EPS), 1.0 - EPS))
            else:
                # 1 - <pu, pl> summed from non-negative terms
                others = [sum(pl[j] for j in range(len(pl)) if j != k) for k in range(len(pl))]
                d = sum(a * b for a, b in zip(pu, others))
                row += math.log(min(max(d, EPS), 1.0 - EPS))
        contribs.append(-row)
    if n_conf == 0 or not probs_l:
        return OracleResult(0.0, [])
    return OracleResult(sum(contribs) / n_conf, contribs)


def oracle_loss_pa(xu, xl, yl, model, tau) -> OracleResult:
    probs_u = [oracle_predict(x, model) for x in xu]
    probs_l = [oracle_predict(x, model) for x in xl]
    return oracle_pa_from_probs(probs_u, probs_l, yl, tau)


def _unit(v):
    n = math.sqrt(sum(a * a for a in v))
    return [a / n for a in v]


def _centroid(rows):
    d = len(rows[0])
    return [sum(r[i] for r in rows) / len(rows) for i in range(d)]


def oracle_class_distances(src_feats, src_labels, tgt_feats, tgt_labels) -> dict[int, float]:
    """Per-class distance between source and target centroids of unit-normalized features."""
    out = {}
    for c in sorted(set(src_labels) & set(tgt_labels)):
        cs = _centroid([_unit(f) for f, y in zip(src_feats, src_labels) if y == c])
        ct = _centroid([_unit(f) for f, y in zip(tgt_feats, tgt_labels) if y == c])
        out[c] = math.sqrt(sum((a - b) ** 2 for a, b in zip(cs, ct)))
    return out


def oracle_accd(src_feats, src_labels, tgt_feats, tgt_labels, initial: dict[int, float]) -> OracleResult:
    d = oracle_class_distances(src_feats, src_labels, tgt_feats, tgt_labels)
    contribs = [d[c] / initial[c] for c in sorted(d) if c in initial]
    return _mean(contribs)


def oracle_ece(confidences, correct, n_bins: int = 100) -> OracleResult:
    """Equal-width bins, left-closed; the last bin also takes confidence 1.0."""
    n = len(confidences)
    gaps = []
    total = 0.0
    for b in range(n_bins):
        lo, hi = b / n_bins, (b + 1) / n_bins
        members = [
            i for i, c in enumerate(confidences) if (lo <= c < hi) or (b == n_bins - 1 and c == hi)
        ]
        if not members:
            gaps.append(0.0)
            continue
        conf = sum(confidences[i] for i in members) / len(members)
        acc = sum(1.0 for i in members if correct[i]) / len(members)
        gap = len(members) / n * abs(acc - conf)
        gaps.append(gap)
        total += gap
    return OracleResult(total, gaps)
