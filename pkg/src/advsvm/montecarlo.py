"""Simulation of the manipulation/classification pipeline.

Random streams are keyed by ``(seed, class, block)`` with a counter-based
generator (Philox), blocks have a fixed size, and block results are reduced in
block order.  Sample ``i`` therefore depends only on the seed and ``i``, and
the totals are bit-identical for any number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegeneratePolicyError, DimensionError, DomainError
from .model import GaussianClassModel
from .numerics import cholesky_lower, psd_factor
from .policy import AdversaryPolicy, ClassifierPolicy

BLOCK = 1 << 15
_POS, _NEG, _SCATTER = 0, 1, 2


@dataclass(frozen=True)
class EmpiricalRates:
    tp: float
    fn: float
    tn: float
    fp: float
    cost_mean: float
    n_samples: int
    std_err_tp: float
    std_err_tn: float
    std_err_cost: float

    def to_dict(self) -> dict:
        return asdict(self)


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, block))))


def _positive_block(model, adv, clf, L, F, seed, b, count):
    n = model.dim
    z = block_rng(seed, _POS, b).standard_normal((count, 2 * n))
    x = model.mu_pos + z[:, :n] @ L.T
    y = x @ adv.a_matrix.T + adv.w_mean + z[:, n:] @ F.T
    hits = int(np.count_nonzero(y @ clf.weights + clf.bias >= 0.0))
    sq = np.sum((x - y) ** 2, axis=1)
    return hits, float(sq.sum()), float((sq * sq).sum())


def _negative_block(model, clf, L, seed, b, count):
    z = block_rng(seed, _NEG, b).standard_normal((count, model.dim))
    x = model.mu_neg + z @ L.T
    return int(np.count_nonzero(x @ clf.weights + clf.bias < 0.0))


def _blocks(n: int) -> list[tuple[int, int]]:
    return [(b, min(BLOCK, n - b * BLOCK)) for b in range(math.ceil(n / BLOCK))]


def empirical_rates(
    model: GaussianClassModel,
    adv: AdversaryPolicy,
    clf: ClassifierPolicy,
    n: int,
    seed: int,
    workers: int = 1,
) -> EmpiricalRates:
    """Estimate TP/FN/TN/FP and the mean manipulation cost from ``n`` draws per class."""
    if n < 100:
        raise DomainError("at least 100 samples per class are required")
    if adv.dim != model.dim or clf.dim != model.dim:
        raise DimensionError("policy and model dimensions differ")
    L_pos = cholesky_lower(model.sigma_pos)
    L_neg = cholesky_lower(model.sigma_neg)
    F = psd_factor(adv.w_cov)
    blocks = _blocks(n)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pos = list(pool.map(lambda bc: _positive_block(model, adv, clf, L_pos, F, seed, *bc), blocks))
            neg = list(pool.map(lambda bc: _negative_block(model, clf, L_neg, seed, *bc), blocks))
    else:
        pos = [_positive_block(model, adv, clf, L_pos, F, seed, *bc) for bc in blocks]
        neg = [_negative_block(model, clf, L_neg, seed, *bc) for bc in blocks]
    tp_hits = sum(h for h, _, _ in pos)
    cost_sum = 0.0
    cost_sq = 0.0
    for _, s, s2 in pos:
        cost_sum += s
        cost_sq += s2
    tn_hits = sum(neg)
    tp = tp_hits / n
    tn = tn_hits / n
    cost_mean = cost_sum / n
    cost_var = max(cost_sq / n - cost_mean**2, 0.0) * n / (n - 1)
    return EmpiricalRates(
        tp=tp,
        fn=(n - tp_hits) / n,
        tn=tn,
        fp=(n - tn_hits) / n,
        cost_mean=cost_mean,
        n_samples=n,
        std_err_tp=math.sqrt(tp * (1 - tp) / n),
        std_err_tn=math.sqrt(tn * (1 - tn) / n),
        std_err_cost=math.sqrt(cost_var / n),
    )


def scatter_points(model: GaussianClassModel, adv: AdversaryPolicy, n_per_class: int, seed: int) -> list[tuple]:
    """Rows ``(*x, class, manipulated)``: originals of both classes plus manipulated positives."""
    if n_per_class < 0:
        raise DomainError("n_per_class must be nonnegative")
    n = model.dim
    rng = block_rng(seed, _SCATTER, 0)
    zp = rng.standard_normal((n_per_class, 2 * n))
    zn = rng.standard_normal((n_per_class, n))
    x_pos = model.mu_pos + zp[:, :n] @ cholesky_lower(model.sigma_pos).T
    y_pos = x_pos @ adv.a_matrix.T + adv.w_mean + zp[:, n:] @ psd_factor(adv.w_cov).T
    x_neg = model.mu_neg + zn @ cholesky_lower(model.sigma_neg).T
    rows = [(*map(float, p), 1, 0) for p in x_pos]
    rows += [(*map(float, p), -1, 0) for p in x_neg]
    rows += [(*map(float, p), 1, 1) for p in y_pos]
    return rows


def decision_boundary_points(clf: ClassifierPolicy, bbox: tuple, count: int) -> list[tuple[float, float]]:
    """Evenly spaced points of ``{y : w.y + b = 0}`` inside the box ``(lo, hi)``."""
    if clf.dim != 2:
        raise DimensionError("decision boundaries are drawn for two-dimensional classifiers only")
    a = clf.weights
    if not np.any(a != 0.0):
        raise DegeneratePolicyError("zero weights have no decision boundary")
    if count < 0:
        raise DomainError("count must be nonnegative")
    lo, hi = (np.asarray(v, dtype=float) for v in bbox)
    base = -clf.bias * a / float(a @ a)
    direction = np.array([-a[1], a[0]])
    t0, t1 = -math.inf, math.inf
    for i in range(2):
        if direction[i] == 0.0:
            if not lo[i] <= base[i] <= hi[i]:
                return []
            continue
        ta = (lo[i] - base[i]) / direction[i]
        tb = (hi[i] - base[i]) / direction[i]
        t0, t1 = max(t0, min(ta, tb)), min(t1, max(ta, tb))
    if t0 > t1 or count == 0:
        return []
    ts = [0.5 * (t0 + t1)] if count == 1 else np.linspace(t0, t1, count)
    pts = []
    for t in ts:
        p = base + t * direction
        # snap the coordinate the line fixes exactly (axis-aligned boundaries)
        if a[1] == 0.0:
            p[0] = -clf.bias / a[0]
        elif a[0] == 0.0:
            p[1] = -clf.bias / a[1]
        pts.append((float(p[0]), float(p[1])))
    return pts
