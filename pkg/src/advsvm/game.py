"""Closed-form utilities and constraints of the adversarial classification game.

With ``s = w . y + b`` Gaussian given the class, every quantity reduces to a
mean/variance pair:

* positives: mean ``w.(A mu_+ + mu_w) + b``, variance ``w.(A S_+ A^T + S_w) w``
* negatives: mean ``w.mu_- + b``, variance ``w.S_- w`` (the adversary never
  touches negatives)
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .model import GaussianClassModel
from .numerics import min_eigenvalue
from .policy import NORM_TOL, PSD_TOL, AdversaryPolicy, ClassifierPolicy

DEGENERATE_VARIANCE = 1e-300
FEAS_REL_TOL = 1e-9


@dataclass(frozen=True)
class GameConfig:
    delta: float = 0.01
    epsilon: float = 2.0
    varpi: float = 0.5
    max_iters: int = 200
    conv_tol: float = 1e-5
    solver_tol: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise DomainError(f"delta must lie in (0, 1/2), got {self.delta}")
        # epsilon = 0 is allowed: it is the no-manipulation limit of the game
        if not (self.epsilon >= 0.0 and math.isfinite(self.epsilon)):
            raise DomainError(f"epsilon must be a finite nonnegative number, got {self.epsilon}")
        if not 0.0 < self.varpi < 1.0:
            raise DomainError(f"varpi must lie in (0, 1), got {self.varpi}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise DomainError("max_iters must be a positive integer")
        if not self.conv_tol > 0 or not self.solver_tol > 0:
            raise DomainError("tolerances must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GameMetrics:
    true_positive: float
    false_negative: float
    true_negative: float
    manipulation_cost: float

    def to_dict(self, delta: float | None = None, epsilon: float | None = None) -> dict:
        d = asdict(self)
        d["delta"] = delta
        d["epsilon"] = epsilon
        return d


def _check(model: GaussianClassModel, *policies) -> None:
    for p in policies:
        if p.dim != model.dim:
            raise DimensionError(f"policy dimension {p.dim} does not match model dimension {model.dim}")


def positive_score_moments(model: GaussianClassModel, adv: AdversaryPolicy, clf: ClassifierPolicy) -> tuple[float, float]:
    """Mean and variance of the classifier score on manipulated positives."""
    a = clf.weights
    v = adv.a_matrix.T @ a
    mean = float(v @ model.mu_pos + a @ adv.w_mean + clf.bias)
    var = float(v @ model.sigma_pos @ v + a @ adv.w_cov @ a)
    return mean, max(var, 0.0)


def negative_score_moments(model: GaussianClassModel, clf: ClassifierPolicy) -> tuple[float, float]:
    a = clf.weights
    return float(a @ model.mu_neg + clf.bias), max(float(a @ model.sigma_neg @ a), 0.0)


def prob_score_positive(mean: float, var: float) -> float:
    """``P{s > 0}`` for ``s ~ N(mean, var)``, with the zero-variance limit."""
    if var <= DEGENERATE_VARIANCE:
        return 1.0 if mean > 0 else (0.0 if mean < 0 else 0.5)
    return 0.5 * math.erfc(-mean / math.sqrt(2.0 * var))


def true_positive_prob(model, adv: AdversaryPolicy, clf: ClassifierPolicy) -> float:
    _check(model, adv, clf)
    return prob_score_positive(*positive_score_moments(model, adv, clf))


def false_negative_prob(model, adv: AdversaryPolicy, clf: ClassifierPolicy) -> float:
    return 1.0 - true_positive_prob(model, adv, clf)


def true_negative_prob(model, clf: ClassifierPolicy) -> float:
    _check(model, clf)
    return 1.0 - prob_score_positive(*negative_score_moments(model, clf))


def manipulation_cost(model, adv: AdversaryPolicy) -> float:
    """``E{|x - y|^2 | positive}`` for ``y = A x + w``."""
    _check(model, adv)
    d = np.eye(model.dim) - adv.a_matrix
    val = np.trace(d @ model.second_moment_pos @ d.T) + adv.w_mean @ adv.w_mean + np.trace(adv.w_cov)
    return max(float(val), 0.0)


def evaluate(model, adv: AdversaryPolicy, clf: ClassifierPolicy) -> GameMetrics:
    tp = true_positive_prob(model, adv, clf)
    return GameMetrics(tp, 1.0 - tp, true_negative_prob(model, clf), manipulation_cost(model, adv))


def feasible_classifier(model, clf: ClassifierPolicy, delta: float, tol: float = FEAS_REL_TOL) -> bool:
    in_box = (clf.weights.size == 0 or float(np.max(np.abs(clf.weights))) <= 1.0 + NORM_TOL) and abs(clf.bias) <= 1.0 + NORM_TOL
    return in_box and true_negative_prob(model, clf) >= 1.0 - delta - tol


def feasible_adversary(model, adv: AdversaryPolicy, epsilon: float, tol: float = FEAS_REL_TOL) -> bool:
    if min_eigenvalue(adv.w_cov) < -PSD_TOL:
        return False
    return manipulation_cost(model, adv) <= epsilon * (1.0 + tol) + 1e-15
