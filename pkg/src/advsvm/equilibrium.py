"""Averaged best-response dynamics and equilibrium checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .best_response import adversary_best_response, classifier_best_response
from .errors import DomainError, DynamicsError, FeasibilityError, SolverError
from .game import (
    GameConfig,
    evaluate,
    feasible_adversary,
    feasible_classifier,
    false_negative_prob,
    true_positive_prob,
)
from .model import GaussianClassModel
from .policy import AdversaryPolicy, ClassifierPolicy, identity_adversary, normalize_classifier

FEAS_TOL = 1e-6


@dataclass
class IterationRecord:
    k: int
    adv_policy: AdversaryPolicy
    clf_policy: ClassifierPolicy
    tp: float
    fn: float
    tn: float
    cost: float
    adv_br_gain: float
    clf_br_gain: float
    step: float
    max_change: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "adv_policy": self.adv_policy.to_dict(),
            "clf_policy": self.clf_policy.to_dict(),
            "tp": self.tp,
            "fn": self.fn,
            "tn": self.tn,
            "cost": self.cost,
            "adv_br_gain": self.adv_br_gain,
            "clf_br_gain": self.clf_br_gain,
            "step": self.step,
            "max_change": self.max_change,
        }


@dataclass
class EquilibriumTrace:
    iterations: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict()) + "\n" for r in self.iterations)

    def __iter__(self) -> Iterator[IterationRecord]:
        return iter(self.iterations)


def _mix(old: np.ndarray, new: np.ndarray, w: float) -> np.ndarray:
    return (1.0 - w) * old + w * new


def run_best_response_dynamics(
    model: GaussianClassModel,
    config: GameConfig,
    init: tuple[AdversaryPolicy, ClassifierPolicy] | None = None,
    sweep: str = "jacobi",
    beta_scaling: str = "perspective",
) -> tuple[AdversaryPolicy, ClassifierPolicy, EquilibriumTrace]:
    """Mix each player toward its best response with weight ``varpi / k``.

    ``sweep="jacobi"`` answers both players against the iteration-k opponent;
    ``"gauss-seidel"`` lets the classifier answer the already-updated adversary.
    Classifier iterates are not renormalized mid-run; the returned one is.
    """
    if sweep not in ("jacobi", "gauss-seidel"):
        raise DomainError(f"unknown sweep {sweep!r}")
    tol = config.solver_tol
    n = model.dim
    if init is None:
        adv = identity_adversary(n)
        clf = classifier_best_response(model, adv, config.delta, tol).policy
    else:
        adv, clf = init
    trace = EquilibriumTrace()
    A, mu, S = adv.a_matrix.copy(), adv.w_mean.copy(), adv.w_cov.copy()
    alpha, beta = clf.weights.copy(), float(clf.bias)
    for k in range(1, config.max_iters + 1):
        w = config.varpi / k
        cur_adv = AdversaryPolicy(A, mu, S)
        cur_clf = ClassifierPolicy(alpha, beta)
        try:
            adv_br = adversary_best_response(model, cur_clf, config.epsilon, tol, beta_scaling=beta_scaling)
            A_new = _mix(A, adv_br.policy.a_matrix, w)
            mu_new = _mix(mu, adv_br.policy.w_mean, w)
            S_new = _mix(S, adv_br.policy.w_cov, w)
            opponent = cur_adv if sweep == "jacobi" else AdversaryPolicy(A_new, mu_new, S_new)
            clf_br = classifier_best_response(model, opponent, config.delta, tol)
        except (SolverError, FeasibilityError) as exc:
            raise DynamicsError(f"best response failed at iteration {k}: {exc}", trace) from exc
        fn_now = false_negative_prob(model, cur_adv, cur_clf)
        adv_gain = adv_br.value - fn_now
        clf_gain = true_positive_prob(model, opponent, clf_br.policy) - true_positive_prob(model, opponent, cur_clf)
        alpha_new = _mix(alpha, clf_br.policy.weights, w)
        beta_new = (1.0 - w) * beta + w * clf_br.policy.bias
        change = max(
            float(np.max(np.abs(A_new - A))),
            float(np.max(np.abs(mu_new - mu))),
            float(np.max(np.abs(S_new - S))),
            float(np.max(np.abs(alpha_new - alpha))),
            abs(beta_new - beta),
        )
        A, mu, S, alpha, beta = A_new, mu_new, S_new, alpha_new, beta_new
        new_adv = AdversaryPolicy(A, mu, S)
        new_clf = ClassifierPolicy(alpha, beta)
        if not feasible_adversary(model, new_adv, config.epsilon, FEAS_TOL):
            raise DynamicsError(f"averaged adversary left the budget at iteration {k}", trace)
        if not feasible_classifier(model, new_clf, config.delta, FEAS_TOL):
            raise DynamicsError(f"averaged classifier violated the TN constraint at iteration {k}", trace)
        met = evaluate(model, new_adv, new_clf)
        trace.iterations.append(
            IterationRecord(k, new_adv, new_clf, met.true_positive, met.false_negative, met.true_negative,
                            met.manipulation_cost, adv_gain, clf_gain, w, change)
        )
        if change < config.conv_tol:
            trace.converged, trace.stop_reason = True, "tolerance"
            break
    else:
        trace.stop_reason = "max_iters"
    final_clf = normalize_classifier(alpha, beta)
    return AdversaryPolicy(A, mu, S), final_clf, trace


@dataclass(frozen=True)
class EquilibriumReport:
    adv_gain: float
    clf_gain: float
    is_equilibrium: bool

    def to_dict(self) -> dict:
        return {"adv_gain": self.adv_gain, "clf_gain": self.clf_gain, "is_equilibrium": self.is_equilibrium}


def verify_equilibrium(model, adv: AdversaryPolicy, clf: ClassifierPolicy, config: GameConfig, tol: float) -> EquilibriumReport:
    """How much each player could still gain by deviating unilaterally."""
    if not feasible_adversary(model, adv, config.epsilon, FEAS_TOL):
        raise FeasibilityError("adversary policy exceeds the manipulation budget")
    if not feasible_classifier(model, clf, config.delta, FEAS_TOL):
        raise FeasibilityError("classifier policy violates the true-negative constraint")
    adv_gain = adversary_best_response(model, clf, config.epsilon, config.solver_tol).value - false_negative_prob(model, adv, clf)
    clf_br = classifier_best_response(model, adv, config.delta, config.solver_tol)
    clf_gain = clf_br.value - true_positive_prob(model, adv, clf)
    return EquilibriumReport(adv_gain, clf_gain, adv_gain <= tol and clf_gain <= tol)
