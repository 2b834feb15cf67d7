"""Equilibria of the adversarial linear-classifier game on Gaussian class data."""

from .best_response import (
    BestResponse,
    adversary_best_response,
    classifier_best_response,
    reduced_adversary_oracle,
)
from .equilibrium import EquilibriumTrace, run_best_response_dynamics, verify_equilibrium
from .game import (
    GameConfig,
    GameMetrics,
    evaluate,
    false_negative_prob,
    feasible_adversary,
    feasible_classifier,
    manipulation_cost,
    true_negative_prob,
    true_positive_prob,
)
from .model import GaussianClassModel, LabeledDataset, WhitenTransform, fit, sample, synthetic_example, whiten
from .montecarlo import EmpiricalRates, decision_boundary_points, empirical_rates
from .policy import (
    AdversaryPolicy,
    ClassifierPolicy,
    apply_adversary,
    classify,
    identity_adversary,
    normalize_classifier,
)

__version__ = "0.1.0"

__all__ = [
    "AdversaryPolicy",
    "BestResponse",
    "ClassifierPolicy",
    "EmpiricalRates",
    "EquilibriumTrace",
    "GameConfig",
    "GameMetrics",
    "GaussianClassModel",
    "LabeledDataset",
    "WhitenTransform",
    "adversary_best_response",
    "apply_adversary",
    "classifier_best_response",
    "classify",
    "decision_boundary_points",
    "empirical_rates",
    "evaluate",
    "false_negative_prob",
    "feasible_adversary",
    "feasible_classifier",
    "fit",
    "identity_adversary",
    "manipulation_cost",
    "normalize_classifier",
    "reduced_adversary_oracle",
    "run_best_response_dynamics",
    "sample",
    "synthetic_example",
    "true_negative_prob",
    "true_positive_prob",
    "verify_equilibrium",
    "whiten",
]
