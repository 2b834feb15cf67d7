"""Adversary and classifier strategies and their action on data points."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DegeneratePolicyError, DimensionError, DomainError, FeasibilityError
from .numerics import as_sym, min_eigenvalue, psd_factor

PSD_TOL = 1e-9
NORM_TOL = 1e-12


@dataclass(frozen=True)
class AdversaryPolicy:
    """Positive-class manipulation ``y = A x + w`` with ``w ~ N(w_mean, w_cov)``."""

    a_matrix: np.ndarray
    w_mean: np.ndarray
    w_cov: np.ndarray

    def __post_init__(self):
        a = np.array(self.a_matrix, dtype=float)
        mu = np.array(self.w_mean, dtype=float).reshape(-1)
        cov = as_sym(self.w_cov, "w_cov", tol=1e-7)
        n = mu.shape[0]
        if a.shape != (n, n) or cov.shape != (n, n):
            raise DimensionError("adversary policy blocks must share one dimension")
        if n and min_eigenvalue(cov) < -PSD_TOL * max(1.0, float(np.max(np.abs(cov)))):
            raise FeasibilityError("w_cov must be positive semidefinite")
        for name, val in (("a_matrix", a), ("w_mean", mu), ("w_cov", cov)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return self.w_mean.shape[0]

    def to_dict(self) -> dict:
        return {
            "type": "adversary",
            "dim": self.dim,
            "a_matrix": self.a_matrix.tolist(),
            "w_mean": self.w_mean.tolist(),
            "w_cov": self.w_cov.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdversaryPolicy":
        try:
            p = cls(d["a_matrix"], d["w_mean"], d["w_cov"])
        except KeyError as exc:
            raise DataFormatError(f"adversary policy is missing field {exc.args[0]!r}", column=exc.args[0]) from None
        _check_dim(d, p.dim)
        return p


@dataclass(frozen=True)
class ClassifierPolicy:
    """Linear rule ``sign(weights . y + bias)`` with both parts in [-1, 1]."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        b = float(self.bias)
        if (w.size and np.max(np.abs(w)) > 1.0 + NORM_TOL) or abs(b) > 1.0 + NORM_TOL:
            raise DomainError("classifier weights and bias must lie in [-1, 1]; use normalize_classifier")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def score(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {"type": "classifier", "dim": self.dim, "weights": self.weights.tolist(), "bias": self.bias}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierPolicy":
        try:
            p = cls(d["weights"], d["bias"])
        except KeyError as exc:
            raise DataFormatError(f"classifier policy is missing field {exc.args[0]!r}", column=exc.args[0]) from None
        _check_dim(d, p.dim)
        return p


def _check_dim(d: dict, dim: int) -> None:
    if "dim" in d and d["dim"] != dim:
        raise DimensionError(f"declared dim {d['dim']} does not match data dim {dim}")


def identity_adversary(n: int) -> AdversaryPolicy:
    if n < 1:
        raise DomainError("dimension must be positive")
    return AdversaryPolicy(np.eye(n), np.zeros(n), np.zeros((n, n)))


def apply_adversary(p: AdversaryPolicy, x, label: int, seed: int) -> np.ndarray:
    """Manipulate one point (or rows of points); negatives pass through untouched."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.dim:
        raise DimensionError(f"point has dimension {x.shape[-1]}, policy has {p.dim}")
    if label == -1:
        return x.copy()
    if label != 1:
        raise DomainError(f"label must be -1 or +1, got {label!r}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(x.shape)
    return x @ p.a_matrix.T + p.w_mean + z @ psd_factor(p.w_cov).T


def classify(p: ClassifierPolicy, y) -> int | np.ndarray:
    """+1 where the score is >= 0 (ties go to the positive class), -1 otherwise."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != p.dim:
        raise DimensionError(f"point has dimension {y.shape[-1]}, policy has {p.dim}")
    out = np.where(p.score(y) >= 0.0, 1, -1)
    return int(out) if out.ndim == 0 else out


def normalize_classifier(alpha_raw, beta_raw: float) -> ClassifierPolicy:
    alpha = np.asarray(alpha_raw, dtype=float).reshape(-1)
    scale = max(float(np.max(np.abs(alpha))) if alpha.size else 0.0, abs(float(beta_raw)))
    if not scale > 0.0 or not np.isfinite(scale):
        raise DegeneratePolicyError("cannot normalize an all-zero classifier")
    w = alpha / scale
    b = float(beta_raw) / scale
    # pin the dominant entry to exactly +/-1
    if abs(float(beta_raw)) == scale:
        b = float(np.sign(b))
    else:
        i = int(np.argmax(np.abs(alpha)))
        w[i] = np.sign(w[i])
    return ClassifierPolicy(w, b)


def dumps(policy: AdversaryPolicy | ClassifierPolicy, **extra) -> str:
    return json.dumps({**policy.to_dict(), **extra}, indent=2)


def policy_from_dict(d: dict) -> AdversaryPolicy | ClassifierPolicy:
    kind = d.get("type")
    if kind is None:
        kind = "adversary" if "a_matrix" in d else "classifier"
    if kind == "adversary":
        return AdversaryPolicy.from_dict(d)
    if kind == "classifier":
        return ClassifierPolicy.from_dict(d)
    raise DataFormatError(f"unknown policy type {kind!r}", column="type")
