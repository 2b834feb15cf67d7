"""Class-conditional Gaussian data model: fitting, whitening, sampling, I/O.

``positive_prior`` is carried for completeness only; every probability the
game uses is conditioned on the class, so no formula reads it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DataFormatError,
    DimensionError,
    DomainError,
    InsufficientDataError,
    NotPositiveDefiniteError,
)
from .numerics import as_sym, cholesky_lower, min_eigenvalue


@dataclass(frozen=True)
class GaussianClassModel:
    mu_pos: np.ndarray
    sigma_pos: np.ndarray
    mu_neg: np.ndarray
    sigma_neg: np.ndarray
    positive_prior: float = 0.5

    def __post_init__(self):
        mu_pos = np.array(self.mu_pos, dtype=float).reshape(-1)
        mu_neg = np.array(self.mu_neg, dtype=float).reshape(-1)
        sigma_pos = as_sym(self.sigma_pos, "sigma_pos")
        sigma_neg = as_sym(self.sigma_neg, "sigma_neg")
        n = mu_pos.shape[0]
        if n < 1 or mu_neg.shape != (n,) or sigma_pos.shape != (n, n) or sigma_neg.shape != (n, n):
            raise DimensionError("model vectors and matrices must share one dimension")
        for name, s in (("sigma_pos", sigma_pos), ("sigma_neg", sigma_neg)):
            if not min_eigenvalue(s) > 0.0:
                raise NotPositiveDefiniteError(f"{name} must be positive definite")
        if not 0.0 < self.positive_prior < 1.0:
            raise DomainError(f"positive_prior must lie in (0, 1), got {self.positive_prior}")
        for name, val in (("mu_pos", mu_pos), ("mu_neg", mu_neg), ("sigma_pos", sigma_pos), ("sigma_neg", sigma_neg)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "positive_prior", float(self.positive_prior))

    @property
    def dim(self) -> int:
        return self.mu_pos.shape[0]

    @property
    def second_moment_pos(self) -> np.ndarray:
        """``E[x x^T | positive]``; the weight inside the manipulation cost."""
        return self.sigma_pos + np.outer(self.mu_pos, self.mu_pos)

    def mean(self, label: int) -> np.ndarray:
        return self.mu_pos if _check_label(label) > 0 else self.mu_neg

    def cov(self, label: int) -> np.ndarray:
        return self.sigma_pos if _check_label(label) > 0 else self.sigma_neg

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "mu_pos": self.mu_pos.tolist(),
            "sigma_pos": self.sigma_pos.tolist(),
            "mu_neg": self.mu_neg.tolist(),
            "sigma_neg": self.sigma_neg.tolist(),
            "positive_prior": self.positive_prior,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianClassModel":
        try:
            model = cls(d["mu_pos"], d["sigma_pos"], d["mu_neg"], d["sigma_neg"], d.get("positive_prior", 0.5))
        except KeyError as exc:
            raise DataFormatError(f"model JSON is missing field {exc.args[0]!r}", column=exc.args[0]) from None
        if "dim" in d and d["dim"] != model.dim:
            raise DimensionError(f"declared dim {d['dim']} does not match data dim {model.dim}")
        return model


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray  # (rows, dim)
    labels: np.ndarray  # (rows,) of -1/+1
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.array(self.features, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(0, 1)
        y = np.array(self.labels, dtype=int).reshape(-1)
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise DimensionError("features must be a (rows, dim) array with one label per row")
        if y.size and not np.all(np.isin(y, (-1, 1))):
            raise DomainError("labels must be -1 or +1")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        if not self.columns:
            object.__setattr__(self, "columns", tuple(f"x{i + 1}" for i in range(x.shape[1])))

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def of_class(self, label: int) -> np.ndarray:
        return self.features[self.labels == _check_label(label)]


@dataclass(frozen=True)
class WhitenTransform:
    factor_inv: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Map row vectors ``x`` to ``factor_inv @ x``."""
        return np.asarray(x, dtype=float) @ self.factor_inv.T

    def invert(self, z: np.ndarray) -> np.ndarray:
        return scipy.linalg.solve_triangular(self.factor_inv, np.asarray(z, dtype=float).T, lower=True).T

    def to_dict(self) -> dict:
        return {"dim": self.factor_inv.shape[0], "factor_inv": self.factor_inv.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "WhitenTransform":
        return cls(np.array(d["factor_inv"], dtype=float))


def _check_label(label: int) -> int:
    if label not in (-1, 1):
        raise DomainError(f"label must be -1 or +1, got {label!r}")
    return int(label)


def default_ridge(cov: np.ndarray) -> float:
    n = cov.shape[0]
    return 1e-8 * float(np.trace(cov)) / n


def fit(data: LabeledDataset, ridge: float | None = None) -> GaussianClassModel:
    """Per-class sample mean and unbiased covariance plus ``ridge * I``.

    ``ridge=None`` picks ``1e-8 * trace(cov) / n`` per class.
    """
    if ridge is not None and ridge < 0:
        raise DomainError("ridge must be nonnegative")
    params = {}
    for label in (1, -1):
        x = data.of_class(label)
        if x.shape[0] < 2:
            raise InsufficientDataError(f"class {label:+d} has {x.shape[0]} rows; at least 2 are needed")
        mu = x.mean(axis=0)
        cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
        r = default_ridge(cov) if ridge is None else ridge
        params[label] = (mu, cov + r * np.eye(data.dim))
    prior = float(np.mean(data.labels == 1))
    return GaussianClassModel(params[1][0], params[1][1], params[-1][0], params[-1][1], prior)


def whiten(data: LabeledDataset) -> tuple[LabeledDataset, WhitenTransform]:
    """Rescale features by the inverse Cholesky factor of the pooled covariance."""
    cov = np.atleast_2d(np.cov(data.features, rowvar=False, ddof=1))
    L = cholesky_lower(cov)
    factor_inv = scipy.linalg.solve_triangular(L, np.eye(data.dim), lower=True)
    transform = WhitenTransform(factor_inv)
    return LabeledDataset(transform.apply(data.features), data.labels, data.columns), transform


def sample(model: GaussianClassModel, label: int, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. draws from the class-``label`` Gaussian, shape (count, dim)."""
    if count < 0:
        raise DomainError("count must be nonnegative")
    label = _check_label(label)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0 if label > 0 else 1,)))
    z = rng.standard_normal((count, model.dim))
    L = cholesky_lower(model.cov(label))
    return model.mean(label) + z @ L.T


def synthetic_example() -> GaussianClassModel:
    """Two-dimensional benchmark: positives near (3, 3), negatives near the origin."""
    return GaussianClassModel(
        mu_pos=[3.0, 3.0],
        sigma_pos=[[1.0, 0.0], [0.0, 0.2]],
        mu_neg=[0.0, 0.0],
        sigma_neg=[[0.2, 0.0], [0.0, 1.0]],
        positive_prior=0.5,
    )


def read_csv(path: str | Path, labels01: bool = False) -> LabeledDataset:
    """Load a labeled CSV: a header row, one ``label`` column, numeric features.

    With ``labels01`` the label column is read as 0/1 and mapped to -1/+1.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path} is empty", row=1) from None
        if "label" not in header:
            raise DataFormatError(f"{path}: missing required column 'label'", row=1, column="label")
        li = header.index("label")
        feat_idx = [i for i in range(len(header)) if i != li]
        columns = tuple(header[i] for i in feat_idx)
        rows, labels = [], []
        allowed = {0.0: -1, 1.0: 1} if labels01 else {-1.0: -1, 1.0: 1}
        for rownum, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataFormatError(f"{path}: row {rownum} has {len(rec)} cells, expected {len(header)}", row=rownum)
            vals = []
            for i, cell in enumerate(rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: non-numeric value {cell!r} at row {rownum}, column {header[i]!r}",
                        row=rownum,
                        column=header[i],
                    ) from None
                if not math.isfinite(v):
                    raise DataFormatError(f"{path}: non-finite value at row {rownum}, column {header[i]!r}", row=rownum, column=header[i])
                vals.append(v)
            lab = vals[li]
            if lab not in allowed:
                hint = " (expected 0/1)" if labels01 else " (expected -1/+1; pass --labels01 for 0/1 labels)"
                raise DataFormatError(f"{path}: bad label {rec[li]!r} at row {rownum}{hint}", row=rownum, column="label")
            labels.append(allowed[lab])
            rows.append([vals[i] for i in feat_idx])
    features = np.array(rows, dtype=float).reshape(len(rows), len(feat_idx))
    return LabeledDataset(features, np.array(labels, dtype=int), columns)


def write_csv(path: str | Path, data: LabeledDataset) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*data.columns, "label"])
        for x, y in zip(data.features, data.labels):
            w.writerow([*(repr(float(v)) for v in x), int(y)])


def dataset_from_samples(pos: np.ndarray, neg: np.ndarray, columns: Sequence[str] = ()) -> LabeledDataset:
    pos = np.asarray(pos, dtype=float)
    neg = np.asarray(neg, dtype=float)
    dim = pos.shape[1] if pos.ndim == 2 else neg.shape[1]
    feats = np.vstack([pos.reshape(-1, dim), neg.reshape(-1, dim)])
    labels = np.concatenate([np.ones(len(pos), dtype=int), -np.ones(len(neg), dtype=int)])
    return LabeledDataset(feats, labels, tuple(columns))


def load_model_json(path: str | Path) -> tuple[GaussianClassModel, WhitenTransform | None]:
    d = json.loads(Path(path).read_text())
    body = d.get("model", d)
    wt = WhitenTransform.from_dict(d["whiten"]) if d.get("whiten") else None
    return GaussianClassModel.from_dict(body), wt

