"""Scalar special functions and small dense symmetric-matrix helpers."""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError, DomainError, NotPositiveDefiniteError

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
PD_RELATIVE_TOL = 1e-12


def erf(x: float) -> float:
    """Error function, ``2/sqrt(pi) * int_0^x exp(-t^2) dt``."""
    return math.erf(x)


def _erf_inv_seed(p: float) -> float:
    # Giles' single-precision approximation (relative error ~1e-7).
    w = -math.log((1.0 - p) * (1.0 + p))
    if w < 6.25:
        w -= 3.125
        c = (
            -3.6444120640178196996e-21, -1.685059138182016589e-19, 1.2858480715256400167e-18,
            1.115787767802518096e-17, -1.333171662854620906e-16, 2.0972767875968561637e-17,
            6.6376381343583238325e-15, -4.0545662729752068639e-14, -8.1519341976054721522e-14,
            2.6335093153082322977e-12, -1.2975133253453532498e-11, -5.4154120542946279317e-11,
            1.051212273321532285e-09, -4.1126339803469836976e-09, -2.9070369957882005086e-08,
            4.2347877827932403518e-07, -1.3654692000834678645e-06, -1.3882523362786468719e-05,
            0.0001867342080340571352, -0.00074070253416626697512, -0.0060336708714301490533,
            0.24015818242558961693, 1.6536545626831027356,
        )
    elif w < 16.0:
        w = math.sqrt(w) - 3.25
        c = (
            2.2137376921775787049e-09, 9.0756561938885390979e-08, -2.7517406297064545428e-07,
            1.8239629214389227755e-08, 1.5027403968909827627e-06, -4.013867526981545969e-06,
            2.9234449089955446044e-06, 1.2475304481671778723e-05, -4.7318229009055733981e-05,
            6.8284851459573175448e-05, 2.4031110387097893999e-05, -0.0003550375203628474796,
            0.00095328937973738049703, -0.0016882755560235047313, 0.0024914420961078508066,
            -0.0037512085075692412107, 0.005370914553590063617, 1.0052589676941592334,
            3.0838856104922207635,
        )
    else:
        w = math.sqrt(w) - 5.0
        c = (
            -2.7109920616438573243e-11, -2.5556418169965252055e-10, 1.5076572693500548083e-09,
            -3.7894654401267369937e-09, 7.6157012080783393804e-09, -1.4960026627149240478e-08,
            2.9147953450901080826e-08, -6.7711997758452339498e-08, 2.2900482228026654717e-07,
            -9.9298272942317002539e-07, 4.5260625972231537039e-06, -1.9681778105531670567e-05,
            7.5995277030017761139e-05, -0.00021503011930044477347, -0.00013871931833623122026,
            1.0103004648645343977, 4.8499064014085844221,
        )
    acc = c[0]
    for coef in c[1:]:
        acc = coef + acc * w
    return acc * p


def erf_inv(p: float) -> float:
    """Inverse of :func:`erf` on the open interval (-1, 1).

    A rational seed is refined with Newton steps on ``erf`` itself, so the
    round trip ``erf(erf_inv(p))`` is as tight as ``erf`` allows.
    """
    if not math.isfinite(p) or not -1.0 < p < 1.0:
        raise DomainError(f"erf_inv is defined on (-1, 1), got {p!r}")
    if p == 0.0:
        return 0.0
    x = _erf_inv_seed(p)
    for _ in range(4):
        step = (math.erf(x) - p) / (_TWO_OVER_SQRT_PI * math.exp(-x * x))
        x -= step
        if abs(step) <= 1e-16 * max(1.0, abs(x)):
            break
    return x


def as_sym(m, name: str = "matrix", tol: float = 1e-9) -> np.ndarray:
    """Return ``m`` as a float array with exactly symmetric storage.

    Inputs that are asymmetric beyond ``tol`` (relative to the largest entry)
    are rejected rather than silently averaged.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > tol * scale:
        raise DimensionError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def cholesky_lower(m) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m``.

    Pivots at or below ``1e-12 * max(diag(m))`` are treated as a loss of
    positive definiteness.
    """
    a = as_sym(m)
    n = a.shape[0]
    tol = PD_RELATIVE_TOL * max(float(np.max(np.diag(a))), 0.0) if n else 0.0
    L = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > tol:
            raise NotPositiveDefiniteError(
                f"matrix is not positive definite (pivot {pivot:.3e} at index {j})"
            )
        L[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def min_eigenvalue(m) -> float:
    return float(np.linalg.eigvalsh(as_sym(m))[0])


def psd_sqrt(m) -> np.ndarray:
    """Symmetric square root of a PSD matrix (negative round-off eigenvalues clipped)."""
    vals, vecs = np.linalg.eigh(as_sym(m))
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def psd_factor(m) -> np.ndarray:
    """Any ``F`` with ``F @ F.T == m`` for PSD ``m``; tolerates singular input."""
    vals, vecs = np.linalg.eigh(as_sym(m))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))
