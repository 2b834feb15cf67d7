"""A small conic modelling layer: affine matrix expressions, cone constraints, solve.

Every expression is an affine map of one flat variable vector ``x``; a
matrix-valued expression of shape (r, c) stores ``vec(E) = C x + c0`` with
row-major ``vec``.  Constraints compile to the standard form
``A x + s = b, s in K`` and are handed to Clarabel.  After the solve every
constraint is re-evaluated at the returned point with numpy, so the reported
residuals never come from the solver's own bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import clarabel
import numpy as np
import scipy.sparse as sp

from .errors import ConicConstructionError

DEFAULT_FEAS_TOL = 1e-8
DEFAULT_GAP_TOL = 1e-7
_SQRT2 = math.sqrt(2.0)


class Affine:
    """Matrix-valued affine expression of the program variables.

    Coefficients are dense; programs here are desk-sized.
    """

    __array_priority__ = 100  # make ndarray @ Affine dispatch to __rmatmul__

    def __init__(self, coef: np.ndarray, const: np.ndarray, shape: tuple[int, int]):
        self.coef = np.asarray(coef, dtype=float)
        self.const = np.asarray(const, dtype=float).reshape(-1)
        self.shape = (int(shape[0]), int(shape[1]))
        if self.coef.ndim != 2 or self.coef.shape[0] != self.size or self.const.shape[0] != self.size:
            raise ConicConstructionError("affine expression size mismatch")

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def nvar(self) -> int:
        return self.coef.shape[1]

    @classmethod
    def constant(cls, value, nvar: int = 0) -> "Affine":
        v = np.asarray(value, dtype=float)
        shape = (v.size, 1) if v.ndim == 1 else np.atleast_2d(v).shape
        return cls(np.zeros((v.size, nvar)), v.reshape(-1), shape)

    def padded(self, nvar: int) -> np.ndarray:
        if self.nvar == nvar:
            return self.coef
        return np.hstack([self.coef, np.zeros((self.size, nvar - self.nvar))])

    def _binary(self, other, sign: float) -> "Affine":
        other = as_affine(other)
        if other.shape != self.shape:
            if other.shape == (1, 1):
                other = other * np.ones(self.shape)
            elif self.shape == (1, 1):
                return (self * np.ones(other.shape))._binary(other, sign)
            else:
                raise ConicConstructionError(f"shape mismatch {self.shape} vs {other.shape}")
        nvar = max(self.nvar, other.nvar)
        return Affine(self.padded(nvar) + sign * other.padded(nvar), self.const + sign * other.const, self.shape)

    def __add__(self, other):
        return self._binary(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __rsub__(self, other):
        return (-self)._binary(other, 1.0)

    def __neg__(self):
        return Affine(-self.coef, -self.const, self.shape)

    def __mul__(self, other):
        if isinstance(other, Affine):
            raise ConicConstructionError("product of two variable expressions is not affine")
        arr = np.asarray(other, dtype=float)
        if arr.ndim == 0:
            return Affine(self.coef * float(arr), self.const * float(arr), self.shape)
        if self.shape == (1, 1):
            flat = arr.reshape(-1, 1)
            shape = arr.shape if arr.ndim == 2 else (arr.size, 1)
            return Affine(flat * self.coef, flat[:, 0] * self.const[0], shape)
        if arr.shape != self.shape:
            raise ConicConstructionError(f"elementwise product shape mismatch {self.shape} vs {arr.shape}")
        flat = arr.reshape(-1)
        return Affine(flat[:, None] * self.coef, flat * self.const, self.shape)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / float(other))

    def _reshaped(self) -> tuple[np.ndarray, np.ndarray]:
        r, c = self.shape
        return self.coef.reshape(r, c, -1), self.const.reshape(r, c)

    def __matmul__(self, other):
        if isinstance(other, Affine):
            raise ConicConstructionError("product of two variable expressions is not affine")
        b = np.asarray(other, dtype=float)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        if b.shape[0] != self.shape[1]:
            raise ConicConstructionError(f"matmul shape mismatch {self.shape} @ {b.shape}")
        coef, const = self._reshaped()
        out = np.einsum("rcv,ck->rkv", coef, b)
        shape = (self.shape[0], b.shape[1])
        return Affine(out.reshape(shape[0] * shape[1], -1), (const @ b).reshape(-1), shape)

    def __rmatmul__(self, other):
        b = np.asarray(other, dtype=float)
        if b.ndim == 1:
            b = b.reshape(1, -1)
        if b.shape[1] != self.shape[0]:
            raise ConicConstructionError(f"matmul shape mismatch {b.shape} @ {self.shape}")
        coef, const = self._reshaped()
        out = np.einsum("kr,rcv->kcv", b, coef)
        shape = (b.shape[0], self.shape[1])
        return Affine(out.reshape(shape[0] * shape[1], -1), (b @ const).reshape(-1), shape)

    @property
    def T(self) -> "Affine":
        r, c = self.shape
        perm = np.arange(r * c).reshape(r, c).T.reshape(-1)
        return Affine(self.coef[perm], self.const[perm], (c, r))

    def trace(self) -> "Affine":
        r, c = self.shape
        if r != c:
            raise ConicConstructionError("trace of a non-square expression")
        idx = np.arange(r) * (c + 1)
        return Affine(self.coef[idx].sum(axis=0, keepdims=True), [self.const[idx].sum()], (1, 1))

    def flatten(self) -> "Affine":
        return Affine(self.coef, self.const, (self.size, 1))

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (self.padded(x.shape[0]) @ x + self.const).reshape(self.shape)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        if self.shape[0] != self.shape[1]:
            return False
        t = self.T
        return bool(
            np.max(np.abs(self.coef - t.coef), initial=0.0) <= tol
            and np.max(np.abs(self.const - t.const), initial=0.0) <= tol
        )


def as_affine(value) -> Affine:
    return value if isinstance(value, Affine) else Affine.constant(value)


def _is_zero_block(blk) -> bool:
    return blk is None or (not isinstance(blk, Affine) and np.ndim(blk) == 0 and blk == 0)


def bmat(blocks: Sequence[Sequence]) -> Affine:
    """Assemble a block matrix; ``None`` or scalar ``0`` entries are zero blocks."""
    nbr, nbc = len(blocks), len(blocks[0])
    heights: list = [None] * nbr
    widths: list = [None] * nbc
    conv = [[None if _is_zero_block(b) else as_affine(b) for b in row] for row in blocks]
    for i, row in enumerate(conv):
        if len(row) != nbc:
            raise ConicConstructionError("ragged block matrix")
        for j, blk in enumerate(row):
            if blk is None:
                continue
            for store, k, v in ((heights, i, blk.shape[0]), (widths, j, blk.shape[1])):
                if store[k] is None:
                    store[k] = v
                elif store[k] != v:
                    raise ConicConstructionError(f"inconsistent block sizes at block ({i}, {j})")
    if None in heights or None in widths:
        raise ConicConstructionError("every block row and column needs at least one sized block")
    R, C = sum(heights), sum(widths)
    nvar = max((b.nvar for row in conv for b in row if b is not None), default=0)
    coef = np.zeros((R, C, nvar))
    const = np.zeros((R, C))
    r0 = 0
    for i, row in enumerate(conv):
        c0 = 0
        for j, blk in enumerate(row):
            h, w = heights[i], widths[j]
            if blk is not None:
                coef[r0 : r0 + h, c0 : c0 + w, : blk.nvar] = blk.coef.reshape(h, w, -1)
                const[r0 : r0 + h, c0 : c0 + w] = blk.const.reshape(h, w)
            c0 += w
        r0 += h
    return Affine(coef.reshape(R * C, nvar), const.reshape(-1), (R, C))


def vstack(items: Iterable) -> Affine:
    return bmat([[it] for it in items])


@dataclass
class Constraint:
    kind: str  # "eq" (expr == 0), "ineq" (expr >= 0), "soc" (expr[0] >= |expr[1:]|), "psd"
    expr: Affine
    label: str = ""


@dataclass
class ConicProgram:
    """Linear objective (maximized) over named variable blocks under cone constraints."""

    blocks: dict = field(default_factory=dict)
    nvar: int = 0
    objective: Affine | None = None
    constraints: list = field(default_factory=list)

    def _new(self, name: str, count: int) -> int:
        if name in self.blocks:
            raise ConicConstructionError(f"variable {name!r} declared twice")
        start = self.nvar
        self.nvar += count
        return start

    def variable(self, name: str, shape: int | tuple[int, ...] = ()) -> Affine:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        r, c = (1, 1) if not shape else ((shape[0], 1) if len(shape) == 1 else shape)
        start = self._new(name, r * c)
        self.blocks[name] = ("dense", start, shape, r * c)
        coef = np.zeros((r * c, self.nvar))
        coef[np.arange(r * c), start + np.arange(r * c)] = 1.0
        return Affine(coef, np.zeros(r * c), (r, c))

    def symmetric(self, name: str, n: int) -> Affine:
        """Symmetric n x n variable parameterized by its lower triangle."""
        rows, cols = np.tril_indices(n)
        start = self._new(name, rows.size)
        self.blocks[name] = ("sym", start, (n, n), rows.size)
        flat_r, flat_c = [], []
        for k, (i, j) in enumerate(zip(rows, cols)):
            flat_r.append(i * n + j)
            flat_c.append(start + k)
            if i != j:
                flat_r.append(j * n + i)
                flat_c.append(start + k)
        coef = np.zeros((n * n, self.nvar))
        coef[flat_r, flat_c] = 1.0
        return Affine(coef, np.zeros(n * n), (n, n))

    def maximize(self, expr) -> None:
        expr = as_affine(expr)
        if expr.shape != (1, 1):
            raise ConicConstructionError("objective must be scalar")
        self.objective = expr

    def _add(self, kind: str, expr, label: str) -> None:
        expr = as_affine(expr)
        if expr.nvar > self.nvar:
            raise ConicConstructionError("constraint references undeclared variables")
        self.constraints.append(Constraint(kind, expr, label))

    def add_eq(self, lhs, rhs=0.0, label: str = "") -> None:
        self._add("eq", (as_affine(lhs) - rhs).flatten(), label)

    def add_ge(self, lhs, rhs=0.0, label: str = "") -> None:
        self._add("ineq", (as_affine(lhs) - rhs).flatten(), label)

    def add_le(self, lhs, rhs=0.0, label: str = "") -> None:
        self._add("ineq", (as_affine(rhs) - lhs).flatten(), label)

    def add_soc(self, bound, vec, label: str = "") -> None:
        """``|vec|_2 <= bound``."""
        bound = as_affine(bound)
        if bound.shape != (1, 1):
            raise ConicConstructionError("second-order cone bound must be scalar")
        self._add("soc", vstack([bound, as_affine(vec).flatten()]), label)

    def add_psd(self, expr, label: str = "") -> None:
        expr = as_affine(expr)
        if expr.shape[0] != expr.shape[1]:
            raise ConicConstructionError(f"PSD block must be square, got {expr.shape}")
        if not expr.is_symmetric(tol=1e-12):
            raise ConicConstructionError(f"PSD block {label!r} is not symmetric as an affine expression")
        self._add("psd", expr, label)

    def unpack(self, x: np.ndarray) -> dict:
        out = {}
        for name, (kind, start, shape, count) in self.blocks.items():
            seg = np.asarray(x[start : start + count], dtype=float)
            if kind == "sym":
                n = shape[0]
                m = np.zeros((n, n))
                m[np.tril_indices(n)] = seg
                out[name] = m + np.tril(m, -1).T
            elif shape == ():
                out[name] = float(seg[0])
            else:
                out[name] = seg.reshape(shape)
        return out


@dataclass
class ConicSolution:
    status: str  # optimal | infeasible | unbounded | inaccurate | failed
    values: dict
    objective_value: float
    max_primal_residual: float
    rel_gap: float
    x: np.ndarray | None = None
    residuals: dict = field(default_factory=dict)


def _svec_matrix(n: int) -> np.ndarray:
    # Clarabel PSDTriangle: upper triangle, column-major, off-diagonals scaled by sqrt(2).
    rows, cols, vals = [], [], []
    k = 0
    for j in range(n):
        for i in range(j + 1):
            if i == j:
                rows.append(k)
                cols.append(i * n + j)
                vals.append(1.0)
            else:
                rows += [k, k]
                cols += [i * n + j, j * n + i]
                vals += [_SQRT2 / 2.0, _SQRT2 / 2.0]
            k += 1
    out = np.zeros((k, n * n))
    np.add.at(out, (rows, cols), vals)
    return out


def _standard_form(p: ConicProgram):
    blocks_A, blocks_b, cones = [], [], []
    for c in p.constraints:
        coef = c.expr.padded(p.nvar)
        const = c.expr.const
        if c.kind == "psd":
            s = _svec_matrix(c.expr.shape[0])
            coef, const = s @ coef, s @ const
            cones.append(clarabel.PSDTriangleConeT(c.expr.shape[0]))
        elif c.kind == "eq":
            cones.append(clarabel.ZeroConeT(c.expr.size))
        elif c.kind == "ineq":
            cones.append(clarabel.NonnegativeConeT(c.expr.size))
        elif c.kind == "soc":
            cones.append(clarabel.SecondOrderConeT(c.expr.size))
        else:
            raise ConicConstructionError(f"unknown constraint kind {c.kind!r}")
        blocks_A.append(-coef)
        blocks_b.append(const)
    A = sp.csc_matrix(np.vstack(blocks_A)) if blocks_A else sp.csc_matrix((0, p.nvar))
    b = np.concatenate(blocks_b) if blocks_b else np.zeros(0)
    q = -p.objective.padded(p.nvar).reshape(-1)
    return q, A, b, cones


def constraint_violation(c: Constraint, x: np.ndarray) -> float:
    v = c.expr.value(x)
    if c.kind == "eq":
        return float(np.max(np.abs(v), initial=0.0))
    if c.kind == "ineq":
        return float(max(0.0, -np.min(v, initial=0.0)))
    if c.kind == "soc":
        v = v.reshape(-1)
        return float(max(0.0, np.linalg.norm(v[1:]) - v[0]))
    sym = 0.5 * (v + v.T)
    return float(max(0.0, -np.linalg.eigvalsh(sym)[0]))


def solve(p: ConicProgram, feas_tol: float = DEFAULT_FEAS_TOL, gap_tol: float = DEFAULT_GAP_TOL, max_iter: int = 200) -> ConicSolution:
    if p.objective is None:
        raise ConicConstructionError("program has no objective")
    q, A, b, cones = _standard_form(p)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_threads = 1
    settings.max_iter = max_iter
    settings.tol_feas = feas_tol * 1e-2
    settings.tol_gap_abs = gap_tol * 1e-2
    settings.tol_gap_rel = gap_tol * 1e-2
    P = sp.csc_matrix((p.nvar, p.nvar))
    sol = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
    status = str(sol.status)
    x = np.asarray(sol.x, dtype=float)
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return ConicSolution("infeasible", {}, math.nan, math.inf, math.inf)
    if status in ("DualInfeasible", "AlmostDualInfeasible"):
        return ConicSolution("unbounded", {}, math.inf, math.inf, math.inf)
    if x.size != p.nvar or not np.all(np.isfinite(x)):
        return ConicSolution("failed", {}, math.nan, math.inf, math.inf)
    residuals = {}
    worst = 0.0
    for i, c in enumerate(p.constraints):
        r = constraint_violation(c, x)
        residuals[c.label or f"c{i}"] = max(r, residuals.get(c.label or f"c{i}", 0.0))
        worst = max(worst, r)
    primal = float(q @ x)
    z = np.asarray(sol.z, dtype=float)
    dual = float(-b @ z) if z.size == b.size else math.nan
    rel_gap = abs(primal - dual) / max(1.0, abs(primal), abs(dual)) if math.isfinite(dual) else math.inf
    if status == "Solved" and worst <= feas_tol and rel_gap <= gap_tol:
        tag = "optimal"
    elif status in ("Solved", "AlmostSolved", "MaxIterations", "MaxTime", "InsufficientProgress"):
        tag = "inaccurate"
    else:
        tag = "failed"
    return ConicSolution(tag, p.unpack(x), -primal, worst, rel_gap, x, residuals)


def dump_triplets(p: ConicProgram) -> str:
    """Plain-text sparse dump of the standard form ``min q.x  s.t.  A x + s = b, s in K``."""
    q, A, b, cones = _standard_form(p)
    lines = ["# advsvm conic program v1", f"nvar {p.nvar}", f"ncon {A.shape[0]}"]
    for name, (kind, start, shape, count) in p.blocks.items():
        lines.append(f"var {name} {kind} {start} {count} {'x'.join(map(str, shape)) or 'scalar'}")
    for c in p.constraints:
        n = c.expr.shape[0] if c.kind == "psd" else c.expr.size
        lines.append(f"cone {c.kind} {n} {c.label or '-'}")
    for j in np.nonzero(q)[0]:
        lines.append(f"q {j} {float(q[j])!r}")
    Acoo = A.tocoo()
    for i, j, v in sorted(zip(Acoo.row.tolist(), Acoo.col.tolist(), Acoo.data.tolist())):
        if v != 0.0:
            lines.append(f"A {i} {j} {v!r}")
    for i in np.nonzero(b)[0]:
        lines.append(f"b {i} {float(b[i])!r}")
    return "\n".join(lines) + "\n"
