"""Best responses of both players.

Classifier: a second-order cone program obtained from the fractional
utility by scaling with the reciprocal of the score's standard deviation.
Adversary: a perspective semidefinite program plus a reduced-form search over
the rank-one manipulations that are provably sufficient (the utility only sees
``A^T w``, ``w . mu_w`` and ``w . S_w w``, and the cheapest policy producing
given values of those acts along ``w`` alone).  The adversary response returns
whichever candidate is feasible and scores best in closed form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import conic
from .errors import DegeneratePolicyError, DomainError, SolverError
from .game import (
    false_negative_prob,
    manipulation_cost,
    prob_score_positive,
    true_negative_prob,
    true_positive_prob,
)
from .model import GaussianClassModel
from .numerics import erf_inv, psd_factor, psd_sqrt
from .policy import AdversaryPolicy, ClassifierPolicy, identity_adversary, normalize_classifier

log = logging.getLogger(__name__)

BUDGET_REL_TOL = 1e-6
TN_TOL = 1e-6


@dataclass
class ClassifierBRRaw:
    alpha_bar: np.ndarray
    beta_bar: float
    t: float
    delta_prime: float


@dataclass
class AdversaryBRRaw:
    a_bar: np.ndarray
    mu_w_bar: np.ndarray
    r_w: np.ndarray
    z_prime: np.ndarray
    t: float


@dataclass
class BestResponse:
    """A best-response policy with the utility it achieves.

    Unpacks as ``policy, value`` so callers can treat it as a pair.
    """

    policy: AdversaryPolicy | ClassifierPolicy
    value: float
    raw: ClassifierBRRaw | AdversaryBRRaw | None = None
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.policy
        yield self.value


# ---------------------------------------------------------------- classifier


def _positive_moments(model: GaussianClassModel, adv: AdversaryPolicy) -> tuple[np.ndarray, np.ndarray]:
    m = adv.a_matrix @ model.mu_pos + adv.w_mean
    S = adv.a_matrix @ model.sigma_pos @ adv.a_matrix.T + adv.w_cov
    return m, 0.5 * (S + S.T)


def classifier_program(model: GaussianClassModel, adv: AdversaryPolicy, delta: float) -> tuple[conic.ConicProgram, float]:
    """Conic form of the classifier's problem; returns the program and ``erf_inv(1 - 2 delta)``."""
    if not 0.0 < delta < 0.5:
        raise DomainError(f"delta must lie in (0, 1/2), got {delta}")
    n = model.dim
    m, S = _positive_moments(model, adv)
    delta_prime = erf_inv(1.0 - 2.0 * delta)
    prog = conic.ConicProgram()
    a = prog.variable("alpha_bar", n)
    b = prog.variable("beta_bar")
    t = prog.variable("t")
    prog.maximize(a.T @ m + b)
    prog.add_soc(1.0, math.sqrt(2.0) * (psd_factor(S).T @ a), label="unit_variance")
    prog.add_ge(-(a.T @ model.mu_neg) - b - delta_prime * t, label="true_negative")
    prog.add_soc(t, math.sqrt(2.0) * (psd_sqrt(model.sigma_neg) @ a), label="negative_spread")
    prog.add_ge(t, label="t_nonneg")
    return prog, delta_prime


def _tn_ratio_direction(model, m, S, c, alpha):
    """Best utility ratio along direction ``alpha`` with the bias pinned by the TN constraint."""
    spread = math.sqrt(max(float(alpha @ model.sigma_neg @ alpha), 0.0))
    beta = -float(alpha @ model.mu_neg) - c * spread
    mean = float(alpha @ m) + beta
    var = max(float(alpha @ S @ alpha), 0.0)
    return prob_score_positive(mean, var), beta


def _fractional_classifier_search(model, adv, delta, seed: int = 0) -> tuple[np.ndarray, float]:
    """Direct maximization of TP over weight directions (bias set by the TN constraint).

    Used when the cone program is degenerate: TP <= 1/2 at the optimum, or a
    zero-variance direction makes the program unbounded.
    """
    m, S = _positive_moments(model, adv)
    c = math.sqrt(2.0) * erf_inv(1.0 - 2.0 * delta)
    n = model.dim

    def neg_tp(v):
        nv = np.linalg.norm(v)
        if nv == 0:
            return 1.0
        return -_tn_ratio_direction(model, m, S, c, v / nv)[0]

    def neg_ratio(v):
        # smooth surrogate for the optimizer; TP is a monotone map of this ratio
        nv = np.linalg.norm(v)
        if nv == 0:
            return 1e6
        v = v / nv
        spread = math.sqrt(max(float(v @ model.sigma_neg @ v), 0.0))
        num = float(v @ (m - model.mu_neg)) - c * spread
        var = float(v @ S @ v)
        return -num / math.sqrt(2.0 * max(var, 1e-300))

    def grad_neg_ratio(v):
        # the ratio is scale invariant, so no normalization is needed here
        sn = math.sqrt(max(float(v @ model.sigma_neg @ v), 1e-300))
        num = float(v @ (m - model.mu_neg)) - c * sn
        den = math.sqrt(2.0 * max(float(v @ S @ v), 1e-300))
        d_num = (m - model.mu_neg) - c * (model.sigma_neg @ v) / sn
        d_den = 2.0 * (S @ v) / den
        return -(d_num * den - num * d_den) / den**2

    best_v, best_val = None, math.inf

    def consider(v):
        nonlocal best_v, best_val
        nv = np.linalg.norm(v)
        if nv > 0 and np.all(np.isfinite(v)):
            val = neg_tp(v)
            if val < best_val:
                best_val, best_v = val, v / nv

    if n == 2:
        phis = np.linspace(0.0, 2.0 * math.pi, 3600, endpoint=False)
        dirs = np.stack([np.cos(phis), np.sin(phis)], axis=1)
        vals = [neg_tp(v) for v in dirs]
        for i in np.argsort(vals, kind="stable")[:5]:
            v0 = dirs[i]
            for fun in (neg_ratio, neg_tp):
                res = minimize(fun, v0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 8000})
                consider(res.x)
                v0 = res.x
    else:
        diff = m - model.mu_neg
        starts = [diff]
        for mat in (S, model.sigma_neg, S + model.sigma_neg):
            try:
                starts.append(np.linalg.solve(mat + 1e-12 * np.eye(n), diff))
            except np.linalg.LinAlgError:
                pass
        vals, vecs = np.linalg.eigh(S)
        starts += [s * vecs[:, i] for i in range(n) for s in (1.0, -1.0) if vals[i] <= 1e-12 * max(vals[-1], 1.0)]
        starts += list(np.eye(n)) + list(-np.eye(n))
        starts += list(np.random.default_rng(seed).standard_normal((n, n)))
        for v0 in starts:
            consider(v0)
            res = minimize(neg_ratio, v0, jac=grad_neg_ratio, method="BFGS", options={"gtol": 1e-9, "maxiter": 500})
            consider(res.x)
    if best_v is None:
        raise DegeneratePolicyError("no usable classifier direction found")
    _, beta = _tn_ratio_direction(model, m, S, c, best_v)
    return best_v, beta


def classifier_best_response(
    model: GaussianClassModel,
    adv: AdversaryPolicy,
    delta: float,
    feas_tol: float = conic.DEFAULT_FEAS_TOL,
    gap_tol: float = conic.DEFAULT_GAP_TOL,
) -> BestResponse:
    """Classifier policy maximizing TP subject to ``TN >= 1 - delta``."""
    prog, delta_prime = classifier_program(model, adv, delta)
    sol = conic.solve(prog, feas_tol, gap_tol)
    diag = {
        "solver_status": sol.status,
        "max_primal_residual": sol.max_primal_residual,
        "rel_gap": sol.rel_gap,
        "objective_value": sol.objective_value,
    }
    raw = None
    if sol.status == "optimal":
        v = sol.values
        raw = ClassifierBRRaw(np.asarray(v["alpha_bar"]).reshape(-1), float(v["beta_bar"]), float(v["t"]), delta_prime)
    if raw is not None and sol.objective_value > 1e-7 and np.max(np.abs(raw.alpha_bar)) > 1e-9:
        policy = normalize_classifier(raw.alpha_bar, raw.beta_bar)
        diag["route"] = "socp"
    elif sol.status in ("optimal", "unbounded", "inaccurate"):
        # TP <= 1/2 (the scaled program collapses to zero) or a zero-variance direction
        alpha, beta = _fractional_classifier_search(model, adv, delta)
        policy = normalize_classifier(alpha, beta)
        diag["route"] = "fractional-search"
        log.info("classifier cone program degenerate (status=%s); used direct search", sol.status)
    else:
        raise SolverError("classifier best response failed", sol.status)
    tn = true_negative_prob(model, policy)
    if tn < 1.0 - delta - TN_TOL:
        raise SolverError(f"classifier best response violates TN >= 1 - delta (TN={tn:.8f})", sol.status)
    return BestResponse(policy, true_positive_prob(model, adv, policy), raw, diag)


# ----------------------------------------------------------------- adversary


def adversary_program(model: GaussianClassModel, clf: ClassifierPolicy, epsilon: float, beta_scaling: str = "perspective") -> conic.ConicProgram:
    """Perspective SDP in ``(A_bar, mu_bar, R_w, Z', t)``.

    ``beta_scaling="perspective"`` multiplies the bias by ``t`` in the
    objective; ``"unscaled"`` leaves it as a constant offset.
    """
    if beta_scaling not in ("perspective", "unscaled"):
        raise DomainError(f"unknown beta_scaling {beta_scaling!r}")
    n = model.dim
    alpha = clf.weights
    M_inv = np.linalg.inv(model.second_moment_pos)
    M_inv = 0.5 * (M_inv + M_inv.T)
    I = np.eye(n)
    prog = conic.ConicProgram()
    A = prog.variable("a_bar", (n, n))
    mu = prog.variable("mu_w_bar", n)
    R = prog.variable("r_w", (n, n))
    Z = prog.symmetric("z_prime", n)
    t = prog.variable("t")
    obj = -(alpha.reshape(1, n) @ A @ model.mu_pos) - mu.T @ alpha
    prog.maximize(obj - t * clf.bias if beta_scaling == "perspective" else obj - clf.bias)
    sq2 = math.sqrt(2.0)
    prog.add_soc(
        1.0,
        conic.vstack([sq2 * (psd_sqrt(model.sigma_pos) @ (A.T @ alpha)), sq2 * (R.T @ alpha)]),
        label="unit_variance",
    )
    tI = t * I
    lmi = conic.bmat(
        [
            [tI, None, None, R.T],
            [None, t, None, mu.T],
            [None, None, t * M_inv, tI - A.T],
            [R, mu, tI - A, Z],
        ]
    )
    prog.add_psd(lmi, label="budget_lmi")
    prog.add_le(Z.trace(), t * float(epsilon), label="budget_trace")
    prog.add_ge(t, label="t_nonneg")
    return prog


def _family_policy(alpha: np.ndarray, d: np.ndarray, shift: float, noise: float) -> AdversaryPolicy:
    """``A = I - w d^T/|w|^2``, ``mu_w = shift w/|w|^2``, ``S_w = noise w w^T/|w|^4``."""
    na2 = float(alpha @ alpha)
    n = alpha.shape[0]
    return AdversaryPolicy(
        np.eye(n) - np.outer(alpha, d) / na2,
        shift * alpha / na2,
        noise * np.outer(alpha, alpha) / na2**2,
    )


def family_cost(model: GaussianClassModel, alpha: np.ndarray, d: np.ndarray, shift: float, noise: float) -> float:
    return (float(d @ model.second_moment_pos @ d) + shift * shift + noise) / float(alpha @ alpha)


class _ReducedAdversary:
    """Vectorized evaluation of the reduced problem over shift directions ``d``.

    With ``p = d.mu_+ - (w.mu_+ + b)``, ``q = (w - d)^T S_+ (w - d)`` and the
    leftover budget ``r = eps |w|^2 - d^T M d``, the best split of ``r``
    between a mean push ``u`` and noise ``r - u^2`` is closed form.
    """

    def __init__(self, model: GaussianClassModel, clf: ClassifierPolicy, epsilon: float):
        self.model = model
        self.alpha = clf.weights
        self.beta = clf.bias
        self.budget = float(epsilon) * float(self.alpha @ self.alpha)
        self.M = model.second_moment_pos
        self.kappa = float(self.alpha @ model.mu_pos) + self.beta

    def split(self, d: np.ndarray):
        d = np.atleast_2d(d)
        p = d @ self.model.mu_pos - self.kappa
        diff = self.alpha - d
        q = np.einsum("ij,jk,ik->i", diff, self.model.sigma_pos, diff)
        r = np.maximum(self.budget - np.einsum("ij,jk,ik->i", d, self.M, d), 0.0)
        sr = np.sqrt(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            turn = np.where(p < 0, (q + r) / -p, np.inf)
        u = np.minimum(sr, turn)
        s = np.maximum(r - u * u, 0.0)
        return p, q, u, s

    def fn(self, d: np.ndarray) -> np.ndarray:
        p, q, u, s = self.split(d)
        mean = -(p + u)
        var = q + s
        out = np.empty(mean.shape)
        for i in range(mean.shape[0]):
            out[i] = 1.0 - prob_score_positive(float(mean[i]), float(var[i]))
        return out

    def score(self, d: np.ndarray) -> np.ndarray:
        """Monotone surrogate of FN, finite even in deep tails."""
        p, q, u, s = self.split(d)
        num = p + u
        var = q + s
        with np.errstate(divide="ignore", invalid="ignore"):
            val = num / np.sqrt(2.0 * var)
        val = np.where(var > 1e-300, val, np.where(num > 0, np.inf, np.where(num < 0, -np.inf, 0.0)))
        return val

    def project(self, d: np.ndarray) -> np.ndarray:
        used = float(d @ self.M @ d)
        if used > self.budget and used > 0:
            d = d * math.sqrt(self.budget / used)
        return d


def reduced_adversary_oracle(model: GaussianClassModel, clf: ClassifierPolicy, epsilon: float, resolution: int = 64) -> BestResponse:
    """Search the rank-one manipulation family on a polar grid, then polish.

    The shift direction is searched over the budget ellipse restricted to
    span{S_+^{-1} mu_+, w}, which contains every stationary point; a compass
    search in the full space polishes the best grid point.
    """
    alpha = clf.weights
    if not np.any(alpha != 0.0):
        raise DegeneratePolicyError("adversary response is undefined for zero classifier weights")
    if epsilon < 0:
        raise DomainError("epsilon must be nonnegative")
    if resolution < 1:
        raise DomainError("resolution must be positive")
    red = _ReducedAdversary(model, clf, epsilon)
    n = model.dim
    d_best = np.zeros(n)
    if red.budget > 0:
        # M-orthonormal basis of span{S_+^{-1} mu_+, w}
        basis = []
        for v in (np.linalg.solve(model.sigma_pos, model.mu_pos), alpha):
            for b in basis:
                v = v - (b @ red.M @ v) * b
            nv = math.sqrt(max(float(v @ red.M @ v), 0.0))
            if nv > 1e-10 * max(1.0, float(np.linalg.norm(v))):
                basis.append(v / nv)
        E = np.array(basis).T
        rho = np.linspace(0.0, 1.0, resolution + 1)
        phi = np.linspace(0.0, 2.0 * math.pi, 4 * resolution, endpoint=False)
        R, P = np.meshgrid(rho, phi, indexing="ij")
        coords = np.stack([R.ravel() * np.cos(P.ravel()), R.ravel() * np.sin(P.ravel())], axis=1)[:, : E.shape[1]]
        D = math.sqrt(red.budget) * coords @ E.T
        scores = red.score(D)
        d_best = D[int(np.argmax(scores))]
        d_best = _compass_polish(red, d_best, step=math.sqrt(red.budget) / resolution)
    p, q, u, s = (float(x[0]) for x in red.split(d_best))
    policy = _family_policy(alpha, d_best, -u, s)
    fn = false_negative_prob(model, policy, clf)
    return BestResponse(policy, fn, None, {"route": "reduced-oracle", "shift_direction": d_best.tolist(), "mean_push": u, "noise": s})


def _compass_polish(red: _ReducedAdversary, d: np.ndarray, step: float, min_step: float = 1e-11) -> np.ndarray:
    n = d.shape[0]
    dirs = np.vstack([np.eye(n), -np.eye(n)])
    best = float(red.score(d)[0])
    step = max(step, min_step)
    while step > min_step:
        cand = np.array([red.project(d + step * e) for e in dirs])
        vals = red.score(cand)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, d = float(vals[k]), cand[k]
        else:
            step *= 0.5
    return d


def adversary_best_response(
    model: GaussianClassModel,
    clf: ClassifierPolicy,
    epsilon: float,
    feas_tol: float = conic.DEFAULT_FEAS_TOL,
    gap_tol: float = conic.DEFAULT_GAP_TOL,
    beta_scaling: str = "perspective",
    resolution: int = 64,
) -> BestResponse:
    """Adversary policy maximizing FN subject to ``E|x - y|^2 <= epsilon``.

    Candidates: recoveries from the SDP (noise ``R R^T / t`` and ``R R^T / t^2``,
    each also shrunk onto the budget), the reduced oracle, and no manipulation.
    The feasible candidate with the largest closed-form FN wins; ties go to the
    earliest candidate.
    """
    if not np.any(clf.weights != 0.0):
        raise DegeneratePolicyError("adversary response is undefined for zero classifier weights")
    if epsilon < 0:
        raise DomainError("epsilon must be nonnegative")
    n = model.dim
    candidates: list[tuple[str, AdversaryPolicy]] = []
    raw = None
    diag: dict = {}
    try:
        sol = conic.solve(adversary_program(model, clf, epsilon, beta_scaling), feas_tol, gap_tol)
        diag.update(solver_status=sol.status, max_primal_residual=sol.max_primal_residual, rel_gap=sol.rel_gap, objective_value=sol.objective_value)
    except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover - defensive
        sol = None
        diag.update(solver_status="failed", solver_error=str(exc))
    if sol is not None and sol.status in ("optimal", "inaccurate"):
        v = sol.values
        raw = AdversaryBRRaw(v["a_bar"], np.asarray(v["mu_w_bar"]).reshape(-1), v["r_w"], v["z_prime"], float(v["t"]))
        if raw.t > 1e-9:
            gram = raw.r_w @ raw.r_w.T
            for tag, cov in (("sdp/t", gram / raw.t), ("sdp/t^2", gram / raw.t**2)):
                try:
                    candidates.append((tag, AdversaryPolicy(raw.a_bar / raw.t, raw.mu_w_bar / raw.t, cov)))
                except ValueError:
                    pass
            for tag, pol in list(candidates):
                shrunk = _shrink_to_budget(model, pol, epsilon)
                if shrunk is not None:
                    candidates.append((tag + "+shrink", shrunk))
    elif sol is not None:
        log.warning("adversary SDP returned status %s; relying on the reduced oracle", sol.status)
    oracle = reduced_adversary_oracle(model, clf, epsilon, resolution)
    candidates.append(("reduced-oracle", oracle.policy))
    candidates.append(("identity", identity_adversary(n)))

    best = None
    table = []
    for idx, (tag, pol) in enumerate(candidates):
        cost = manipulation_cost(model, pol)
        fn = false_negative_prob(model, pol, clf)
        ok = cost <= epsilon * (1.0 + BUDGET_REL_TOL) + 1e-15
        table.append({"candidate": tag, "false_negative": fn, "cost": cost, "feasible": ok})
        if ok and (best is None or fn > best[2]):
            best = (tag, pol, fn)
    if best is None:  # pragma: no cover - identity always has zero cost
        raise RuntimeError("no feasible adversary candidate; identity policy should always qualify")
    diag["winner"] = best[0]
    diag["candidates"] = table
    return BestResponse(best[1], best[2], raw, diag)


def _shrink_to_budget(model, pol: AdversaryPolicy, epsilon: float) -> AdversaryPolicy | None:
    cost = manipulation_cost(model, pol)
    if cost <= epsilon or cost == 0.0:
        return None
    lam = epsilon / cost
    n = model.dim
    return AdversaryPolicy(np.eye(n) - lam * (np.eye(n) - pol.a_matrix), lam * pol.w_mean, lam * pol.w_cov)
