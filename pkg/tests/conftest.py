import numpy as np
import pytest
from scipy.special import ndtr

from advsvm import (
    AdversaryPolicy,
    GaussianClassModel,
    classifier_best_response,
    identity_adversary,
    normalize_classifier,
    synthetic_example,
)


def random_spd(rng, n, lo=0.2, hi=2.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(rng.uniform(lo, hi, n)) @ q.T


def random_model(rng, n=2):
    mu_pos = rng.uniform(1.0, 3.0, n)
    mu_neg = -rng.uniform(0.0, 1.0, n)
    return GaussianClassModel(mu_pos, random_spd(rng, n), mu_neg, random_spd(rng, n))


def random_adversary(rng, n=2, scale=0.3):
    a = np.eye(n) + scale * rng.standard_normal((n, n))
    f = scale * rng.standard_normal((n, n))
    return AdversaryPolicy(a, scale * rng.standard_normal(n), f @ f.T)


def random_classifier(rng, n=2):
    return normalize_classifier(rng.standard_normal(n), rng.standard_normal())


def true_cost(model, adv):
    """E|x - y|^2 over the positive class, computed term by term."""
    d = np.eye(model.dim) - adv.a_matrix
    shift = d @ model.mu_pos - adv.w_mean
    return float(np.trace(d @ model.sigma_pos @ d.T) + shift @ shift + np.trace(adv.w_cov))


def grid_classifier_optimum(model, adv, delta, step=0.01):
    """Best TP over the (alpha, beta) box grid subject to TN >= 1 - delta."""
    g = np.round(np.arange(-1.0, 1.0 + step / 2, step), 10)
    a1, a2 = np.meshgrid(g, g, indexing="ij")
    W = np.stack([a1.ravel(), a2.ravel()], axis=1)
    m_pos = adv.a_matrix @ model.mu_pos + adv.w_mean
    s_pos = adv.a_matrix @ model.sigma_pos @ adv.a_matrix.T + adv.w_cov
    sd_pos = np.sqrt(np.einsum("ij,jk,ik->i", W, s_pos, W))
    sd_neg = np.sqrt(np.einsum("ij,jk,ik->i", W, model.sigma_neg, W))
    wp, wn = W @ m_pos, W @ model.mu_neg
    keep = (sd_neg > 0) & (sd_pos > 0)
    best = 0.0
    for b in g:
        tn = ndtr(-(wn[keep] + b) / sd_neg[keep])
        tp = ndtr((wp[keep] + b) / sd_pos[keep])
        feas = tn >= 1.0 - delta
        if np.any(feas):
            best = max(best, float(tp[feas].max()))
    return best


@pytest.fixture(scope="session")
def synth():
    return synthetic_example()


@pytest.fixture(scope="session")
def baseline(synth):
    return classifier_best_response(synth, identity_adversary(2), 0.01).policy


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
