import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from advsvm import (
    AdversaryPolicy,
    ClassifierPolicy,
    GameConfig,
    empirical_rates,
    evaluate,
    false_negative_prob,
    feasible_adversary,
    feasible_classifier,
    identity_adversary,
    manipulation_cost,
    true_negative_prob,
    true_positive_prob,
)
from advsvm.errors import DimensionError, DomainError

from conftest import random_adversary, random_classifier, random_model, true_cost

seeds = st.integers(0, 2**32 - 1)


def _tp_oracle(model, adv, clf):
    a, w = adv.a_matrix, clf.weights
    mean = w @ (a @ model.mu_pos + adv.w_mean) + clf.bias
    sd = np.sqrt(w @ (a @ model.sigma_pos @ a.T + adv.w_cov) @ w)
    return norm.sf(0.0, loc=mean, scale=sd)


def test_baseline_values(synth, baseline):
    ident = identity_adversary(2)
    assert true_positive_prob(synth, ident, baseline) == pytest.approx(0.9993, abs=1e-3)
    assert false_negative_prob(synth, ident, baseline) == pytest.approx(0.0007, abs=1e-3)
    assert true_negative_prob(synth, baseline) == pytest.approx(0.9900, abs=1e-3)


def test_zero_margin_gives_half(synth):
    clf = ClassifierPolicy([1.0, -1.0], 0.0)  # mu_+ = (3, 3) sits on the boundary
    assert true_positive_prob(synth, identity_adversary(2), clf) == 0.5


def test_everything_positive(synth):
    clf = ClassifierPolicy([0.0, 0.0], 1.0)
    assert true_negative_prob(synth, clf) == 0.0
    assert true_positive_prob(synth, identity_adversary(2), clf) == 1.0


def test_degenerate_variance_convention(synth):
    collapse = AdversaryPolicy(np.zeros((2, 2)), [0.5, 0.0], np.zeros((2, 2)))
    assert true_positive_prob(synth, collapse, ClassifierPolicy([1.0, 0.0], -0.25)) == 1.0
    assert true_positive_prob(synth, collapse, ClassifierPolicy([1.0, 0.0], -0.75)) == 0.0
    assert true_positive_prob(synth, collapse, ClassifierPolicy([1.0, 0.0], -0.5)) == 0.5


@settings(max_examples=200)
@given(seeds)
def test_tp_matches_gaussian_cdf(seed):
    rng = np.random.default_rng(seed)
    m, adv, clf = random_model(rng), random_adversary(rng), random_classifier(rng)
    assert true_positive_prob(m, adv, clf) == pytest.approx(_tp_oracle(m, adv, clf), abs=1e-13)
    sd = np.sqrt(clf.weights @ m.sigma_neg @ clf.weights)
    tn = norm.cdf(0.0, loc=clf.weights @ m.mu_neg + clf.bias, scale=sd)
    assert true_negative_prob(m, clf) == pytest.approx(tn, abs=1e-13)


@settings(max_examples=200)
@given(seeds)
def test_constant_sum(seed):
    rng = np.random.default_rng(seed)
    m, adv, clf = random_model(rng, 3), random_adversary(rng, 3), random_classifier(rng, 3)
    assert abs(true_positive_prob(m, adv, clf) + false_negative_prob(m, adv, clf) - 1.0) <= 1e-12


@settings(max_examples=100)
@given(seeds, st.floats(1e-3, 1e3))
def test_rates_invariant_to_classifier_scale(seed, c):
    rng = np.random.default_rng(seed)
    m, adv = random_model(rng), random_adversary(rng)
    w, b = rng.uniform(-1, 1, 2), rng.uniform(-1, 1)
    c = min(c, 1.0 / max(np.max(np.abs(w)), abs(b)))
    p, q = ClassifierPolicy(w, b), ClassifierPolicy(c * w, c * b)
    assert true_positive_prob(m, adv, p) == pytest.approx(true_positive_prob(m, adv, q), abs=1e-12)
    assert true_negative_prob(m, p) == pytest.approx(true_negative_prob(m, q), abs=1e-12)


def test_cost_examples(synth):
    assert manipulation_cost(synth, identity_adversary(2)) == 0.0
    zero = AdversaryPolicy(np.zeros((2, 2)), np.zeros(2), np.zeros((2, 2)))
    assert manipulation_cost(synth, zero) == pytest.approx(19.2, abs=1e-12)
    assert manipulation_cost(synth, zero) == pytest.approx(true_cost(synth, zero), abs=1e-12)


@settings(max_examples=100)
@given(seeds)
def test_cost_matches_expectation_without_mean_shift(seed):
    rng = np.random.default_rng(seed)
    m, adv = random_model(rng), random_adversary(rng)
    unshifted = AdversaryPolicy(adv.a_matrix, np.zeros(2), adv.w_cov)
    assert manipulation_cost(m, unshifted) == pytest.approx(true_cost(m, unshifted), rel=1e-12)


@settings(max_examples=100)
@given(seeds)
def test_cost_closed_form_omits_mean_cross_term(seed):
    # the closed form equals E|x - y|^2 plus 2 w_mean . (I - A) mu_+
    rng = np.random.default_rng(seed)
    m, adv = random_model(rng), random_adversary(rng)
    cross = 2.0 * adv.w_mean @ (np.eye(2) - adv.a_matrix) @ m.mu_pos
    assert manipulation_cost(m, adv) == pytest.approx(true_cost(m, adv) + cross, rel=1e-10, abs=1e-12)


def test_rates_match_monte_carlo():
    rng = np.random.default_rng(2024)
    for _ in range(3):
        m, adv, clf = random_model(rng), random_adversary(rng), random_classifier(rng)
        r = empirical_rates(m, adv, clf, 10**6, int(rng.integers(2**31)))
        assert abs(r.tp - true_positive_prob(m, adv, clf)) <= 4 * r.std_err_tp
        assert abs(r.tn - true_negative_prob(m, clf)) <= 4 * r.std_err_tn


def test_feasibility_checks(synth, baseline):
    assert feasible_classifier(synth, baseline, 0.01)
    assert not feasible_classifier(synth, baseline, 0.005)
    adv = AdversaryPolicy(0.8 * np.eye(2), [0.1, 0.1], 0.1 * np.eye(2))
    cost = manipulation_cost(synth, adv)
    assert feasible_adversary(synth, adv, cost)
    scaled = AdversaryPolicy(np.eye(2) - 1.1 * (np.eye(2) - adv.a_matrix), 1.1 * adv.w_mean, 1.1 * adv.w_cov)
    assert not feasible_adversary(synth, scaled, cost)
    assert feasible_adversary(synth, identity_adversary(2), 0.0)


def test_evaluate_bundle(synth, baseline):
    g = evaluate(synth, identity_adversary(2), baseline)
    assert g.true_positive + g.false_negative == pytest.approx(1.0, abs=1e-15)
    d = g.to_dict(0.01, 2.0)
    assert set(d) >= {"true_positive", "false_negative", "true_negative", "manipulation_cost", "delta", "epsilon"}


def test_dimension_mismatch(synth):
    with pytest.raises(DimensionError):
        true_positive_prob(synth, identity_adversary(3), ClassifierPolicy([1.0, 0.0], 0.0))


@pytest.mark.parametrize(
    "kwargs",
    [{"delta": 0.0}, {"delta": 0.5}, {"epsilon": -1.0}, {"varpi": 1.0}, {"max_iters": 0}, {"conv_tol": 0.0}],
)
def test_config_validation(kwargs):
    with pytest.raises(DomainError):
        GameConfig(**kwargs)
