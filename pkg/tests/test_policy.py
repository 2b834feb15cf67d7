import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from advsvm import (
    AdversaryPolicy,
    ClassifierPolicy,
    apply_adversary,
    classify,
    identity_adversary,
    manipulation_cost,
    normalize_classifier,
    synthetic_example,
)
from advsvm.errors import DegeneratePolicyError, DomainError, FeasibilityError
from advsvm.policy import policy_from_dict

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_identity_adversary():
    p = identity_adversary(2)
    np.testing.assert_array_equal(p.a_matrix, np.eye(2))
    np.testing.assert_array_equal(p.w_mean, np.zeros(2))
    np.testing.assert_array_equal(p.w_cov, np.zeros((2, 2)))
    x = np.array([0.3, -7.0])
    np.testing.assert_array_equal(apply_adversary(p, x, 1, 0), x)
    assert manipulation_cost(synthetic_example(), p) == 0.0


def test_negatives_pass_through():
    p = AdversaryPolicy(2 * np.eye(2), [5.0, 5.0], np.eye(2))
    x = np.array([1.0, 2.0])
    np.testing.assert_array_equal(apply_adversary(p, x, -1, 123), x)


def test_deterministic_affine_map():
    p = AdversaryPolicy(2 * np.eye(2), [1.0, 0.0], np.zeros((2, 2)))
    np.testing.assert_allclose(apply_adversary(p, [1.0, 1.0], 1, 0), [3.0, 2.0])


def test_noise_is_seeded():
    p = AdversaryPolicy(np.eye(2), [0.0, 0.0], np.eye(2))
    a = apply_adversary(p, [0.0, 0.0], 1, 7)
    np.testing.assert_array_equal(a, apply_adversary(p, [0.0, 0.0], 1, 7))
    assert not np.array_equal(a, apply_adversary(p, [0.0, 0.0], 1, 8))


def test_adversary_rejects_indefinite_noise():
    with pytest.raises(FeasibilityError):
        AdversaryPolicy(np.eye(2), [0, 0], np.diag([1.0, -0.1]))


def test_classify_cases():
    assert classify(ClassifierPolicy([1.0, 0.0], 0.0), [2.0, -5.0]) == 1
    assert classify(ClassifierPolicy([1.0, 0.0], 0.0), [-2.0, 5.0]) == -1
    assert classify(ClassifierPolicy([0.0, 0.0], 0.0), [123.0, -4.0]) == 1
    out = classify(ClassifierPolicy([1.0, 0.0], 0.0), np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert out.tolist() == [1, -1]


def test_classifier_box():
    with pytest.raises(DomainError):
        ClassifierPolicy([1.5, 0.0], 0.0)


def test_normalize_examples():
    p = normalize_classifier([2.0, 0.0], 4.0)
    np.testing.assert_array_equal(p.weights, [0.5, 0.0])
    assert p.bias == 1.0
    q = normalize_classifier([1.0, 0.0], 0.5)
    np.testing.assert_array_equal(q.weights, [1.0, 0.0])
    assert q.bias == 0.5
    with pytest.raises(DegeneratePolicyError):
        normalize_classifier([0.0, 0.0], 0.0)


@given(st.lists(finite, min_size=1, max_size=5), finite, st.floats(1e-3, 1e3))
def test_normalize_is_scale_invariant_and_decision_preserving(alpha, beta, c):
    a = np.array(alpha)
    if max(np.max(np.abs(a)), abs(beta)) < 1e-9:
        return
    p = normalize_classifier(a, beta)
    assert max(np.max(np.abs(p.weights)), abs(p.bias)) == 1.0
    q = normalize_classifier(c * a, c * beta)
    np.testing.assert_allclose(q.weights, p.weights, atol=1e-12)
    assert q.bias == pytest.approx(p.bias, abs=1e-12)
    # positive rescaling keeps the sign of every score
    y = np.random.default_rng(0).standard_normal((20, a.size)) * 10
    raw = y @ a + beta
    mask = np.abs(raw) > 1e-6 * (np.abs(y) @ np.abs(a) + abs(beta))
    assert np.all(np.sign(raw[mask]) == np.sign(p.score(y)[mask]))


def test_policy_dict_roundtrip():
    adv = AdversaryPolicy([[1.0, 0.2], [0.0, 0.9]], [0.1, -0.3], [[0.5, 0.1], [0.1, 0.2]])
    clf = ClassifierPolicy([0.3, -1.0], 0.25)
    a2 = policy_from_dict(adv.to_dict())
    c2 = policy_from_dict(clf.to_dict())
    np.testing.assert_array_equal(a2.a_matrix, adv.a_matrix)
    np.testing.assert_array_equal(a2.w_cov, adv.w_cov)
    np.testing.assert_array_equal(c2.weights, clf.weights)
    assert c2.bias == clf.bias
