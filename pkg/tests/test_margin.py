import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psidim.errors import ValidationError
from psidim.margin import (REJECTED, MarginConfig, Operator, classify, delta,
                           delta_gamma_sharp, delta_star, empirical_margin_risk,
                           empirical_zero_one_risk, m_x, multiclass_margin,
                           pi_gamma)

# dyadic values keep every half-gap exact
dyadic = st.integers(-4000, 4000).map(lambda i: i / 16.0)


def score_vectors(min_q=3, max_q=6):
    return st.integers(min_q, max_q).flatmap(
        lambda q: st.lists(dyadic, min_size=q, max_size=q)).map(np.array)


@pytest.mark.parametrize("v,expected", [
    ((3, 1, 0), 1), ((2, 2, 0), REJECTED), ((0, 0, 4), 3)])
def test_classify_examples(v, expected):
    assert classify(v) == expected


def test_classify_vectorised():
    out = classify([[3, 1, 0], [2, 2, 0], [0, 0, 4]])
    assert list(out) == [1, REJECTED, 3]


@pytest.mark.parametrize("v,y,expected", [
    ((3, 1, 0), 1, 1.0), ((3, 1, 0), 2, -1.0), ((7, 7, 7), 3, 0.0)])
def test_multiclass_margin_examples(v, y, expected):
    assert multiclass_margin(v, y) == expected


@pytest.mark.parametrize("y", [0, 4, -1])
def test_multiclass_margin_bad_label(y):
    with pytest.raises(ValidationError):
        multiclass_margin((3, 1, 0), y)


@pytest.mark.parametrize("v,expected", [
    ((3, 1, 0), (1, -1, -1.5)), ((2.5, 2.5, 2.5), (0, 0, 0)), ((0, 0, 4), (-2, -2, 2))])
def test_delta_examples(v, expected):
    np.testing.assert_array_equal(delta(v), expected)


@pytest.mark.parametrize("v,expected", [((3, 1, 0), 1.0), ((-1, -1, -1), 0.0), ((0, 0, 4), 2.0)])
def test_m_x_examples(v, expected):
    assert m_x(v) == expected


@pytest.mark.parametrize("v,expected", [
    ((3, 1, 0), (1, -1, -1)), ((5, 5, 5), (0, 0, 0)), ((0, 0, 4), (-2, -2, 2))])
def test_delta_star_examples(v, expected):
    np.testing.assert_array_equal(delta_star(v), expected)


@pytest.mark.parametrize("v,gamma,expected", [
    ((1, -1, -1.5), 0.5, (0.5, -0.5, -0.5)),
    ((0.2, -0.3, 0), 0.5, (0.2, -0.3, 0)),
    ((1, -1, -1.5), 1.0, (1, -1, -1))])
def test_pi_gamma_examples(v, gamma, expected):
    np.testing.assert_array_equal(pi_gamma(v, gamma), expected)


@pytest.mark.parametrize("gamma", [0.0, -1.0])
def test_pi_gamma_rejects_nonpositive(gamma):
    with pytest.raises(ValidationError):
        pi_gamma((1, 2, 3), gamma)


@pytest.mark.parametrize("op", [Operator.DELTA, Operator.DELTA_STAR])
def test_delta_gamma_sharp_examples(op):
    np.testing.assert_array_equal(
        delta_gamma_sharp((3, 1, 0), MarginConfig(0.5, op)), (0.5, -0.5, -0.5))
    np.testing.assert_array_equal(
        delta_gamma_sharp((4, 4, 4), MarginConfig(0.3, op)), (0, 0, 0))


def _scores_with_label_margin(values):
    # (2t, 0, 0) has delta_1 = t, so label 1 carries the requested margin
    return np.array([[2 * t, 0.0, 0.0] for t in values]), np.ones(len(values), dtype=int)


@pytest.mark.parametrize("values,gamma,expected", [
    ([1.2, 0.3, -0.5, 0.6], 0.5, 0.5),
    ([1.0, 1.0], 0.5, 0.0),
    ([1.2, 0.3, -0.5, 0.6], 0.7, 0.75)])
def test_margin_risk_examples(values, gamma, expected):
    scores, labels = _scores_with_label_margin(values)
    np.testing.assert_allclose(delta(scores)[:, 0], values)
    for op in Operator:
        assert empirical_margin_risk(scores, labels, MarginConfig(gamma, op)) == expected


def test_margin_risk_is_strict():
    scores, labels = _scores_with_label_margin([0.5])
    assert empirical_margin_risk(scores, labels, MarginConfig(0.5)) == 0.0


def test_zero_one_examples():
    assert empirical_zero_one_risk([[3, 1, 0], [3, 1, 0]], [1, 2]) == 0.5
    assert empirical_zero_one_risk([[2, 2, 2]], [1]) == 1.0
    assert empirical_zero_one_risk([[0, 0, 4]], [3]) == 0.0


def test_validation():
    with pytest.raises(ValidationError):
        delta((1, 2))  # Q = 2
    with pytest.raises(ValidationError):
        delta((1, np.nan, 0))
    with pytest.raises(ValidationError):
        empirical_zero_one_risk(np.zeros((0, 3)), [])
    with pytest.raises(ValidationError):
        empirical_zero_one_risk([[1, 2, 3]], [4])
    with pytest.raises(ValidationError):
        MarginConfig(0.0)
    with pytest.raises(ValidationError):
        Operator.parse("sigmoid")


@settings(max_examples=300, deadline=None)
@given(score_vectors())
def test_delta_image_structure(v):
    d = delta(v)
    assert (d > 0).sum() <= 1
    assert d.max() >= 0
    q = len(v)
    order = np.argsort(-v, kind="stable")
    for k in range(q):
        for l in range(k + 1, q):
            assert d[k] + d[l] <= 0
    assert d[order[0]] + d[order[1]] == 0


@settings(max_examples=300, deadline=None)
@given(score_vectors())
def test_delta_star_image_structure(v):
    s = delta_star(v)
    top = m_x(v)
    if top == 0:
        assert np.all(s == 0)
    else:
        assert top > 0
        assert (s == top).sum() == 1
        assert (s == -top).sum() == len(v) - 1


@settings(max_examples=300, deadline=None)
@given(score_vectors(), st.sampled_from([0.125, 0.5, 1.0, 3.0]))
def test_pi_gamma_properties(v, gamma):
    out = pi_gamma(v, gamma)
    assert np.all(np.abs(out) <= gamma)
    assert np.all((np.sign(out) == np.sign(v)) | (out == 0))
    np.testing.assert_array_equal(pi_gamma(out, gamma), out)
    inside = np.abs(v) <= gamma
    np.testing.assert_array_equal(out[inside], v[inside])


@settings(max_examples=200, deadline=None)
@given(score_vectors())
def test_margin_matches_delta_and_classify(v):
    d = delta(v)
    for y in range(1, len(v) + 1):
        assert multiclass_margin(v, y) == d[y - 1]
    c = classify(v)
    if c == REJECTED:
        assert m_x(v) == 0
    else:
        assert multiclass_margin(v, c) > 0


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12).flatmap(lambda m: st.tuples(
    st.lists(st.lists(dyadic, min_size=3, max_size=3), min_size=m, max_size=m),
    st.lists(st.integers(1, 3), min_size=m, max_size=m))),
    st.sampled_from([0.0625, 0.25, 0.5, 1.0, 2.0]))
def test_risk_invariances(sample, gamma):
    scores, labels = np.array(sample[0]), np.array(sample[1])
    risks = {op: empirical_margin_risk(scores, labels, MarginConfig(gamma, op)) for op in Operator}
    assert risks[Operator.DELTA] == risks[Operator.DELTA_STAR]
    # squashing by the clamp leaves the indicator unchanged
    for op in Operator:
        clamped = delta_gamma_sharp(scores, MarginConfig(gamma, op))
        raw = delta(scores) if op is Operator.DELTA else delta_star(scores)
        idx = np.arange(len(labels)), labels - 1
        np.testing.assert_array_equal(clamped[idx] < gamma, raw[idx] < gamma)
    assert empirical_zero_one_risk(scores, labels) <= risks[Operator.DELTA]


def test_random_continuous_vectors():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(2000, 5)) * rng.lognormal(size=(2000, 1))
    d = delta(v)
    assert np.all((d > 0).sum(axis=1) <= 1)
    s = delta_star(v)
    top = m_x(v)
    assert np.all((s == top[:, None]).sum(axis=1) == 1)
    assert np.all((s == -top[:, None]).sum(axis=1) == 4)
