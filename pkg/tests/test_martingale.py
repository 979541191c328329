import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bubblelab.errors import DomainError, ValidationError
from bubblelab.martingale import (MartingaleClass, classify_power_exponent, integral_tail_test,
                                  labels_from_regimes)
from bubblelab.simkit import PowerLawParams, PricePath, RegimeChainSpec

TM, SLM = MartingaleClass.TRUE_MARTINGALE, MartingaleClass.STRICT_LOCAL_MARTINGALE


@pytest.mark.parametrize("g1, want", [(0.9, TM), (1.1, SLM), (1.0, TM), (0.51, TM), (1.0 + 1e-6, SLM)])
def test_classify_power_exponent(g1, want):
    assert classify_power_exponent(g1) is want


def test_classify_rejects_outside_domain():
    for g in (0.5, 0.2, float("nan")):
        with pytest.raises(DomainError):
            classify_power_exponent(g)


@given(a=st.floats(0.51, 5.0), b=st.floats(0.51, 5.0))
def test_classification_is_monotone(a, b):
    lo, hi = sorted((a, b))
    assert classify_power_exponent(lo).label >= classify_power_exponent(hi).label


def grid(lo=1.0, hi=100.0, n=200):
    return np.geomspace(lo, hi, n)


@pytest.mark.parametrize("fn, want", [
    (lambda x: x, TM),
    (lambda x: x**1.5, SLM),
    (lambda x: np.full_like(x, 0.3), TM),
])
def test_tail_test_analytic_cases(fn, want):
    x = grid()
    assert integral_tail_test(x, fn(x), 1.0).cls is want


@pytest.mark.parametrize("g1", [0.6, 0.8, 1.0, 1.2, 1.5])
def test_tail_test_agrees_with_exponent(g1):
    x = grid(0.5, 500.0)
    res = integral_tail_test(x, 0.15 * x**g1, 0.5)
    assert abs(res.exponent - g1) < 1e-6
    assert res.cls is classify_power_exponent(g1)


def test_tail_test_input_checks():
    x = grid()
    with pytest.raises(DomainError):
        integral_tail_test(x, -x, 1.0)
    with pytest.raises(ValidationError):
        integral_tail_test(x[:10], x[:10], 1.0)
    with pytest.raises(ValidationError):
        integral_tail_test(grid(1, 10), grid(1, 10), 1.0)
    with pytest.raises(ValidationError):
        integral_tail_test(x[::-1], x, 1.0)


def two_state(g1a=0.9, g1b=1.1):
    return RegimeChainSpec.homogeneous([PowerLawParams(0.15, g1a), PowerLawParams(0.15, g1b)], np.eye(2))


def test_labels_all_one_regime():
    p = PricePath(0, 120, np.ones(6), regime_ids=np.zeros(6))
    assert np.array_equal(labels_from_regimes(p, two_state()), np.ones(6))
    p = PricePath(0, 120, np.ones(6), regime_ids=np.ones(6))
    assert np.array_equal(labels_from_regimes(p, two_state()), np.zeros(6))


def test_labels_flip_at_regime_changes():
    ids = np.array([0, 0, 1, 1, 1, 0, 1])
    p = PricePath(0, 120, np.ones(ids.size), regime_ids=ids)
    assert np.array_equal(labels_from_regimes(p, two_state()), 1 - ids)


def test_labels_ignore_unvisited_states():
    ids = np.array([0, 0, 1, 1])
    p = PricePath(0, 120, np.ones(4), regime_ids=ids)
    a = RegimeChainSpec.homogeneous([PowerLawParams(0.15, 0.9), PowerLawParams(0.15, 1.1),
                                     PowerLawParams(0.15, 0.7)], np.eye(3))
    b = RegimeChainSpec.homogeneous([PowerLawParams(0.15, 0.9), PowerLawParams(0.15, 1.1),
                                     PowerLawParams(0.15, 1.8)], np.eye(3))
    assert np.array_equal(labels_from_regimes(p, a), labels_from_regimes(p, b))


def test_labels_need_regimes():
    with pytest.raises(ValidationError):
        labels_from_regimes(PricePath(0, 120, np.ones(3)), two_state())
    with pytest.raises(ValidationError):
        labels_from_regimes(PricePath(0, 120, np.ones(3), regime_ids=[0, 2, 0]), two_state())
