import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bubblelab.errors import ValidationError
from bubblelab.estimator import (EstimatorConfig, HmmSpec, _WindowObjective, _grid, fit_power_window,
                                 hmm_smooth, labels_from_fits, pe_classify, rolling_classify, rolling_fit,
                                 viterbi_logprob, window_starts)
from bubblelab.simkit import PowerLawParams, PricePath, RegimeChainSpec, RngSpec, seconds_to_years, simulate_path

DT = seconds_to_years(120)


def exact_power_window(g0, g1, n=200, s0=1.0, dt=DT, seed=0):
    """Prices whose every squared increment equals g0**2 * S**(2*g1) * dt exactly (up to rounding)."""
    signs = np.random.default_rng(seed).choice([-1.0, 1.0], n)
    s = [s0]
    for e in signs:
        s.append(s[-1] + e * g0 * s[-1] ** g1 * math.sqrt(dt))
    return np.array(s)


def brute_viterbi(obs, spec):
    best, arg = -np.inf, None
    for states in itertools.product((0, 1), repeat=len(obs)):
        lp = viterbi_logprob(states, obs, spec)
        if lp > best + 1e-12:
            best, arg = lp, states
    return np.array(arg), best


# ---------------------------------------------------------------- window fits

def test_constant_window_is_degenerate():
    fit = fit_power_window(np.full(100, 2.0), DT)
    assert fit.degenerate and fit.gamma0 == 0 and fit.label == 1
    with pytest.raises(ValidationError):
        fit.params


def test_exact_power_data_recovered():
    for g1 in (0.7, 0.9, 1.1, 1.6):
        fit = fit_power_window(exact_power_window(0.15, g1, n=400, s0=3.0), DT)
        assert fit.gamma1 == pytest.approx(g1, abs=1e-4)
        assert fit.gamma0 == pytest.approx(0.15, rel=1e-3)


def test_closed_form_gamma0_matches_dense_scan():
    gen = np.random.default_rng(3)
    for _ in range(5):
        path = simulate_path(RegimeChainSpec.single(PowerLawParams(0.15, gen.uniform(0.7, 1.3))), 1.0, 300, DT,
                             RngSpec(int(gen.integers(1000))))
        obj = _WindowObjective(path.prices, DT)
        g1 = gen.uniform(0.6, 1.9)
        g0sq, _ = obj.gamma0_sq(g1)
        scan = np.linspace(0, 2 * math.sqrt(g0sq) + 0.1, 20001)
        vals = [obj.at(g, g1) for g in scan]
        assert obj.at(math.sqrt(g0sq), g1) <= min(vals) + 1e-12 * max(1.0, min(vals))


def test_fit_beats_every_grid_point():
    path = simulate_path(RegimeChainSpec.single(PowerLawParams(0.15, 1.1)), 1.0, 2000, DT, RngSpec(4))
    fit = fit_power_window(path.prices, DT)
    obj = _WindowObjective(path.prices, DT)
    assert all(fit.objective_value <= obj(g) for g in _grid((0.51, 2.0, 150)))
    assert fit.objective_value == pytest.approx(obj.at(fit.gamma0, fit.gamma1), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.01, 100.0), g1=st.floats(0.6, 1.8))
def test_rescaling_prices_keeps_exponent(c, g1):
    prices = exact_power_window(0.15, g1, n=200, s0=1.0)
    a = fit_power_window(prices, DT, (0.51, 2.0, 150))
    b = fit_power_window(c * prices, DT, (0.51, 2.0, 150))
    assert b.gamma1 == pytest.approx(a.gamma1, abs=1e-6)


def test_fit_input_checks():
    with pytest.raises(ValidationError):
        fit_power_window(np.ones(10), DT)
    with pytest.raises(ValidationError):
        fit_power_window(np.linspace(1, 2, 100), DT, (0.4, 2.0, 10))
    with pytest.raises(ValidationError):
        fit_power_window(np.r_[1.0, 0.0, np.ones(60)], DT)


# ---------------------------------------------------------------- rolling

def test_window_starts():
    assert window_starts(10, 4, 3).tolist() == [0, 3, 6]
    with pytest.raises(ValidationError):
        window_starts(10, 11, 1)


def test_single_window_gives_constant_series():
    path = simulate_path(RegimeChainSpec.single(PowerLawParams(0.15, 0.9)), 1.0, 500, DT, RngSpec(2))
    lab = rolling_classify(path, window_len=len(path), stride=7)
    assert np.unique(lab).size == 1


def test_trailing_assignment():
    class F:
        def __init__(self, end, label):
            self.window, self.label = (end - 4, end), label
    fits = [F(4, 0), F(6, 1), F(8, 0)]
    assert labels_from_fits(fits, 11).tolist() == [0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0]


def test_tm_path_mostly_ones():
    path = simulate_path(RegimeChainSpec.single(PowerLawParams(0.15, 0.9)), 1.0, 20_000, DT, RngSpec(6))
    lab = rolling_classify(path)
    assert lab.mean() > 0.5


def test_threads_do_not_change_fits():
    path = simulate_path(RegimeChainSpec.single(PowerLawParams(0.15, 1.1)), 1.0, 6000, DT, RngSpec(1))
    a = rolling_fit(path, 1000, 500, threads=1)
    b = rolling_fit(path, 1000, 500, threads=3)
    assert a == b


def test_pe_classify_length_and_values():
    path = simulate_path(RegimeChainSpec.single(PowerLawParams(0.15, 1.1)), 1.0, 6000, DT, RngSpec(1))
    lab = pe_classify(path, EstimatorConfig(window_len=1000, stride=200))
    assert lab.shape == (len(path),) and set(np.unique(lab)) <= {0, 1}


# ---------------------------------------------------------------- hmm

def test_isolated_flip_removed():
    obs = [1, 1, 1, 0, 1, 1, 1]
    spec = HmmSpec.persistent(0.99, 0.8)
    want, _ = brute_viterbi(obs, spec)
    assert want.tolist() == [1] * 7
    assert hmm_smooth(obs, spec).tolist() == want.tolist()


def test_all_ones_stay_ones():
    assert hmm_smooth(np.ones(50, dtype=int), HmmSpec.persistent(0.95, 0.7)).tolist() == [1] * 50


def test_identity_emission_is_identity():
    obs = np.array([0, 1, 1, 0, 0, 1, 0, 1])
    spec = HmmSpec(emission=np.eye(2))
    assert np.array_equal(hmm_smooth(obs, spec), obs)


def n_flips(x):
    return int(np.count_nonzero(np.diff(np.asarray(x))))


@pytest.mark.parametrize("n", range(1, 13))
def test_flip_reduction_exhaustive(n):
    spec = HmmSpec.persistent(0.9, 0.8)
    for bits in itertools.product((0, 1), repeat=n):
        out = hmm_smooth(bits, spec)
        assert n_flips(out) <= n_flips(bits)


@settings(max_examples=60, deadline=None)
@given(obs=st.lists(st.integers(0, 1), min_size=1, max_size=10),
       p=st.floats(0.55, 0.999), a=st.floats(0.55, 0.99))
def test_viterbi_is_map(obs, p, a):
    spec = HmmSpec.persistent(p, a)
    _, best = brute_viterbi(obs, spec)
    assert viterbi_logprob(hmm_smooth(obs, spec), obs, spec) == pytest.approx(best, abs=1e-9)


def test_hmm_spec_validation():
    with pytest.raises(ValidationError):
        HmmSpec(transition=np.array([[0.9, 0.2], [0.1, 0.9]]))
    with pytest.raises(ValidationError):
        hmm_smooth([0, 2, 1])
    assert hmm_smooth([]).size == 0
