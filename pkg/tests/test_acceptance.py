"""Acceptance criteria, each at its stated tolerance.

Every test records a one-line verdict; ``conftest.py`` prints them at the
end of the session. Run standalone with ``python tests/test_acceptance.py``.
"""
import itertools
import math
import time

import numpy as np
import pytest
from scipy.stats import norm

from bubblelab.backtest import EXPOSURE_TOL, MarketPanel, run_backtest, simulate_market_p
from bubblelab.datagen import DatasetSpec, generate_dataset
from bubblelab.estimator import EstimatorConfig, HmmSpec, _WindowObjective, fit_power_window, hmm_smooth
from bubblelab.evalkit import Corpus, compare_methods
from bubblelab.nnet import (FeatureStats, LstmLayerParams, TrainConfig, dataset_from_paths, layer_forward,
                            network_forward, train)
from bubblelab.nnet.checkpoint import from_bytes, to_bytes
from bubblelab.simkit import (PowerLawParams, RegimeChainSpec, RngSpec, doubling_summary, seconds_to_years,
                              simulate_doubling, simulate_ensemble, simulate_path, steps_for, terminal_prices)

from helpers import gradient_check, random_gradcheck_case, random_model

VERDICTS: dict[int, str] = {}


def record(n, ok, detail):
    VERDICTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    return ok


# ---------------------------------------------------------------- 1

def test_c1_doubling_distribution():
    t = time.perf_counter()
    w = simulate_doubling(4, 100_000, RngSpec(7))
    s = doubling_summary(w, 4)
    elapsed = time.perf_counter() - t
    z_win = (s["win_fraction"] - 15 / 16) / s["win_fraction_sigma"]
    losers_exact = bool(np.all(w[w != 1] == -15))
    # per-path variance of the fair game: 15/16 * 1 + 1/16 * 225 - 0 = 15
    z_mean = s["mean"] / math.sqrt(15 / w.size)
    ok = abs(z_win) < 4 and losers_exact and abs(z_mean) < 4 and elapsed < 5
    record(1, ok, f"win z={z_win:+.2f}, losers all -15: {losers_exact}, mean z={z_mean:+.2f}, {elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------- 2

@pytest.mark.xfail(strict=True, reason="at gamma=(0.15, 1.1) the analytic mean defect is ~exp(-444); "
                                       "the truncated Euler scheme is a submartingale (see decisions ledger)")
def test_c2_finite_sample_decreasing_average():
    t = time.perf_counter()
    s = terminal_prices(RegimeChainSpec.single(PowerLawParams(0.15, 1.1)), 1.0, 5000, 1e-3, 10_000, RngSpec(0))
    elapsed = time.perf_counter() - t
    se = s.std(ddof=1) / math.sqrt(s.size)
    z = (s.mean() - 1.0) / se
    ok = z < -2 and elapsed < 120
    record(2, ok, f"mean {s.mean():.6f}, z={z:+.2f} (need < -2), {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 3

def truncation_bound(g0, g1, dt, n, floor):
    """Upper bound on P(any truncation): leave [floor, inf) or draw a shock below -floor**(1-g1)/(g0*sqrt(dt))."""
    T = n * dt
    sig = g0 * floor ** (g1 - 1)  # largest log-volatility above ``floor``
    leave = 2 * norm.cdf(-(math.log(1 / floor) - 0.5 * sig**2 * T) / (sig * math.sqrt(T)))
    return leave + n * norm.cdf(-floor ** (1 - g1) / (g0 * math.sqrt(dt)))


def test_c3_discrete_martingale():
    g0, g1, dt, n = 0.15, 0.9, 1e-2, 100
    bound = truncation_bound(g0, g1, dt, n, 1e-3)
    s = terminal_prices(RegimeChainSpec.single(PowerLawParams(g0, g1)), 1.0, n, dt, 10_000, RngSpec(3))
    z = (s.mean() - 1.0) / (s.std(ddof=1) / math.sqrt(s.size))
    ok = bound < 1e-12 and abs(z) < 4
    record(3, ok, f"P(truncation) <= {bound:.1e}, mean {s.mean():.5f}, z={z:+.2f}")
    assert ok


# ---------------------------------------------------------------- 4

def test_c4_estimator_recovery():
    n, dt = steps_for(3), seconds_to_years(120)
    medians = {}
    for g1 in (0.9, 1.1):
        spec = RegimeChainSpec.single(PowerLawParams(0.15, g1))
        fits = [fit_power_window(simulate_path(spec, 1.0, n, dt, RngSpec(seed)).prices, dt).gamma1
                for seed in range(20)]
        medians[g1] = float(np.median(fits))
    recovered = all(abs(m - g) <= 0.05 for g, m in medians.items())

    gen = np.random.default_rng(10)
    worst = 0.0
    path = simulate_path(RegimeChainSpec.single(PowerLawParams(0.15, 1.1)), 1.0, 20_000, dt, RngSpec(99))
    for _ in range(10):
        a = int(gen.integers(0, 20_000 - 400))
        obj = _WindowObjective(path.prices[a:a + 400], dt)
        g1 = float(gen.uniform(0.6, 1.9))
        g0sq, _ = obj.gamma0_sq(g1)
        scan = np.linspace(0.0, 2 * math.sqrt(g0sq) + 1e-3, 20_001)
        best = min(obj.at(g, g1) for g in scan)
        worst = max(worst, (obj.at(math.sqrt(g0sq), g1) - best) / best)
    closed_form = worst <= 1e-12
    ok = recovered and closed_form
    record(4, ok, f"median gamma1 {medians[0.9]:.4f} / {medians[1.1]:.4f}, "
                  f"closed form vs scan worst rel gap {worst:.1e}")
    assert ok


# ---------------------------------------------------------------- 5

def test_c5_gradient_check():
    errs = [gradient_check(*random_gradcheck_case(1000 + k)) for k in range(100)]
    worst = max(errs)
    ok = worst < 1e-4
    record(5, ok, f"100 configs, max relative error {worst:.2e}")
    assert ok


# ---------------------------------------------------------------- 6

S0_DESK = 50.0


def test_c6_desk_scale_comparison():
    t_all = time.perf_counter()
    n = steps_for(1)
    train_spec = DatasetSpec(16, n, rng=RngSpec(11), s0=S0_DESK)
    test_spec = DatasetSpec(20, n, rng=RngSpec(22), s0=S0_DESK)
    train_pairs = generate_dataset(train_spec)
    stats = FeatureStats.fit([p.prices for p, _ in train_pairs])
    cfg = TrainConfig(epochs=8, hidden_dim=16, chunk_len=512, batch_size=16, rng=RngSpec(5))
    model = train(dataset_from_paths(train_pairs, stats), cfg, stats=stats,
                  metadata={"train_dataset": train_spec.to_dict()}).model
    res = compare_methods(Corpus(generate_dataset(test_spec), test_spec), model, EstimatorConfig())
    elapsed = time.perf_counter() - t_all
    net, pe = res.network.detection_pct, res.estimator.detection_pct
    tn, tp = res.timings["network"], res.timings["estimator"]
    ok = net > pe and net >= 70 and tn < tp and elapsed < 1800
    record(6, ok, f"network {net:.2f}% vs PE+HMM {pe:.2f}%, classify {tn:.1f}s vs {tp:.1f}s, "
                  f"total {elapsed / 60:.1f} min")
    assert ok


# ---------------------------------------------------------------- 7

def test_c7_backtest_null():
    spec = RegimeChainSpec.single(PowerLawParams(0.15, 0.9))
    dt = seconds_to_years(120)
    pnl, worst = [], 0.0
    for seed in range(200):
        panel = simulate_market_p(5, 0.05, spec, 0.3, 0.1, dt, RngSpec(seed))
        gen = RngSpec(seed).generator(7)
        signals = {s: gen.integers(0, 2, len(panel)) for s in panel.symbols}
        led = run_backtest(panel, signals, rebalance_stride=195)
        pnl.append(led.final_pnl)
        worst = max(worst, led.max_exposure_violation())
    pnl = np.array(pnl)
    z = pnl.mean() / (pnl.std(ddof=1) / math.sqrt(pnl.size))
    ok = abs(z) < 4 and worst <= EXPOSURE_TOL
    record(7, ok, f"mean P&L {pnl.mean():+.3f}, z={z:+.2f}, worst |net|/gross {worst:.1e}")
    assert ok


# ---------------------------------------------------------------- 8

def signal_market(seed, n_assets=20, dt=1e-4, p_switch=4e-4):
    calm = PowerLawParams(0.3, 0.9)
    cycling = RegimeChainSpec.homogeneous([calm, PowerLawParams(2.0, 2.0)],
                                          [[1 - p_switch, p_switch], [p_switch, 1 - p_switch]])
    specs = [cycling if i % 2 == 0 else RegimeChainSpec.single(calm) for i in range(n_assets)]
    m = simulate_market_p(n_assets, 0.0, specs, 0.0, 1.0, dt, RngSpec(seed))
    return MarketPanel(m.times, m.assets, np.ones(len(m)), m.truth)


def test_c8_backtest_signal():
    dt = 1e-4
    pnl = []
    for seed in range(50):
        panel = signal_market(seed, dt=dt)
        # monthly holding periods; see the decisions ledger for why daily ones cannot show the effect
        pnl.append(run_backtest(panel, panel.truth, rebalance_stride=round(1 / 12 / dt)).final_pnl)
    pnl = np.array(pnl)
    se = pnl.std(ddof=1) / math.sqrt(pnl.size)
    ok = pnl.mean() > 2 * se
    record(8, ok, f"mean P&L {pnl.mean():+.1f} vs 2 SE = {2 * se:.1f}")
    assert ok


# ---------------------------------------------------------------- 9

def test_c9_property_suites():
    checks = {}
    gen = np.random.default_rng(0)
    model = random_model(gen, 2, 4)
    probs = network_forward(model, gen.normal(0, 3, (200, 2)))
    checks["softmax"] = bool(np.all(np.abs(probs.sum(axis=1) - 1) <= 1e-12) and np.all((probs > 0) & (probs < 1)))

    p = LstmLayerParams(gen.normal(0, 3, (16, 2)), gen.normal(0, 3, (16, 4)), gen.normal(0, 3, 16))
    _, (_, gates, _, tc, _) = layer_forward(p, gen.normal(0, 3, (100, 3, 2)))
    checks["gates"] = bool(np.all((gates[..., :12] >= 0) & (gates[..., :12] <= 1))
                           and np.all(np.abs(gates[..., 12:]) <= 1) and np.all(np.abs(tc) <= 1))

    spec = HmmSpec.persistent(0.9, 0.8)
    checks["hmm flips"] = all(
        np.count_nonzero(np.diff(hmm_smooth(bits, spec))) <= np.count_nonzero(np.diff(bits))
        for n in range(1, 13) for bits in itertools.product((0, 1), repeat=n))

    data = to_bytes(model)
    checks["checkpoint"] = to_bytes(from_bytes(data)) == data

    chain = RegimeChainSpec.homogeneous([PowerLawParams(0.15, 0.9), PowerLawParams(0.15, 1.1)],
                                        [[0.99, 0.01], [0.01, 0.99]])
    a = simulate_ensemble(chain, 1.0, 500, 1e-4, 16, RngSpec(4), threads=1)
    b = simulate_ensemble(chain, 1.0, 500, 1e-4, 16, RngSpec(4), threads=4)
    c = [simulate_path(chain, 1.0, 500, 1e-4, RngSpec(4, k)) for k in reversed(range(16))][::-1]
    checks["ensemble order"] = all(np.array_equal(x.prices, y.prices) and np.array_equal(x.prices, z.prices)
                                   for x, y, z in zip(a, b, c))
    ok = all(checks.values())
    record(9, ok, ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                fn()
            except AssertionError:
                pass
    for n in sorted(VERDICTS):
        print(VERDICTS[n])
