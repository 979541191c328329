"""Zero-net-exposure long-short strategy on bubble signals.

At every rebalance the strategy shorts a fixed dollar amount of each asset
labelled as a bubble (label 0) and buys the index for the total shorted
dollars, so the book starts each holding period with zero net exposure.
Positions are held unchanged until the next rebalance.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .simkit import (STEPS_PER_DAY, PricePath, RegimeChainSpec, RngSpec, _simulate_prices,
                     _validate_run, years_to_seconds)

log = logging.getLogger(__name__)

INDEX = "INDEX"
EXPOSURE_TOL = 1e-9


# ---------------------------------------------------------------- jump filter

def jump_truncate(path: PricePath, k: float, window: int = STEPS_PER_DAY) -> PricePath:
    """Replace outlying log-returns by their local median and rebuild prices.

    A return is an outlier when it is more than ``k`` median absolute
    deviations from the median of the ``window`` returns centred on it
    (windows are shifted inward at the ends of the series).
    """
    if not k > 0:
        raise ValidationError(f"k must be positive, got {k}")
    prices = path.prices
    if prices.size - 1 < window:
        raise ValidationError(f"path has {prices.size - 1} returns, shorter than the window {window}")
    if np.any(prices <= 0):
        raise ValidationError("jump_truncate needs strictly positive prices")
    r = np.diff(np.log(prices))
    if math.isinf(k):
        return PricePath(path.t0, path.dt, prices.copy(), path.regime_ids)
    n = r.size
    windows = np.lib.stride_tricks.sliding_window_view(r, window)
    med_w = np.median(windows, axis=1)
    mad_w = np.median(np.abs(windows - med_w[:, None]), axis=1)
    start = np.clip(np.arange(n) - window // 2, 0, n - window)
    med, mad = med_w[start], mad_w[start]
    out = np.abs(r - med) > k * mad
    if not out.any():
        return PricePath(path.t0, path.dt, prices.copy(), path.regime_ids)
    r = np.where(out, med, r)
    rebuilt = np.empty_like(prices)
    rebuilt[0] = prices[0]
    rebuilt[1:] = prices[0] * np.exp(np.cumsum(r))
    return PricePath(path.t0, path.dt, rebuilt, path.regime_ids)


# ---------------------------------------------------------------- market data

@dataclass
class MarketPanel:
    """Aligned prices of ``N`` assets plus an index on shared timestamps."""

    times: np.ndarray
    assets: dict[str, np.ndarray]
    index: np.ndarray
    truth: dict[str, np.ndarray] | None = None  # regime labels, synthetic markets only

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.index = np.asarray(self.index, dtype=float)
        n = self.times.size
        if n < 2:
            raise ValidationError("panel needs at least two timestamps")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("panel timestamps must be strictly increasing")
        self.assets = {str(k): np.asarray(v, dtype=float) for k, v in self.assets.items()}
        if INDEX in self.assets:
            raise ValidationError(f"{INDEX!r} is reserved for the index column")
        for name, v in [*self.assets.items(), (INDEX, self.index)]:
            if v.shape != (n,):
                raise ValidationError(f"series {name} has {v.shape}, expected ({n},)")
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ValidationError(f"series {name} has missing or negative prices")

    @property
    def symbols(self) -> list[str]:
        return list(self.assets)

    def __len__(self) -> int:
        return self.times.size


def simulate_market_p(n_assets: int, drift: float, spec, correlation: float, horizon: float,
                      dt: float, rng: RngSpec, s0: float = 1.0) -> MarketPanel:
    """Physical-measure market: ``dS = drift * S dt + sigma(t, S) dB`` per asset.

    ``spec`` is one :class:`RegimeChainSpec` shared by all assets or a
    sequence with one per asset. Shocks load ``sqrt(correlation)`` on a
    common factor. ``horizon`` and ``dt`` are in trading years; the index is
    the equal-weighted average price. ``truth`` holds each asset's regime
    labels (1 = true martingale, 0 = bubble).
    """
    from .martingale import classify_power_exponent
    if not 0 <= correlation < 1:
        raise ValidationError(f"correlation must lie in [0, 1), got {correlation}")
    if int(n_assets) != n_assets or n_assets < 1:
        raise ValidationError("n_assets must be a positive integer")
    specs = [spec] * int(n_assets) if isinstance(spec, RegimeChainSpec) else list(spec)
    if len(specs) != n_assets or not all(isinstance(s, RegimeChainSpec) for s in specs):
        raise ValidationError("need one RegimeChainSpec, or one per asset")
    n_steps = int(round(horizon / dt))
    _validate_run(s0, n_steps, dt)
    factor = rng.generator(1).standard_normal(n_steps)
    a, b = math.sqrt(correlation), math.sqrt(1 - correlation)
    assets, truth = {}, {}
    for i, sp in enumerate(specs):
        gen = rng.substream(i).generator()
        z = a * factor + b * gen.standard_normal(n_steps)
        prices, regimes = _simulate_prices(sp, s0, n_steps, dt, gen, drift=drift, z=z)
        per_state = np.array([classify_power_exponent(s.gamma1).label for s in sp.states], dtype=np.int64)
        assets[f"A{i:03d}"] = prices
        truth[f"A{i:03d}"] = per_state[regimes]
    index = np.mean(np.stack(list(assets.values())), axis=0)
    times = np.arange(n_steps + 1) * years_to_seconds(dt)
    return MarketPanel(times, assets, index, truth)


# ---------------------------------------------------------------- ledger

@dataclass
class Rebalance:
    step: int
    shorts: dict[str, float]
    long_dollars: float
    cash: float
    value: float

    @property
    def short_dollars(self) -> float:
        return float(sum(self.shorts.values()))

    @property
    def net_exposure(self) -> float:
        return self.long_dollars - self.short_dollars


@dataclass
class PortfolioLedger:
    times: np.ndarray
    value: np.ndarray
    gross_short: np.ndarray
    gross_long: np.ndarray
    n_bubble_assets: np.ndarray
    rebalances: list[Rebalance] = field(default_factory=list)
    events: list[str] = field(default_factory=list)

    @property
    def final_pnl(self) -> float:
        return float(self.value[-1])

    def max_exposure_violation(self) -> float:
        """Largest ``|net| / gross`` over rebalances with open positions."""
        worst = 0.0
        for r in self.rebalances:
            gross = r.long_dollars + r.short_dollars
            if gross > 0:
                worst = max(worst, abs(r.net_exposure) / gross)
        return worst


def run_backtest(panel: MarketPanel, signals: dict[str, Sequence[int]], rebalance_stride: int = STEPS_PER_DAY,
                 short_cap_per_asset: float = 100.0, cost: float = 0.0) -> PortfolioLedger:
    """Evolve the long-short book over the panel.

    ``signals[symbol][t]`` is the label at step ``t`` (0 = bubble). ``cost``
    is a proportional charge on traded dollars.
    """
    if int(rebalance_stride) != rebalance_stride or rebalance_stride < 1:
        raise ValidationError("rebalance_stride must be a positive integer")
    if not short_cap_per_asset > 0 or cost < 0:
        raise ValidationError("short_cap_per_asset must be positive and cost non-negative")
    syms = panel.symbols
    if set(signals) != set(syms):
        raise ValidationError("signals must cover exactly the panel's assets")
    T = len(panel)
    sig = np.stack([np.asarray(signals[s]) for s in syms]) if syms else np.zeros((0, T))
    if sig.shape != (len(syms), T):
        raise ValidationError("every signal series must align with the panel")
    if not np.all((sig == 0) | (sig == 1)):
        raise ValidationError("signals must be binary")
    P = np.stack([panel.assets[s] for s in syms]) if syms else np.zeros((0, T))
    I = panel.index

    shares = np.zeros(len(syms))
    idx_shares = 0.0
    cash = 0.0
    value = np.empty(T)
    gshort = np.empty(T)
    glong = np.empty(T)
    nbub = np.zeros(T, dtype=np.int64)
    ledger = PortfolioLedger(panel.times, value, gshort, glong, nbub)
    for t in range(T):
        p = P[:, t]
        dead = (p == 0) & (shares != 0)
        for i in np.flatnonzero(dead):
            msg = f"{syms[i]} hit zero at step {t}; short closed at full gain"
            log.info(msg)
            ledger.events.append(msg)
            shares[i] = 0.0
        if t % rebalance_stride == 0 and t < T - 1:
            old_sh, old_idx = shares.copy(), idx_shares
            cash += float(shares @ p) + idx_shares * I[t]
            shares[:] = 0.0
            idx_shares = 0.0
            want = (sig[:, t] == 0)
            for i in np.flatnonzero(want & (p == 0)):
                ledger.events.append(f"{syms[i]} flagged at step {t} but already at zero; skipped")
            want &= p > 0
            shorts = {}
            if want.any():
                if not I[t] > 0:
                    raise ValidationError(f"index price is not positive at rebalance step {t}")
                shares[want] = -short_cap_per_asset / p[want]
                shorts = {syms[i]: short_cap_per_asset for i in np.flatnonzero(want)}
                long_dollars = short_cap_per_asset * int(want.sum())
                idx_shares = long_dollars / I[t]
                cash += short_cap_per_asset * int(want.sum()) - long_dollars
            if cost:
                traded = float(np.abs(shares - old_sh) @ p) + abs(idx_shares - old_idx) * I[t]
                cash -= cost * traded
            v = cash + float(shares @ p) + idx_shares * I[t]
            ledger.rebalances.append(Rebalance(t, shorts, idx_shares * I[t], cash, v))
        gshort[t] = 0.0 - float(shares @ p) if shares.any() else 0.0
        glong[t] = idx_shares * I[t]
        nbub[t] = int(np.count_nonzero(shares))
        value[t] = cash - gshort[t] + glong[t]
    return ledger
