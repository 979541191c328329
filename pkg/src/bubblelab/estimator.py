"""Parametric rolling-window estimator of (gamma0, gamma1) with HMM smoothing.

The window objective is the least-squares fit of squared increments to the
power-law variance,

    J(gamma0, gamma1) = (1/n) * sum_i (gamma0**2 * S_{i-1}**(2*gamma1) - (n/T) * (S_i - S_{i-1})**2)**2,

which is linear in gamma0**2 for fixed gamma1. The exponent is found on a
grid and refined with golden-section search; the resulting binary signal
(1 when gamma1 <= 1) is then smoothed with a two-state Viterbi decoder.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .martingale import classify_power_exponent
from .simkit import (STEPS_PER_DAY, PowerLawParams, PricePath, _pmap)

DEFAULT_GRID = (0.51, 2.0, 150)
DEFAULT_WINDOW = 21 * STEPS_PER_DAY
DEFAULT_STRIDE = STEPS_PER_DAY
MIN_WINDOW = 32

_INVPHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class WindowFit:
    gamma0: float
    gamma1: float
    objective_value: float
    window: tuple[int, int]
    degenerate: bool = False

    @property
    def params(self) -> PowerLawParams:
        if self.degenerate:
            raise ValidationError("degenerate window has no power-law parameters")
        return PowerLawParams(self.gamma0, self.gamma1)

    @property
    def label(self) -> int:
        # a window with no price movement carries no bubble evidence
        if self.degenerate:
            return 1
        return classify_power_exponent(self.gamma1).label


class _WindowObjective:
    """Profile objective in gamma1 with gamma0**2 solved in closed form."""

    def __init__(self, prices: np.ndarray, dt: float):
        s = prices[:-1]
        self.log_s = np.log(s)
        self.y = np.diff(prices) ** 2 / dt

    def gamma0_sq(self, g1: float) -> tuple[float, np.ndarray]:
        a = np.exp(2.0 * g1 * self.log_s)
        g0sq = max(0.0, float(a @ self.y) / float(a @ a))
        return g0sq, a

    def __call__(self, g1: float) -> float:
        g0sq, a = self.gamma0_sq(g1)
        r = g0sq * a - self.y
        return float(r @ r) / r.size

    def at(self, g0: float, g1: float) -> float:
        r = g0 * g0 * np.exp(2.0 * g1 * self.log_s) - self.y
        return float(r @ r) / r.size


def _golden(f, lo, hi, tol=1e-10, max_iter=200):
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _grid(gamma1_grid):
    lo, hi, steps = gamma1_grid
    if not (hi > lo > 0.5) or int(steps) != steps or steps < 2:
        raise ValidationError(f"invalid gamma1 grid {gamma1_grid}; need hi > lo > 1/2 and >= 2 steps")
    return np.linspace(lo, hi, int(steps))


def fit_power_window(segment, dt: float, gamma1_grid=DEFAULT_GRID,
                     window: tuple[int, int] | None = None) -> WindowFit:
    """Fit the power-law diffusion to one window of prices spaced ``dt`` trading years apart."""
    prices = np.asarray(segment, dtype=float)
    if prices.ndim != 1 or prices.size < MIN_WINDOW:
        raise ValidationError(f"window needs at least {MIN_WINDOW} prices, got {prices.size}")
    if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
        raise ValidationError("window prices must be positive and finite")
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    grid = _grid(gamma1_grid)
    window = window if window is not None else (0, prices.size - 1)
    obj = _WindowObjective(prices, dt)
    if not np.any(obj.y):
        return WindowFit(0.0, float("nan"), 0.0, window, degenerate=True)

    values = np.array([obj(g) for g in grid])
    k = int(np.argmin(values))
    best_g, best_v = float(grid[k]), float(values[k])
    g, v = _golden(obj, float(grid[max(k - 1, 0)]), float(grid[min(k + 1, grid.size - 1)]))
    if v < best_v:
        best_g, best_v = g, v
    g0sq, _ = obj.gamma0_sq(best_g)
    return WindowFit(math.sqrt(g0sq), best_g, best_v, window)


def window_starts(n_points: int, window_len: int, stride: int) -> np.ndarray:
    if int(window_len) != window_len or window_len < 2:
        raise ValidationError(f"window_len must be an integer >= 2, got {window_len}")
    if int(stride) != stride or stride < 1:
        raise ValidationError(f"stride must be a positive integer, got {stride}")
    if window_len > n_points:
        raise ValidationError(f"window_len {window_len} exceeds path length {n_points}")
    return np.arange(0, n_points - window_len + 1, stride)


def rolling_fit(path: PricePath, window_len: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE,
                gamma1_grid=DEFAULT_GRID, threads: int = 1) -> list[WindowFit]:
    starts = window_starts(len(path), window_len, stride)
    dt = path.dt_years
    return _pmap(lambda s: fit_power_window(path.prices[s:s + window_len], dt, gamma1_grid,
                                            window=(int(s), int(s + window_len - 1))),
                 starts, threads)


def labels_from_fits(fits: list[WindowFit], n_points: int, window_labels=None) -> np.ndarray:
    """Trailing assignment: each point takes the label of the latest window ending at or before it.

    Points before the first window ends take the first window's label.
    ``window_labels`` overrides the per-window labels (e.g. after smoothing).
    """
    if window_labels is None:
        window_labels = [f.label for f in fits]
    labels = np.empty(n_points, dtype=np.int64)
    ends = [f.window[1] for f in fits]
    for k, lab in enumerate(window_labels):
        lo = 0 if k == 0 else ends[k]
        hi = ends[k + 1] if k + 1 < len(fits) else n_points
        labels[lo:hi] = lab
    return labels


def rolling_classify(path: PricePath, window_len: int = DEFAULT_WINDOW, stride: int = DEFAULT_STRIDE,
                     gamma1_grid=DEFAULT_GRID, threads: int = 1) -> np.ndarray:
    """Raw per-point bubble signal (1 = true martingale) from rolling window fits."""
    fits = rolling_fit(path, window_len, stride, gamma1_grid, threads)
    return labels_from_fits(fits, len(path))


# ---------------------------------------------------------------- smoothing

def _check_dist(v, name):
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
        raise ValidationError(f"{name} entries must lie in [0, 1]")
    if np.any(np.abs(v.sum(axis=-1) - 1.0) > 1e-12):
        raise ValidationError(f"{name} rows must sum to 1")
    return v


@dataclass(frozen=True)
class HmmSpec:
    """Two-state HMM; state and observation index ``i`` both mean label ``i``."""

    transition: np.ndarray = field(default_factory=lambda: np.array([[0.99, 0.01], [0.01, 0.99]]))
    emission: np.ndarray = field(default_factory=lambda: np.array([[0.8, 0.2], [0.2, 0.8]]))
    initial: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))

    def __post_init__(self):
        t = _check_dist(self.transition, "transition")
        e = _check_dist(self.emission, "emission")
        i = _check_dist(self.initial, "initial")
        if t.shape != (2, 2) or e.shape != (2, 2) or i.shape != (2,):
            raise ValidationError("HmmSpec needs 2x2 transition/emission and a length-2 initial")
        for name, v in (("transition", t), ("emission", e), ("initial", i)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def persistent(cls, persistence: float, accuracy: float):
        p, a = persistence, accuracy
        return cls(np.array([[p, 1 - p], [1 - p, p]]), np.array([[a, 1 - a], [1 - a, a]]))


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def viterbi_logprob(states, obs, spec: HmmSpec) -> float:
    """Joint log-probability of a hidden state sequence and the observations."""
    la, lb, li = _log(spec.transition), _log(spec.emission), _log(spec.initial)
    lp = li[states[0]] + lb[states[0], obs[0]]
    for t in range(1, len(obs)):
        lp += la[states[t - 1], states[t]] + lb[states[t], obs[t]]
    return float(lp)


def hmm_smooth(raw, spec: HmmSpec | None = None) -> np.ndarray:
    """Most probable hidden label sequence (Viterbi, log space, ties go to label 1)."""
    spec = spec if spec is not None else HmmSpec()
    if not isinstance(spec, HmmSpec):
        raise ValidationError("spec must be an HmmSpec")
    obs = np.asarray(raw)
    if obs.ndim != 1 or not np.all((obs == 0) | (obs == 1)):
        raise ValidationError("raw labels must be a 1-D binary sequence")
    n = obs.size
    if n == 0:
        return obs.astype(np.int64)
    obs = obs.astype(np.int64).tolist()
    (a00, a01), (a10, a11) = _log(spec.transition).tolist()
    lb = _log(spec.emission).tolist()
    d0 = float(_log(spec.initial[0])) + lb[0][obs[0]]
    d1 = float(_log(spec.initial[1])) + lb[1][obs[0]]
    back0 = bytearray(n)
    back1 = bytearray(n)
    for t in range(1, n):
        o = obs[t]
        c0, c1 = d0 + a00, d1 + a10
        if c1 >= c0:
            back0[t], n0 = 1, c1
        else:
            n0 = c0
        c0, c1 = d0 + a01, d1 + a11
        if c1 >= c0:
            back1[t], n1 = 1, c1
        else:
            n1 = c0
        d0, d1 = n0 + lb[0][o], n1 + lb[1][o]
    out = np.empty(n, dtype=np.int64)
    s = 1 if d1 >= d0 else 0
    for t in range(n - 1, -1, -1):
        out[t] = s
        s = (back1 if s else back0)[t]
    return out


@dataclass(frozen=True)
class EstimatorConfig:
    window_len: int = DEFAULT_WINDOW
    stride: int = DEFAULT_STRIDE
    gamma1_grid: tuple = DEFAULT_GRID
    hmm: HmmSpec = field(default_factory=HmmSpec)
    smooth: bool = True


def pe_classify(path: PricePath, config: EstimatorConfig | None = None, threads: int = 1) -> np.ndarray:
    """Rolling parametric estimate followed by HMM smoothing.

    The decoder runs over the sequence of window labels (one observation
    per stride), then the smoothed labels are spread back to points.
    """
    config = config or EstimatorConfig()
    fits = rolling_fit(path, config.window_len, config.stride, config.gamma1_grid, threads)
    window_labels = np.array([f.label for f in fits], dtype=np.int64)
    if config.smooth:
        window_labels = hmm_smooth(window_labels, config.hmm)
    return labels_from_fits(fits, len(path), window_labels)
