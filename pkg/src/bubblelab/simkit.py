"""Discretized price simulation under regime-switching power-law diffusion.

Prices follow the explicit Euler recursion

    S_{t+dt} = max(0, S_t + gamma0 * S_t**gamma1 * sqrt(dt) * Z),   Z ~ N(0, 1)

with (gamma0, gamma1) selected per step by a Markov chain over regimes.
Zero is absorbing. Model time is measured in trading years; a
:class:`PricePath` stores its step in wall-clock seconds so that the
default calendar (120 s steps, 195 steps per day, 252 days per year)
maps one simulated year to 49,140 steps.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .errors import DomainError, ValidationError

STEP_SECONDS = 120.0
STEPS_PER_DAY = 195
DAYS_PER_YEAR = 252
SECONDS_PER_DAY = 6.5 * 3600.0
SECONDS_PER_YEAR = DAYS_PER_YEAR * SECONDS_PER_DAY

_U64 = 2**64
_ROW_TOL = 1e-12


def seconds_to_years(seconds: float) -> float:
    return seconds / SECONDS_PER_YEAR


def years_to_seconds(years: float) -> float:
    return years * SECONDS_PER_YEAR


def steps_for(years: float, step_seconds: float = STEP_SECONDS) -> int:
    """Number of steps covering ``years`` trading years at ``step_seconds``."""
    return int(round(years * SECONDS_PER_YEAR / step_seconds))


@dataclass(frozen=True)
class RngSpec:
    """A (seed, stream) pair naming one reproducible random substream."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) < _U64:
                raise ValidationError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self, *purpose: int) -> np.random.Generator:
        """Fresh generator for this substream; ``purpose`` keys derive independent children."""
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream), *purpose))
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, offset: int) -> "RngSpec":
        return RngSpec(self.seed, (int(self.stream) + int(offset)) % _U64)


@dataclass(frozen=True)
class PowerLawParams:
    """Diffusion coefficient sigma(x) = gamma0 * x**gamma1."""

    gamma0: float
    gamma1: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma0) and math.isfinite(self.gamma1)):
            raise ValidationError(f"non-finite power-law parameters {self}")
        if self.gamma0 <= 0:
            raise ValidationError(f"gamma0 must be positive, got {self.gamma0}")
        if self.gamma1 <= 0.5:
            raise ValidationError(f"gamma1 must exceed 1/2, got {self.gamma1}")

    def sigma(self, x):
        return self.gamma0 * np.power(x, self.gamma1)


def _check_stochastic(m: np.ndarray, k: int) -> None:
    if m.shape != (k, k):
        raise ValidationError(f"transition matrix shape {m.shape} does not match {k} states")
    if not np.all(np.isfinite(m)) or np.any(m < 0) or np.any(m > 1):
        raise ValidationError("transition matrix entries must lie in [0, 1]")
    if np.any(np.abs(m.sum(axis=1) - 1.0) > _ROW_TOL):
        raise ValidationError("transition matrix rows must sum to 1")


@dataclass(frozen=True)
class RegimeChainSpec:
    """Markov chain over power-law regimes with a piecewise-constant transition schedule.

    ``schedule`` is a list of ``(start_step, matrix)``; the matrix with the
    largest ``start_step <= t`` governs the transition out of step ``t``.
    """

    states: tuple[PowerLawParams, ...]
    schedule: tuple[tuple[int, np.ndarray], ...]
    initial_state: int = 0

    def __post_init__(self):
        states = tuple(self.states)
        if not states:
            raise ValidationError("at least one state is required")
        for s in states:
            if not isinstance(s, PowerLawParams):
                raise ValidationError(f"states must be PowerLawParams, got {type(s).__name__}")
        k = len(states)
        sched = []
        for start, m in self.schedule:
            m = np.array(m, dtype=float)
            m.setflags(write=False)
            _check_stochastic(m, k)
            sched.append((int(start), m))
        if not sched or sched[0][0] != 0:
            raise ValidationError("schedule must start at step 0")
        starts = [s for s, _ in sched]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValidationError("schedule start steps must be strictly increasing")
        if not 0 <= self.initial_state < k:
            raise ValidationError(f"initial_state {self.initial_state} out of range")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "schedule", tuple(sched))

    @classmethod
    def homogeneous(cls, states: Sequence[PowerLawParams], matrix, initial_state: int = 0):
        return cls(tuple(states), ((0, np.asarray(matrix, dtype=float)),), initial_state)

    @classmethod
    def single(cls, params: PowerLawParams):
        return cls.homogeneous([params], [[1.0]])

    @property
    def n_states(self) -> int:
        return len(self.states)

    def matrix_at(self, step: int) -> np.ndarray:
        current = self.schedule[0][1]
        for start, m in self.schedule:
            if start > step:
                break
            current = m
        return current

    def check_mixed(self) -> None:
        """Require at least one true-martingale and one bubble state."""
        g = [s.gamma1 for s in self.states]
        if not (any(x <= 1 for x in g) and any(x > 1 for x in g)):
            raise ValidationError("need at least one state with gamma1 <= 1 and one with gamma1 > 1")

    def _arrays(self):
        starts = np.array([s for s, _ in self.schedule], dtype=np.int64)
        cum = np.cumsum(np.stack([m for _, m in self.schedule]), axis=2)
        cum[:, :, -1] = 1.0
        g0 = np.array([s.gamma0 for s in self.states])
        g1 = np.array([s.gamma1 for s in self.states])
        return starts, cum, g0, g1


@dataclass
class PricePath:
    """Equally spaced price series; ``dt`` is in seconds, ``t0`` in epoch seconds."""

    t0: float
    dt: float
    prices: np.ndarray
    regime_ids: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=float)
        if self.prices.ndim != 1 or self.prices.size == 0:
            raise ValidationError("prices must be a non-empty 1-D sequence")
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(self.prices)) or np.any(self.prices < 0):
            raise ValidationError("prices must be finite and non-negative")
        zero = np.flatnonzero(self.prices == 0)
        if zero.size and np.any(self.prices[zero[0]:] != 0):
            raise ValidationError("prices must stay at zero once absorbed")
        if self.regime_ids is not None:
            self.regime_ids = np.asarray(self.regime_ids, dtype=np.int64)
            if self.regime_ids.shape != self.prices.shape:
                raise ValidationError("regime_ids must have the same length as prices")

    def __len__(self) -> int:
        return self.prices.size

    @property
    def n_steps(self) -> int:
        return self.prices.size - 1

    @property
    def dt_years(self) -> float:
        return seconds_to_years(self.dt)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.prices.size)

    def segment(self, start: int, stop: int) -> "PricePath":
        rid = None if self.regime_ids is None else self.regime_ids[start:stop]
        return PricePath(self.t0 + start * self.dt, self.dt, self.prices[start:stop], rid)


# ---------------------------------------------------------------- kernels

@njit(nogil=True, cache=True)
def _euler(s, g0, g1, sqdt, z):
    if s <= 0.0:
        return 0.0
    x = s + g0 * s**g1 * sqdt * z
    return x if x > 0.0 else 0.0


@njit(nogil=True, cache=True)
def _regime_kernel(initial, starts, cum, u, out):
    out[0] = initial
    j = 0
    nk = cum.shape[2]
    for t in range(1, out.shape[0]):
        while j + 1 < starts.shape[0] and starts[j + 1] <= t - 1:
            j += 1
        prev = out[t - 1]
        x = u[t - 1]
        k = 0
        while k < nk - 1 and x >= cum[j, prev, k]:
            k += 1
        out[t] = k


@njit(nogil=True, cache=True)
def _path_kernel(s0, g0, g1, regimes, sqdt, drift_dt, z, out):
    # the increment into step t uses the regime recorded at t
    out[0] = s0
    for t in range(1, out.shape[0]):
        s = out[t - 1]
        k = regimes[t]
        if drift_dt == 0.0:
            out[t] = _euler(s, g0[k], g1[k], sqdt, z[t - 1])
        elif s <= 0.0:
            out[t] = 0.0
        else:
            x = s + drift_dt * s + g0[k] * s**g1[k] * sqdt * z[t - 1]
            out[t] = x if x > 0.0 else 0.0


def step_euler(s: float, params: PowerLawParams, dt: float, z: float) -> float:
    """One Euler step of the driftless power-law diffusion, truncated at zero."""
    if not all(math.isfinite(v) for v in (s, dt, z)):
        raise DomainError("step_euler needs finite inputs")
    if s < 0:
        raise DomainError(f"price must be non-negative, got {s}")
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    return float(_euler(float(s), params.gamma0, params.gamma1, math.sqrt(dt), float(z)))


def sample_regimes(spec: RegimeChainSpec, u: np.ndarray) -> np.ndarray:
    """Regime sequence of length ``len(u) + 1`` driven by uniforms ``u``."""
    out = np.empty(u.size + 1, dtype=np.int64)
    if spec.n_states == 1:
        out[:] = 0
        return out
    starts, cum, _, _ = spec._arrays()
    _regime_kernel(spec.initial_state, starts, cum, np.ascontiguousarray(u, dtype=float), out)
    return out


def _validate_run(s0, n_steps, dt):
    if not (math.isfinite(s0) and s0 > 0):
        raise ValidationError(f"s0 must be positive, got {s0}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValidationError(f"n_steps must be a positive integer, got {n_steps}")
    if not (math.isfinite(dt) and dt > 0):
        raise ValidationError(f"dt must be positive, got {dt}")


def _simulate_prices(spec, s0, n_steps, dt, gen, drift=0.0, z=None):
    if z is None:
        z = gen.standard_normal(n_steps)
    if spec.n_states > 1:
        regimes = sample_regimes(spec, gen.random(n_steps))
    else:
        regimes = np.zeros(n_steps + 1, dtype=np.int64)
    _, _, g0, g1 = spec._arrays()
    prices = np.empty(n_steps + 1)
    _path_kernel(float(s0), g0, g1, regimes, math.sqrt(dt), drift * dt, z, prices)
    if not np.all(np.isfinite(prices)):
        bad = int(np.flatnonzero(~np.isfinite(prices))[0])
        raise DomainError(f"price overflowed to a non-finite value at step {bad}")
    return prices, regimes


def simulate_path(spec: RegimeChainSpec, s0: float, n_steps: int, dt: float,
                  rng: RngSpec, t0: float = 0.0) -> PricePath:
    """Simulate one path of ``n_steps`` steps; ``dt`` is in trading years."""
    if not isinstance(spec, RegimeChainSpec):
        raise ValidationError("spec must be a RegimeChainSpec")
    _validate_run(s0, n_steps, dt)
    prices, regimes = _simulate_prices(spec, s0, int(n_steps), dt, rng.generator())
    return PricePath(t0, years_to_seconds(dt), prices, regimes)


def _pmap(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def simulate_ensemble(spec: RegimeChainSpec, s0: float, n_steps: int, dt: float,
                      n_paths: int, rng: RngSpec, threads: int = 1) -> list[PricePath]:
    """Independent paths on substreams ``rng.stream + k`` for k in ``range(n_paths)``."""
    if int(n_paths) != n_paths or n_paths < 1:
        raise ValidationError(f"n_paths must be a positive integer, got {n_paths}")
    _validate_run(s0, n_steps, dt)
    return _pmap(lambda k: simulate_path(spec, s0, n_steps, dt, rng.substream(k)),
                 range(int(n_paths)), threads)


def terminal_prices(spec: RegimeChainSpec, s0: float, n_steps: int, dt: float,
                    n_paths: int, rng: RngSpec, threads: int = 1) -> np.ndarray:
    """Terminal prices of the paths :func:`simulate_ensemble` would return, without storing paths."""
    if int(n_paths) != n_paths or n_paths < 1:
        raise ValidationError(f"n_paths must be a positive integer, got {n_paths}")
    _validate_run(s0, n_steps, dt)

    def one(k):
        prices, _ = _simulate_prices(spec, s0, int(n_steps), dt, rng.substream(k).generator())
        return prices[-1]

    return np.array(_pmap(one, range(int(n_paths)), threads))


# ---------------------------------------------------------------- doubling strategy

_DOUBLING_BLOCK = 1 << 20


def simulate_doubling(n_rounds: int, n_paths: int, rng: RngSpec) -> np.ndarray:
    """Terminal wealth of ``n_paths`` gamblers doubling their stake for ``n_rounds`` fair tosses.

    Wealth starts at 0; after a win it stays at 1, otherwise
    ``X_n = X_{n-1} + (1 - X_{n-1}) * Z_n`` with ``Z_n = +-1``. Exact int64
    arithmetic, so at most 63 rounds are supported.
    """
    if int(n_rounds) != n_rounds or n_rounds < 1:
        raise ValidationError(f"n_rounds must be a positive integer, got {n_rounds}")
    if int(n_paths) != n_paths or n_paths < 1:
        raise ValidationError(f"n_paths must be a positive integer, got {n_paths}")
    if n_rounds > 63:
        raise DomainError(
            f"a loss after {n_rounds} rounds is -(2**{n_rounds} - 1), "
            "which does not fit in a signed 64-bit integer (max 63 rounds)")
    gen = rng.generator()
    out = np.empty(int(n_paths), dtype=np.int64)
    for lo in range(0, int(n_paths), _DOUBLING_BLOCK):
        m = min(_DOUBLING_BLOCK, int(n_paths) - lo)
        x = np.zeros(m, dtype=np.int64)
        for _ in range(int(n_rounds)):
            z = 2 * gen.integers(0, 2, size=m, dtype=np.int64) - 1
            playing = x != 1
            x = np.where(playing, x + (1 - x) * z, x)
        out[lo:lo + m] = x
    return out


def doubling_summary(wealth: np.ndarray, n_rounds: int) -> dict:
    """Win fraction, loss size, and the analytic reference values."""
    wealth = np.asarray(wealth)
    values, counts = np.unique(wealth, return_counts=True)
    p_win = 1.0 - 2.0 ** -n_rounds
    n = wealth.size
    return {
        "n_paths": int(n),
        "n_rounds": int(n_rounds),
        "win_fraction": float(np.mean(wealth == 1)),
        "expected_win_fraction": p_win,
        "win_fraction_sigma": math.sqrt(p_win * (1 - p_win) / n),
        "loss_value": -(2**n_rounds - 1),
        "mean": float(wealth.mean()),
        "histogram": {int(v): int(c) for v, c in zip(values, counts)},
    }
