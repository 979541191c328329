"""Labelled training corpora of regime-switching power-law paths.

Each path gets its own Markov chain over the state pool. The chain's
transition matrix is redrawn every ``redraw_interval`` steps with diagonal
persistence drawn uniformly from ``persistence``, so that regime
durations cannot be memorised from a fixed set of probabilities.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ValidationError
from .martingale import labels_from_regimes
from .simkit import (STEP_SECONDS, STEPS_PER_DAY, PowerLawParams, PricePath, RegimeChainSpec,
                     RngSpec, _pmap, seconds_to_years, simulate_path)

TWO_REGIME_POOL = (PowerLawParams(0.15, 0.9), PowerLawParams(0.15, 1.1))


@dataclass(frozen=True)
class DatasetSpec:
    """Corpus recipe. ``dt`` is in seconds; path ``k`` uses substream ``rng.stream + k``."""

    n_paths: int
    n_steps: int
    dt: float = STEP_SECONDS
    state_pool: tuple[PowerLawParams, ...] = TWO_REGIME_POOL
    persistence: tuple[float, float] = (0.995, 0.9999)
    redraw_interval: int = 21 * STEPS_PER_DAY
    rng: RngSpec = field(default_factory=lambda: RngSpec(0))
    s0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "state_pool", tuple(self.state_pool))
        object.__setattr__(self, "persistence", tuple(float(p) for p in self.persistence))
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValidationError("n_paths and n_steps must be positive")
        if not self.dt > 0 or not self.s0 > 0:
            raise ValidationError("dt and s0 must be positive")
        g = [s.gamma1 for s in self.state_pool]
        if not (any(x <= 1 for x in g) and any(x > 1 for x in g)):
            raise ValidationError("state_pool needs a state with gamma1 <= 1 and one with gamma1 > 1")
        lo, hi = self.persistence
        if not 0.5 < lo <= hi < 1:
            raise ValidationError(f"persistence range must satisfy 0.5 < lo <= hi < 1, got {self.persistence}")
        if self.redraw_interval < 1:
            raise ValidationError("redraw_interval must be positive")

    @property
    def stream_range(self) -> tuple[int, int]:
        return int(self.rng.stream), int(self.rng.stream) + self.n_paths

    def to_dict(self) -> dict:
        d = asdict(self)
        d["state_pool"] = [[s.gamma0, s.gamma1] for s in self.state_pool]
        d["persistence"] = list(self.persistence)
        d["rng"] = {"seed": int(self.rng.seed), "stream": int(self.rng.stream)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        d = dict(d)
        d["state_pool"] = tuple(PowerLawParams(*s) for s in d["state_pool"])
        d["persistence"] = tuple(d["persistence"])
        d["rng"] = RngSpec(**d["rng"])
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def draw_chain(spec: DatasetSpec, gen: np.random.Generator) -> RegimeChainSpec:
    """Random initial state and a piecewise-constant transition schedule for one path."""
    k = len(spec.state_pool)
    lo, hi = spec.persistence
    schedule = []
    for start in range(0, spec.n_steps, spec.redraw_interval):
        p = gen.uniform(lo, hi, size=k) if hi > lo else np.full(k, lo)
        m = np.empty((k, k))
        for i in range(k):
            m[i] = (1.0 - p[i]) / (k - 1)
            m[i, i] = p[i]
            # absorb rounding so rows sum to 1 exactly
            m[i, i] = 1.0 - (m[i].sum() - m[i, i])
        schedule.append((start, m))
    initial = int(gen.integers(0, k))
    return RegimeChainSpec(spec.state_pool, tuple(schedule), initial)


def generate_path(spec: DatasetSpec, k: int) -> tuple[PricePath, np.ndarray, RegimeChainSpec]:
    rng = spec.rng.substream(k)
    chain = draw_chain(spec, rng.generator(1))
    path = simulate_path(chain, spec.s0, spec.n_steps, seconds_to_years(spec.dt), rng)
    return path, labels_from_regimes(path, chain), chain


def generate_dataset(spec: DatasetSpec, threads: int = 1) -> list[tuple[PricePath, np.ndarray]]:
    """``spec.n_paths`` (path, labels) pairs; identical output for any ``threads``."""
    return [(p, y) for p, y, _ in _pmap(lambda k: generate_path(spec, k), range(spec.n_paths), threads)]


def streams_disjoint(a: DatasetSpec, b: DatasetSpec) -> bool:
    if a.rng.seed != b.rng.seed:
        return True
    (a0, a1), (b0, b1) = a.stream_range, b.stream_range
    return a1 <= b0 or b1 <= a0


def slm_share(spec: DatasetSpec) -> float:
    return sum(s.gamma1 > 1 for s in spec.state_pool) / len(spec.state_pool)
