"""Network inputs: standardized log-return and price level relative to the first price."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

N_FEATURES = 2


@dataclass(frozen=True)
class FeatureStats:
    """Mean and standard deviation of raw one-step log-returns."""

    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.std) and self.std > 0):
            raise ValidationError(f"invalid feature statistics {self}")

    @classmethod
    def fit(cls, price_series) -> "FeatureStats":
        rets = np.concatenate([_log_returns(np.asarray(p, dtype=float)) for p in price_series])
        std = float(rets.std())
        return cls(float(rets.mean()), std if std > 0 else 1.0)


def _log_returns(prices: np.ndarray) -> np.ndarray:
    if prices.ndim != 1 or prices.size < 2:
        raise ValidationError("need at least two prices")
    if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
        raise ValidationError("featurize needs positive prices")
    return np.diff(np.log(prices))


def featurize(prices, stats: FeatureStats | None = None) -> np.ndarray:
    """Features for steps 1..n of a price series, shape (n, 2)."""
    stats = stats or FeatureStats()
    prices = np.asarray(getattr(prices, "prices", prices), dtype=float)
    r = _log_returns(prices)
    out = np.empty((r.size, N_FEATURES))
    out[:, 0] = (r - stats.mean) / stats.std
    out[:, 1] = prices[1:] / prices[0]
    return out


def unstandardize(features: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Raw log-returns recovered from the first feature column."""
    return np.asarray(features)[:, 0] * stats.std + stats.mean
