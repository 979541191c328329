"""True vs strict local martingale classification for power-law diffusions.

For ``dX = b(X) dB`` the process is a strict local martingale exactly when
``int_eps^inf x / b(x)**2 dx`` is finite. With ``b(x) = c * x**p`` that is
the case iff ``p > 1``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .simkit import PricePath, RegimeChainSpec

BOUNDARY_TOL = 1e-9
MIN_TAB_POINTS = 16


class MartingaleClass(enum.Enum):
    TRUE_MARTINGALE = "TM"
    STRICT_LOCAL_MARTINGALE = "SLM"

    @property
    def label(self) -> int:
        """1 for a true martingale, 0 for a bubble."""
        return int(self is MartingaleClass.TRUE_MARTINGALE)


def classify_power_exponent(gamma1: float) -> MartingaleClass:
    if not np.isfinite(gamma1) or gamma1 <= 0.5:
        raise DomainError(f"gamma1 must exceed 1/2 to be classified, got {gamma1}")
    if gamma1 <= 1.0 + BOUNDARY_TOL:
        return MartingaleClass.TRUE_MARTINGALE
    return MartingaleClass.STRICT_LOCAL_MARTINGALE


@dataclass(frozen=True)
class TailTestResult:
    cls: MartingaleClass
    exponent: float


def integral_tail_test(x, b, epsilon: float) -> TailTestResult:
    """Decide convergence of the integral test from the tail exponent of a tabulated ``b``.

    Fits ``log b = log c + p log x`` on the upper half (in log x) of the
    points at or above ``epsilon``. The integral converges, and the process
    is a strict local martingale, iff ``p > 1``.
    """
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    if x.shape != b.shape or x.ndim != 1:
        raise ValidationError("x and b must be 1-D arrays of equal length")
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if np.any(~np.isfinite(b)) or np.any(b <= 0):
        raise DomainError("b(x) must be positive and finite")
    if np.any(np.diff(x) <= 0):
        raise ValidationError("x must be strictly increasing")
    keep = x >= epsilon
    x, b = x[keep], b[keep]
    if x.size < MIN_TAB_POINTS:
        raise ValidationError(f"need at least {MIN_TAB_POINTS} points at or above epsilon, got {x.size}")
    if np.log10(x[-1] / x[0]) < 2 - 1e-12:
        raise ValidationError("tabulation must span at least two decades")
    lx, lb = np.log(x), np.log(b)
    upper = lx >= 0.5 * (lx[0] + lx[-1])
    p = float(np.polyfit(lx[upper], lb[upper], 1)[0])
    cls = (MartingaleClass.STRICT_LOCAL_MARTINGALE if p > 1.0 + BOUNDARY_TOL
           else MartingaleClass.TRUE_MARTINGALE)
    return TailTestResult(cls, p)


def labels_from_regimes(path: PricePath, spec: RegimeChainSpec) -> np.ndarray:
    """Ground-truth labels (1 = true martingale, 0 = bubble) for each point of ``path``."""
    if path.regime_ids is None:
        raise ValidationError("path has no regime_ids")
    ids = path.regime_ids
    if ids.size and (ids.min() < 0 or ids.max() >= spec.n_states):
        raise ValidationError("regime_ids reference states missing from spec")
    per_state = np.array([classify_power_exponent(s.gamma1).label for s in spec.states], dtype=np.int64)
    return per_state[ids]
