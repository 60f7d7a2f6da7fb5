"""Smooth monotone ramp shared by cutoffs and the partition of unity.

S(t) = 0 for t <= 1 and S(t) = 1 for t >= 3.  It is a linear ramp of slope
RAMP_SLOPE on [1 + delta, 3 - delta], mollified with a C-infinity bump of
half-width delta, so S is C-infinity and sup S' = RAMP_SLOPE.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid

DELTA = 0.2
RAMP_SLOPE = 1.0 / (2.0 - 2.0 * DELTA)
_TABLE_POINTS = 200_001


def _bump_cdf(x):
    """Smooth step from 0 at x = -1 to 1 at x = 1 (CDF of a bump density)."""
    x = np.clip(np.asarray(x, float), -1.0, 1.0)

    def e(y):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)

    a, b = e(1.0 + x), e(1.0 - x)
    return a / (a + b)


@lru_cache(maxsize=1)
def _table():
    x = np.linspace(-1.0, 1.0, _TABLE_POINTS)
    return x, cumulative_trapezoid(_bump_cdf(x), x, initial=0.0)


def _antiderivative(x):
    """G(x) = int_{-inf}^x F, with G(x) = x for x >= 1 (G(1) = 1 by symmetry)."""
    xs, gs = _table()
    x = np.asarray(x, float)
    inside = np.interp(np.clip(x, -1.0, 1.0), xs, gs)
    return np.where(x <= -1.0, 0.0, np.where(x >= 1.0, x, inside))


def smooth_ramp(t):
    t = np.asarray(t, float)
    lo, hi = 1.0 + DELTA, 3.0 - DELTA
    s = RAMP_SLOPE * DELTA * (_antiderivative((t - lo) / DELTA) - _antiderivative((t - hi) / DELTA))
    return np.where(t <= 1.0, 0.0, np.where(t >= 3.0, 1.0, np.clip(s, 0.0, 1.0)))


def smooth_ramp_derivative(t):
    t = np.asarray(t, float)
    lo, hi = 1.0 + DELTA, 3.0 - DELTA
    return RAMP_SLOPE * (_bump_cdf((t - lo) / DELTA) - _bump_cdf((t - hi) / DELTA))
