"""Ordinary least-squares line fits used by the exponent estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_se: float
    ci_halfwidth: float
    n: int


def fit_line(x, y, level: float = 0.95) -> LineFit:
    """Fit ``y = intercept + slope * x``; CI halfwidth is Student-t at ``level``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two points for a line fit")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise ValueError("x values are all identical")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    if n > 2:
        resid = y - (intercept + slope * x)
        s2 = float(np.sum(resid**2)) / (n - 2)
        se = float(np.sqrt(s2 / sxx))
        half = float(stats.t.ppf(0.5 + level / 2, n - 2) * se)
    else:
        se, half = float("inf"), float("inf")
    return LineFit(slope, intercept, se, half, n)
