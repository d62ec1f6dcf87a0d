"""Levy flights: Pareto-step random walks and central-peak scaling.

The density of the net change at zero, P_origin(t), and the robust width
sigma(t) of the increment distribution are estimated over a set of lags and
their log-log slopes are fitted. For tail exponent alpha < 2 both scale with
1/alpha; above 2 the walk falls back into the Gaussian basin (1/2).
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np

from mezo._regress import fit_line
from mezo._rng import frozen, map_chunks, stream
from mezo.errors import NumericalError

IQR_TO_SIGMA = 1.349
MIN_INCREMENTS = 500

BandwidthRule = Callable[[np.ndarray], float]


class Regime(str, enum.Enum):
    GAUSSIAN = "Gaussian"
    FRACTAL = "Fractal"
    INTERMITTENT = "Intermittent"


@dataclass(frozen=True)
class StepDistribution:
    kind: Literal["uniform", "pareto"]
    alpha: float | None = None
    scale: float = 1.0
    bound: float = 1.0

    def __post_init__(self):
        if self.kind == "pareto":
            if self.alpha is None or self.alpha <= 0:
                raise ValueError("pareto steps need alpha > 0")
            if self.scale <= 0:
                raise ValueError("scale must be positive")
        elif self.kind == "uniform":
            if self.bound <= 0:
                raise ValueError("uniform steps need bound > 0")
        else:
            raise ValueError(f"unknown step kind {self.kind!r}")

    @classmethod
    def pareto(cls, alpha: float, scale: float = 1.0) -> "StepDistribution":
        return cls("pareto", alpha=alpha, scale=scale)

    @classmethod
    def uniform(cls, bound: float = 1.0) -> "StepDistribution":
        return cls("uniform", bound=bound)


@dataclass(frozen=True)
class FlightEnsemble:
    """Cumulative sums ``paths[:, j]`` at ``times[j]``; ``times[0] == 0``."""

    times: np.ndarray
    paths: np.ndarray
    step_distribution: StepDistribution
    seed: int


@dataclass(frozen=True)
class PeakScaling:
    lags: np.ndarray
    p_origin_hat: np.ndarray
    sigma_hat: np.ndarray
    stderr: np.ndarray
    slope: float
    slope_ci: float


@dataclass(frozen=True)
class WidthScaling:
    lags: np.ndarray
    sigma_hat: np.ndarray
    exponent: float
    exponent_ci: float


def sample_step(dist: StepDistribution, rng: np.random.Generator, size=None):
    """Draw steps; Pareto magnitudes are ``scale * U**(-1/alpha)`` with a random sign."""
    if dist.kind == "uniform":
        return rng.uniform(-dist.bound, dist.bound, size)
    u = 1.0 - rng.random(size)  # (0, 1]
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    out = sign * dist.scale * u ** (-1.0 / dist.alpha)
    return float(out) if size is None else out


def simulate_flight(
    dist: StepDistribution,
    steps: int,
    paths: int,
    seed: int,
    record: Sequence[int] | None = None,
    threads: int = 1,
    chunk: int = 4096,
    stream_key: tuple[int, ...] = (),
) -> FlightEnsemble:
    """Simulate ``paths`` independent walks of ``steps`` i.i.d. steps.

    Only the times in ``record`` are kept (all times by default), which keeps
    large ensembles within memory. ``stream_key`` namespaces the random
    streams so that several flights can share one seed.
    """
    if steps < 1 or paths < 1:
        raise ValueError("steps and paths must be >= 1")
    times = np.arange(steps + 1) if record is None else np.unique(np.r_[0, np.asarray(record, dtype=np.int64)])
    if times.min() < 0 or times.max() > steps:
        raise ValueError("record times must lie in [0, steps]")
    cols = times[times > 0] - 1
    # cap memory per chunk at ~32M floats
    chunk = max(1, min(chunk, (1 << 25) // steps))

    def work(i, lo, hi):
        rng = stream(seed, *stream_key, i)
        cs = np.cumsum(sample_step(dist, rng, (hi - lo, steps)), axis=1)
        block = np.zeros((hi - lo, times.size))
        block[:, times > 0] = cs[:, cols]
        return block

    out = np.vstack(map_chunks(work, paths, chunk, threads))
    return FlightEnsemble(frozen(times), frozen(out), dist, seed)


def silverman_rule(increments: np.ndarray, c: float = 1.06, min_count: int = 50) -> float:
    """Half-width h = c * sigma_robust * n^(-1/5), widened to hold >= min_count points."""
    n = increments.size
    sigma = robust_sigma(increments)
    h = c * sigma * n ** (-0.2)
    a = np.abs(increments)
    if np.count_nonzero(a <= h) < min_count:
        h = float(np.partition(a, min_count - 1)[min_count - 1])
    return float(h)


def robust_sigma(x: np.ndarray) -> float:
    q1, q3 = np.percentile(x, [25, 75])
    return float((q3 - q1) / IQR_TO_SIGMA)


def _increments(data, lags: np.ndarray):
    """Yield (lag, increments) for an ensemble or a single long series."""
    if isinstance(data, FlightEnsemble):
        col = {int(t): j for j, t in enumerate(data.times)}
        for lag in lags:
            if int(lag) not in col:
                raise ValueError(f"lag {lag} was not recorded in the ensemble")
            yield lag, data.paths[:, col[int(lag)]] - data.paths[:, 0]
    else:
        x = np.asarray(data, dtype=float)
        if x.ndim != 1:
            raise ValueError("series must be one-dimensional")
        if lags.max() > x.size / 10:
            raise ValueError(f"max lag {lags.max()} exceeds series length / 10 = {x.size / 10:g}")
        for lag in lags:
            yield lag, x[lag:] - x[:-lag]


def _per_lag(data, lags, bandwidth_rule: BandwidthRule, min_increments: int):
    kept, p, sig, se = [], [], [], []
    for lag, inc in _increments(data, lags):
        n = inc.size
        if n < min_increments:
            warnings.warn(f"lag {lag}: only {n} increments (< {min_increments}); dropped", stacklevel=3)
            continue
        sigma = robust_sigma(inc)
        if not sigma > 0:
            warnings.warn(f"lag {lag}: degenerate increments (zero spread); dropped", stacklevel=3)
            continue
        h = bandwidth_rule(inc)
        if not h > 0:
            warnings.warn(f"lag {lag}: zero bandwidth; dropped", stacklevel=3)
            continue
        count = np.count_nonzero(np.abs(inc) <= h)
        kept.append(int(lag))
        p.append(count / (2 * h * n))
        se.append(np.sqrt(count * (1 - count / n)) / (2 * h * n))
        sig.append(sigma)
    if not kept:
        raise NumericalError("no usable lags: every lag had too few or degenerate increments")
    return np.array(kept), np.array(p), np.array(sig), np.array(se)


def _clean_lags(lags) -> np.ndarray:
    lags = np.unique(np.asarray(lags, dtype=np.int64))
    if lags.size == 0 or lags.min() < 1:
        raise ValueError("lags must be positive integers")
    return lags


def central_peak_estimate(
    data,
    lags: Sequence[int],
    bandwidth_rule: BandwidthRule = silverman_rule,
    min_increments: int = MIN_INCREMENTS,
) -> PeakScaling:
    """Density of the net change at zero for each lag, and its log-log slope.

    ``data`` is a :class:`FlightEnsemble` (increment = path value at the lag)
    or a 1-d series (overlapping increments over windows of each lag).
    """
    lags = _clean_lags(lags)
    kept, p, sig, se = _per_lag(data, lags, bandwidth_rule, min_increments)
    if kept.size >= 2:
        fit = fit_line(np.log(kept), np.log(p))
        slope, ci = fit.slope, fit.ci_halfwidth
    else:
        slope, ci = float("nan"), float("inf")
    return PeakScaling(frozen(kept), frozen(p), frozen(sig), frozen(se), slope, ci)


def width_scaling(data, lags: Sequence[int], min_increments: int = MIN_INCREMENTS) -> WidthScaling:
    """Robust width (IQR / 1.349) per lag and its log-log growth exponent."""
    lags = _clean_lags(lags)
    kept, sig = [], []
    for lag, inc in _increments(data, lags):
        if inc.size < min_increments:
            warnings.warn(f"lag {lag}: only {inc.size} increments; dropped", stacklevel=2)
            continue
        s = robust_sigma(inc)
        if s > 0:
            kept.append(int(lag))
            sig.append(s)
    if len(kept) < 2:
        raise NumericalError("need at least two usable lags to fit a width exponent")
    fit = fit_line(np.log(kept), np.log(sig))
    return WidthScaling(frozen(kept), frozen(sig), fit.slope, fit.ci_halfwidth)


def classify_regime(alpha: float) -> Regime:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if alpha > 2:
        return Regime.GAUSSIAN
    if alpha > 1:
        return Regime.FRACTAL
    return Regime.INTERMITTENT


def predicted_peak_slope(dist: StepDistribution) -> float:
    """-1/alpha inside the Levy basin, -1/2 for bounded or alpha > 2 steps."""
    if dist.kind == "uniform" or dist.alpha > 2:
        return -0.5
    return -1.0 / dist.alpha
