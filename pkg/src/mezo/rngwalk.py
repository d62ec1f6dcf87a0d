"""Simple random walks on the hypercubic lattice Z^d.

Return-to-origin probabilities (exact enumeration, asymptotic formula and
Monte Carlo) and estimation of the Polya return constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats

from mezo._regress import LineFit, fit_line
from mezo._rng import frozen, map_chunks, stream

#: Probability of ever returning to the origin; d=3 value from the literature.
POLYA_CONSTANTS = {1: 1.0, 2: 1.0, 3: 0.340437}

_ENUM_LIMIT = {1: 24, 2: 12}
_CHUNK = 1 << 16
_ALIAS_NMAX = 256

# stream namespaces
_KEY_RETURN = 1
_KEY_POLYA = 2


@dataclass(frozen=True)
class WalkEnsembleSpec:
    dimension: int
    steps: int
    walkers: int
    seed: int = 0

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.walkers < 1:
            raise ValueError("walkers must be >= 1")


@dataclass(frozen=True)
class ReturnStatistics:
    lags: np.ndarray
    p_origin: np.ndarray
    standard_errors: np.ndarray
    hits: np.ndarray
    walkers: int


@dataclass(frozen=True)
class PolyaEstimate:
    """Monte Carlo estimate of the return constant.

    ``value`` is ``raw + tail_correction``. ``curve_horizons`` and
    ``curve_raw`` give the raw returned fraction at intermediate horizons of
    the same run, which is non-decreasing by construction.
    """

    value: float
    truncation_horizon: int
    tail_correction: float
    confidence_halfwidth: float
    raw: float = float("nan")
    walkers: int = 0
    curve_horizons: np.ndarray = field(default_factory=lambda: frozen([], dtype=np.int64))
    curve_raw: np.ndarray = field(default_factory=lambda: frozen([], dtype=float))


# ---------------------------------------------------------------------------
# exact and asymptotic return probabilities


def return_probability_exact(dimension: int, lag: int) -> Fraction:
    """Exact P(walker is at the origin after ``lag`` steps), by enumerating paths.

    All ``(2d)**lag`` nearest-neighbour paths are equally likely; the result is
    the fraction that end at the origin.
    """
    if dimension not in _ENUM_LIMIT:
        raise ValueError("exact enumeration supports dimension 1 or 2")
    if lag < 0 or lag % 2:
        raise ValueError(f"lag must be a non-negative even integer, got {lag} (odd lags never return)")
    if lag > _ENUM_LIMIT[dimension]:
        raise ValueError(f"lag {lag} exceeds the enumeration bound {_ENUM_LIMIT[dimension]} for d={dimension}")
    total = (2 * dimension) ** lag
    if lag == 0:
        return Fraction(1)
    codes = np.arange(total, dtype=np.uint64)
    if dimension == 1:
        # bit set = step right; returns need exactly lag/2 right steps
        ones = np.bitwise_count(codes)
        count = int(np.count_nonzero(ones == lag // 2))
    else:
        dx = np.zeros(total, dtype=np.int8)
        dy = np.zeros(total, dtype=np.int8)
        rest = codes
        for _ in range(lag):
            digit = (rest & np.uint64(3)).astype(np.int8)
            rest = rest >> np.uint64(2)
            dx += (digit == 0).astype(np.int8) - (digit == 1).astype(np.int8)
            dy += (digit == 2).astype(np.int8) - (digit == 3).astype(np.int8)
        count = int(np.count_nonzero((dx == 0) & (dy == 0)))
    return Fraction(count, total)


def theoretical_p_origin(dimension: int, lag: int) -> float:
    """Asymptotic return probability ``(t*pi)**(-d/2)`` at ``lag = 2t``.

    Exceeds the exact value at small ``t`` (e.g. 0.564 vs 0.5 at lag 2).
    """
    if dimension not in (1, 2):
        raise ValueError("formula holds for dimension 1 or 2")
    if lag < 2 or lag % 2:
        raise ValueError("lag must be an even integer >= 2")
    t = lag // 2
    return (t * math.pi) ** (-dimension / 2)


# ---------------------------------------------------------------------------
# Monte Carlo return statistics


def _origin_counts(dimension: int, lags: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    pos = np.zeros((n, dimension), dtype=np.int32)
    rows = np.arange(n)
    counts = np.zeros(lags.size, dtype=np.int64)
    wanted = {int(lag): i for i, lag in enumerate(lags)}
    for t in range(1, int(lags.max()) + 1):
        direction = rng.integers(0, 2 * dimension, n)
        axis = direction % dimension
        sign = 1 - 2 * (direction // dimension)
        pos[rows, axis] += sign.astype(np.int32)
        if t in wanted:
            counts[wanted[t]] = np.count_nonzero(~pos.any(axis=1))
    return counts


def simulate_return_statistics(
    spec: WalkEnsembleSpec, lags: Sequence[int], threads: int = 1
) -> ReturnStatistics:
    """Monte Carlo estimate of P_origin at each (even) lag."""
    lags = np.asarray(sorted(set(int(x) for x in lags)), dtype=np.int64)
    if lags.size == 0:
        raise ValueError("lag list is empty")
    if np.any(lags < 2) or np.any(lags % 2):
        raise ValueError("lags must be even integers >= 2")
    if lags.max() > spec.steps:
        raise ValueError(f"max lag {lags.max()} exceeds steps {spec.steps}")

    def work(i, lo, hi):
        return _origin_counts(spec.dimension, lags, hi - lo, stream(spec.seed, _KEY_RETURN, i))

    hits = np.sum(map_chunks(work, spec.walkers, _CHUNK, threads), axis=0)
    p = hits / spec.walkers
    se = np.sqrt(p * (1 - p) / spec.walkers)
    return ReturnStatistics(frozen(lags), frozen(p), frozen(se), frozen(hits), spec.walkers)


def fit_return_exponent(
    stats_: ReturnStatistics, min_hits: int = 100, window: tuple[int, int] | None = None
) -> LineFit:
    """OLS slope of log p vs log t (t = lag/2); lags with too few hits are skipped."""
    keep = stats_.hits >= min_hits
    if window is not None:
        keep &= (stats_.lags >= window[0]) & (stats_.lags <= window[1])
    if np.count_nonzero(keep) < 2:
        raise ValueError("fewer than two lags with enough hits to fit a slope")
    t = stats_.lags[keep] / 2
    return fit_line(np.log(t), np.log(stats_.p_origin[keep]))


# ---------------------------------------------------------------------------
# Polya constant


@lru_cache(maxsize=None)
def _alias_table(p: float, nmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Walker alias tables for Binomial(n, p), one row per n <= nmax."""
    width = nmax + 1
    prob = np.ones((width, width))
    alias = np.tile(np.arange(width), (width, 1))
    for n in range(width):
        k = n + 1
        q = stats.binom.pmf(np.arange(k), n, p) * k
        small = [i for i in range(k) if q[i] < 1.0]
        large = [i for i in range(k) if q[i] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            prob[n, s] = q[s]
            alias[n, s] = g
            q[g] -= 1.0 - q[s]
            (small if q[g] < 1.0 else large).append(g)
    return prob, alias


def _binomial(n: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    if p == 1.0:
        return n.copy()
    prob, alias = _alias_table(p, _ALIAS_NMAX)
    out = np.empty_like(n)
    small = n <= _ALIAS_NMAX
    ns = n[small]
    u = rng.random(ns.size) * (ns + 1)
    j = u.astype(np.int64)
    out[small] = np.where(u - j < prob[ns, j], j, alias[ns, j])
    if not small.all():
        out[~small] = rng.binomial(n[~small], p)
    return out


def _displacement(m: np.ndarray, dimension: int, rng: np.random.Generator) -> np.ndarray:
    """Exact displacement of independent ``m``-step walks."""
    disp = np.empty((m.size, dimension), dtype=np.int64)
    remaining = m
    for axis in range(dimension):
        on_axis = _binomial(remaining, 1.0 / (dimension - axis), rng)
        remaining = remaining - on_axis
        disp[:, axis] = 2 * _binomial(on_axis, 0.5, rng) - on_axis
    return disp


def _first_return_times(dimension: int, horizon: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """First-return time for each walker, or -1 if none within ``horizon``.

    A walker at L1 distance r cannot reach the origin in fewer than r steps,
    so it may jump r steps at once; landing on the origin is then the first
    return.
    """
    pos = np.zeros((n, dimension), dtype=np.int64)
    t = np.zeros(n, dtype=np.int64)
    idx = np.arange(n)
    first = np.full(n, -1, dtype=np.int64)
    while idx.size:
        r = np.abs(pos).sum(axis=1)
        m = np.minimum(np.maximum(r, 1), horizon - t)
        pos += _displacement(m, dimension, rng)
        t += m
        hit = ~pos.any(axis=1)
        first[idx[hit]] = t[hit]
        keep = ~hit & (t < horizon)
        if not keep.all():
            pos, t, idx = pos[keep], t[keep], idx[keep]
    return first


def estimate_polya_constant(
    dimension: int,
    horizon: int = 10_000,
    walkers: int = 100_000,
    seed: int = 0,
    analytic: bool = False,
    tail_correction: bool | None = None,
    threads: int = 1,
) -> PolyaEstimate:
    """Estimate the probability that a walker ever returns to its start.

    In analytic mode the known constant is returned (exactly 1 for d <= 2).
    Otherwise it is the fraction returning within ``horizon``. For d=3 a tail
    correction is added: the first-return density decays like t^(-3/2), so
    the mass beyond the horizon equals the mass observed in the last decade
    (horizon/10, horizon] divided by (sqrt(10) - 1).
    """
    if dimension not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2 or 3")
    if analytic:
        return PolyaEstimate(POLYA_CONSTANTS[dimension], 0, 0.0, 0.0, raw=POLYA_CONSTANTS[dimension])
    if horizon < 100:
        raise ValueError("horizon must be >= 100")
    if walkers < 1000:
        raise ValueError("walkers must be >= 1000")
    if tail_correction is None:
        tail_correction = dimension == 3

    def work(i, lo, hi):
        return _first_return_times(dimension, horizon, hi - lo, stream(seed, _KEY_POLYA, i))

    first = np.concatenate(map_chunks(work, walkers, _CHUNK, threads))
    returned = first[first > 0]
    raw = returned.size / walkers

    tail, tail_var = 0.0, 0.0
    if tail_correction:
        last_decade = np.count_nonzero(returned > horizon / 10) / walkers
        factor = 1.0 / (math.sqrt(10.0) - 1.0)
        tail = last_decade * factor
        tail_var = factor**2 * last_decade * (1 - last_decade) / walkers
    z = stats.norm.ppf(0.975)
    half = z * math.sqrt(raw * (1 - raw) / walkers + tail_var)

    horizons = [h for h in (2 ** np.arange(4, 40)) if h < horizon] + [horizon]
    sorted_times = np.sort(returned)
    curve = np.searchsorted(sorted_times, horizons, side="right") / walkers
    return PolyaEstimate(
        value=min(1.0, raw + tail),
        truncation_horizon=horizon,
        tail_correction=tail,
        confidence_halfwidth=half,
        raw=raw,
        walkers=walkers,
        curve_horizons=frozen(horizons, dtype=np.int64),
        curve_raw=frozen(curve),
    )


def parse_lags(text: str) -> list[int]:
    """Parse ``"2,4,8"`` or ``"a:b:geometric"`` (doubling from a up to b)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3 or parts[2] != "geometric":
            raise ValueError(f"lag range must look like a:b:geometric, got {text!r}")
        lo, hi = int(parts[0]), int(parts[1])
        if lo < 1 or hi < lo:
            raise ValueError(f"bad lag range {text!r}")
        out = []
        lag = lo
        while lag <= hi:
            out.append(lag)
            lag *= 2
        return out
    return [int(x) for x in text.split(",") if x.strip()]
