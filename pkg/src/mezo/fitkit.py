"""Empirical estimators: rank-size alpha, central-peak beta, the alpha=beta
check, and crossing-exponential episode fits of aggregate growth series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import least_squares, nnls

from mezo._regress import fit_line
from mezo._rng import frozen, stream
from mezo.errors import NumericalError
from mezo.levy import BandwidthRule, central_peak_estimate, silverman_rule
from mezo.sectors import detect_cusps

MIN_RANKS = 20
SLOPE_EPS = 1e-12


@dataclass(frozen=True)
class RankFit:
    sorted_sizes: np.ndarray
    alpha_hat: float
    ci_halfwidth: float
    fit_range: tuple[int, int]  # inclusive ranks, 1-based
    slope: float


@dataclass(frozen=True)
class BetaEstimate:
    beta_hat: float
    ci_halfwidth: float
    slope: float
    lags: np.ndarray


@dataclass(frozen=True)
class AlphaBetaReport:
    alpha_hat: float
    alpha_ci: float
    beta_hat: float
    beta_ci: float
    verdict: Literal["consistent", "inconsistent"]
    tolerance: float

    @property
    def difference(self) -> float:
        return abs(self.alpha_hat - self.beta_hat)


@dataclass(frozen=True)
class EpisodeFit:
    """``c_old*exp(lambda_old*(t-t_start)) + c_new*exp(lambda_new*(t-t_start))``.

    ``rmse`` is measured on the log scale (relative error). A single
    exponential is reported with ``c_old = 0`` and ``lambda_old = lambda_new``.
    """

    t_start: float
    t_end: float
    lambda_old: float
    lambda_new: float
    c_old: float
    c_new: float
    rmse: float
    single_exponential: bool = False

    def model(self, t) -> np.ndarray:
        tau = np.asarray(t, dtype=float) - self.t_start
        return self.c_old * np.exp(self.lambda_old * tau) + self.c_new * np.exp(self.lambda_new * tau)


@dataclass(frozen=True)
class EpisodeFailure:
    t_start: float
    t_end: float
    message: str


# ---------------------------------------------------------------------------
# rank-size


def default_rank_range(count: int) -> tuple[int, int]:
    """Ranks 3 .. floor(0.9 * count): drops the two largest and the bottom decile."""
    return 3, max(int(math.floor(0.9 * count)), 4)


def rank_size_fit(sizes, fit_range: tuple[int, int] | None = None, level: float = 0.95) -> RankFit:
    """Fit ``size(rank) ~ rank**(-1/alpha)`` by least squares on log-log axes."""
    w = np.asarray(sizes, dtype=float).ravel()
    if w.size < MIN_RANKS:
        raise ValueError(f"need at least {MIN_RANKS} sizes, got {w.size}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("sizes must be finite and > 0")
    w = np.sort(w)[::-1]
    lo, hi = fit_range or default_rank_range(w.size)
    if not (1 <= lo < hi <= w.size):
        raise ValueError(f"fit_range must satisfy 1 <= lo < hi <= {w.size}, got {(lo, hi)}")
    ranks = np.arange(lo, hi + 1, dtype=float)
    fit = fit_line(np.log(ranks), np.log(w[lo - 1 : hi]), level)
    m = fit.slope
    if abs(m) < SLOPE_EPS:
        raise NumericalError("degenerate rank profile, α unbounded")
    return RankFit(frozen(w), -1.0 / m, fit.ci_halfwidth / m**2, (int(lo), int(hi)), m)


# ---------------------------------------------------------------------------
# central-peak beta


def default_beta_lags(n: int) -> np.ndarray:
    top = min(256, n // 10)
    if top < 16:
        raise ValueError(f"series of length {n} is too short for the default lags (need >= 160)")
    return 2 ** np.arange(3, int(math.log2(top)) + 1)


def beta_from_series(
    series,
    lags: Sequence[int] | None = None,
    bandwidth_rule: BandwidthRule = silverman_rule,
) -> BetaEstimate:
    """beta from ``P_origin(t) ~ t**(-1/beta)`` on overlapping log-level increments."""
    x = np.asarray(series, dtype=float).ravel()
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("levels must be finite and > 0")
    log_levels = np.log(x)
    lags = default_beta_lags(x.size) if lags is None else np.asarray(lags)
    peak = central_peak_estimate(log_levels, lags, bandwidth_rule)
    if not np.isfinite(peak.slope) or peak.slope >= 0:
        raise NumericalError(f"central peak does not decay with lag (slope {peak.slope:.3g})")
    return BetaEstimate(-1.0 / peak.slope, peak.slope_ci / peak.slope**2, peak.slope, peak.lags)


def alpha_beta_test(rank_fit: RankFit | float, beta: BetaEstimate | float, tolerance: float = 0.1) -> AlphaBetaReport:
    """Compare the wealth exponent with the fluctuation exponent."""
    a, a_ci = (rank_fit.alpha_hat, rank_fit.ci_halfwidth) if isinstance(rank_fit, RankFit) else (float(rank_fit), math.nan)
    b, b_ci = (beta.beta_hat, beta.ci_halfwidth) if isinstance(beta, BetaEstimate) else (float(beta), math.nan)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("both estimates must be finite")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    verdict = "consistent" if abs(a - b) <= tolerance else "inconsistent"
    return AlphaBetaReport(a, a_ci, b, b_ci, verdict, tolerance)


def synthetic_wealth_index(alpha: float, investors: int, steps: int, seed: int):
    """Pareto(alpha) wealths and an index whose log-returns are ``+-w/W``.

    Each step one investor, chosen uniformly, moves the total by their own
    wealth ``w`` (``W`` is the total), so index jumps inherit the wealth tail.
    Returns ``(wealths, levels)`` with ``levels[0] == 1``.
    """
    if alpha <= 0 or investors < MIN_RANKS or steps < 1:
        raise ValueError("need alpha > 0, investors >= 20 and steps >= 1")
    rng = stream(seed, 0)
    wealth = (1.0 - rng.random(investors)) ** (-1.0 / alpha)
    rng = stream(seed, 1)
    who = rng.integers(0, investors, steps)
    sign = np.where(rng.random(steps) < 0.5, -1.0, 1.0)
    log_levels = np.r_[0.0, np.cumsum(sign * wealth[who] / wealth.sum())]
    return frozen(wealth), frozen(np.exp(log_levels))


# ---------------------------------------------------------------------------
# crossing-exponential episodes


def _quartile_slope(tau, y, part: slice) -> float:
    t, v = tau[part], y[part]
    return fit_line(t, v).slope if t.size >= 2 and np.ptp(t) > 0 else 0.0


def _amplitudes(tau, x, lam_old, lam_new) -> np.ndarray:
    A = np.column_stack([np.exp(lam_old * tau), np.exp(lam_new * tau)])
    scale = np.abs(A).max(axis=0)
    c, _ = nnls(A / scale, x)
    return c / scale


def _bic(rss: float, n: int, k: int) -> float:
    return n * math.log(max(rss, n * 1e-30) / n) + k * math.log(n)


def fit_crossing_episode(series, t_start: float, t_end: float, times=None, restarts: int = 8) -> EpisodeFit:
    """Fit one decaying plus one growing exponential to ``series`` on [t_start, t_end].

    Residuals are taken on the log scale. If a single exponential explains
    the window as well (by BIC), the fit is flagged ``single_exponential``.
    """
    y_all = np.asarray(series, dtype=float)
    t_all = np.arange(y_all.size, dtype=float) if times is None else np.asarray(times, dtype=float)
    if t_all.shape != y_all.shape:
        raise ValueError("times and series lengths differ")
    mask = (t_all >= t_start - 1e-12) & (t_all <= t_end + 1e-12)
    t, x = t_all[mask], y_all[mask]
    if t.size < 8:
        raise ValueError(f"need at least 8 samples in the window, got {t.size}")
    if np.any(~(x > 0)):
        raise ValueError("series must be > 0 in the window")
    tau = t - t[0]
    y = np.log(x)
    n = t.size
    q = max(2, n // 4)

    line = fit_line(tau, y)
    rss_single = float(np.sum((y - line.intercept - line.slope * tau) ** 2))
    single = EpisodeFit(float(t[0]), float(t[-1]), line.slope, line.slope, 0.0, math.exp(line.intercept),
                        math.sqrt(rss_single / n), single_exponential=True)

    def resid(p):
        lo, ln, ao, an = p
        # log(exp(ao + lo*tau) + exp(an + ln*tau)) without overflow
        return np.logaddexp(ao + lo * tau, an + ln * tau) - y

    lam_old0 = _quartile_slope(tau, y, slice(0, q))
    lam_new0 = _quartile_slope(tau, y, slice(n - q, n))
    span = max(tau[-1], 1e-12)
    rng = np.random.default_rng(0)
    best = None
    for attempt in range(restarts):
        lo0, ln0 = lam_old0, lam_new0
        if attempt:
            jitter = rng.normal(scale=0.5 / span, size=2) * attempt
            lo0, ln0 = lo0 + jitter[0], ln0 + jitter[1]
        if ln0 - lo0 < 1e-3 / span:
            lo0, ln0 = min(lo0, ln0) - 0.5 / span, max(lo0, ln0) + 0.5 / span
        c = _amplitudes(tau, x, lo0, ln0)
        c = np.maximum(c, 1e-6 * x.max())
        p0 = np.array([lo0, ln0, math.log(c[0]), math.log(c[1])])
        try:
            sol = least_squares(resid, p0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
        except (ValueError, FloatingPointError):
            continue
        if not np.all(np.isfinite(sol.x)):
            continue
        rss = float(np.sum(sol.fun**2))
        if best is None or rss < best[0]:
            best = (rss, sol.x)
        if rss < 1e-24 * n:
            break
    if best is None:
        raise NumericalError(f"episode fit on [{t_start}, {t_end}] failed to converge; best single-exponential "
                             f"rmse {single.rmse:.3g}")
    rss, (lo, ln, ao, an) = best
    if lo > ln:
        lo, ln, ao, an = ln, lo, an, ao
    if _bic(rss, n, 4) >= _bic(rss_single, n, 2) - 1e-9:
        return single
    return EpisodeFit(float(t[0]), float(t[-1]), float(lo), float(ln), math.exp(ao), math.exp(an),
                      math.sqrt(rss / n))


def segment_episodes(series, times=None, theta: float = 10.0, window: int | None = None):
    """Split at cusp maxima and fit each piece; failures are returned, not raised."""
    x = np.asarray(series, dtype=float)
    if x.size < 32:
        raise ValueError("need at least 32 samples")
    t = np.arange(x.size, dtype=float) if times is None else np.asarray(times, dtype=float)
    cusps = [e.time for e in detect_cusps(x, t, theta=theta, window=window) if e.kind == "cusp-max"]
    bounds = [float(t[0]), *cusps, float(t[-1])]
    out: list[EpisodeFit | EpisodeFailure] = []
    for a, b in zip(bounds, bounds[1:]):
        try:
            out.append(fit_crossing_episode(x, a, b, times=t))
        except (NumericalError, ValueError) as exc:
            out.append(EpisodeFailure(a, b, str(exc)))
    return out
