import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mezo import fitkit, levy, sectors
from mezo._rng import stream
from mezo.errors import NumericalError
from mezo.fitkit import EpisodeFailure, EpisodeFit, RankFit
from mezo.levy import StepDistribution
from mezo.sectors import ShockSchedule

import oracles

GRID = np.round(np.arange(0, 601) * 0.1, 10)


def power_sizes(alpha, n=400):
    return np.arange(1, n + 1, dtype=float) ** (-1 / alpha)


@pytest.fixture(scope="module")
def crossing_series():
    return sectors.integrate(ShockSchedule.constant(oracles.CROSSING_G, [1.0, 0.01]), GRID).k_tot


# --- rank-size --------------------------------------------------------------


@pytest.mark.parametrize("alpha", [1.5, 1.0])
def test_rank_fit_examples(alpha):
    fit = fitkit.rank_size_fit(power_sizes(alpha))
    assert fit.alpha_hat == pytest.approx(alpha, abs=0.01)
    assert fit.fit_range == (3, 360)
    assert fit.ci_halfwidth < 1e-8


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.5, 3.0), n=st.integers(20, 2000))
def test_rank_fit_exact_power_law(alpha, n):
    assert fitkit.rank_size_fit(power_sizes(alpha, n)).alpha_hat == pytest.approx(alpha, abs=1e-2)


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.5, 3.0), scale=st.floats(1e-6, 1e6))
def test_rank_fit_scale_invariant(alpha, scale):
    rng = np.random.default_rng(1)
    w = (1 - rng.random(300)) ** (-1 / alpha)
    assert abs(fitkit.rank_size_fit(scale * w).alpha_hat - fitkit.rank_size_fit(w).alpha_hat) < 1e-12 * alpha * 10


def test_rank_fit_sorts_descending():
    w = power_sizes(1.5, 50)
    fit = fitkit.rank_size_fit(np.random.default_rng(0).permutation(w))
    np.testing.assert_array_equal(fit.sorted_sizes, w)
    assert isinstance(fit, RankFit) and fit.alpha_hat > 0


def test_rank_fit_errors():
    with pytest.raises(NumericalError, match="degenerate rank profile"):
        fitkit.rank_size_fit(np.full(50, 3.0))
    with pytest.raises(ValueError, match="20"):
        fitkit.rank_size_fit(np.ones(19))
    with pytest.raises(ValueError):
        fitkit.rank_size_fit(np.r_[power_sizes(1.2, 30), -1.0])
    with pytest.raises(ValueError, match="fit_range"):
        fitkit.rank_size_fit(power_sizes(1.2, 30), fit_range=(5, 31))


def test_rank_fit_custom_range():
    fit = fitkit.rank_size_fit(power_sizes(2.0, 100), fit_range=(1, 100))
    assert fit.fit_range == (1, 100)
    assert fit.alpha_hat == pytest.approx(2.0, abs=1e-9)


# --- central-peak beta ------------------------------------------------------


def test_beta_levy_series():
    x = levy.sample_step(StepDistribution.pareto(1.4), stream(0), 100_000)
    est = fitkit.beta_from_series(np.exp(np.cumsum(x) * 1e-3))
    assert est.beta_hat == pytest.approx(1.4, abs=0.1)
    assert est.ci_halfwidth > 0
    np.testing.assert_array_equal(est.lags, [8, 16, 32, 64, 128, 256])


def test_beta_gaussian_series():
    g = stream(1).normal(size=100_000)
    assert fitkit.beta_from_series(np.exp(np.cumsum(g) * 1e-2)).beta_hat == pytest.approx(2.0, abs=0.2)


def test_beta_constant_series_rejected():
    with pytest.warns(UserWarning):
        with pytest.raises(NumericalError):
            fitkit.beta_from_series(np.full(5000, 7.0))


def test_beta_rejects_bad_levels_and_short_series():
    with pytest.raises(ValueError, match="> 0"):
        fitkit.beta_from_series(np.r_[np.ones(1000), 0.0])
    with pytest.raises(ValueError, match="too short"):
        fitkit.beta_from_series(np.ones(100))


@settings(max_examples=10, deadline=None)
@given(scale=st.floats(1e-6, 1e6), seed=st.integers(0, 1000))
def test_beta_level_scale_invariant(scale, seed):
    x = np.exp(np.cumsum(stream(seed).normal(size=20_000)) * 1e-2)
    lags = [8, 16, 32, 64]
    a = fitkit.beta_from_series(x, lags).beta_hat
    b = fitkit.beta_from_series(scale * x, lags).beta_hat
    assert b == pytest.approx(a, rel=1e-9)


# --- alpha = beta -----------------------------------------------------------


def test_alpha_beta_examples():
    ok = fitkit.alpha_beta_test(1.35, 1.40, 0.1)
    assert ok.verdict == "consistent" and ok.difference == pytest.approx(0.05)
    assert fitkit.alpha_beta_test(1.2, 1.8, 0.1).verdict == "inconsistent"
    assert math.isnan(ok.alpha_ci)
    with pytest.raises(ValueError):
        fitkit.alpha_beta_test(math.nan, 1.0)


@settings(max_examples=50)
@given(a=st.floats(0.1, 5), b=st.floats(0.1, 5), tol=st.floats(0, 1))
def test_verdict_rule(a, b, tol):
    rep = fitkit.alpha_beta_test(a, b, tol)
    assert (rep.verdict == "consistent") == (abs(a - b) <= tol)


def test_synthetic_index_shape_and_determinism():
    w, lv = fitkit.synthetic_wealth_index(1.3, 100, 1000, seed=4)
    assert w.shape == (100,) and lv.shape == (1001,)
    assert lv[0] == 1.0 and np.all(lv > 0)
    jumps = np.abs(np.diff(np.log(lv)))
    assert set(np.round(jumps * w.sum(), 9)) <= set(np.round(w, 9))
    w2, lv2 = fitkit.synthetic_wealth_index(1.3, 100, 1000, seed=4)
    np.testing.assert_array_equal(lv, lv2)


@pytest.mark.parametrize("alpha", [
    1.2, 1.4, 1.6,
    pytest.param(1.8, marks=pytest.mark.xfail(strict=True, reason="beta estimate biased low near the Gaussian boundary")),
])
def test_round_trip(alpha):
    for seed in range(3):
        _, levels = fitkit.synthetic_wealth_index(alpha, 10_000, 100_000, seed)
        assert abs(alpha - fitkit.beta_from_series(levels).beta_hat) < 0.1


# --- episodes ---------------------------------------------------------------


def test_episode_exact_fit(crossing_series):
    fit = fitkit.fit_crossing_episode(crossing_series, 0, 60, times=GRID)
    assert isinstance(fit, EpisodeFit) and not fit.single_exponential
    assert fit.lambda_old == pytest.approx(oracles.CROSSING_LAMBDA[1], abs=1e-6)
    assert fit.lambda_new == pytest.approx(oracles.CROSSING_LAMBDA[0], abs=1e-6)
    assert fit.rmse < 1e-6
    assert fit.c_old > 0 and fit.c_new > 0
    np.testing.assert_allclose(fit.model(GRID), crossing_series, rtol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_episode_noisy_fit(crossing_series, seed):
    noisy = crossing_series * (1 + 0.01 * stream(seed).normal(size=GRID.size))
    fit = fitkit.fit_crossing_episode(noisy, 0, 60, times=GRID)
    assert fit.lambda_old == pytest.approx(oracles.CROSSING_LAMBDA[1], abs=0.02)
    assert fit.lambda_new == pytest.approx(oracles.CROSSING_LAMBDA[0], abs=0.02)


def test_single_exponential_flagged():
    fit = fitkit.fit_crossing_episode(3 * np.exp(0.05 * GRID), 0, 60, times=GRID)
    assert fit.single_exponential
    assert fit.c_old == 0 and fit.lambda_old == fit.lambda_new
    assert fit.lambda_new == pytest.approx(0.05, abs=1e-9)
    assert fit.c_new == pytest.approx(3.0, rel=1e-9)


def test_episode_input_errors():
    with pytest.raises(ValueError, match="8 samples"):
        fitkit.fit_crossing_episode(np.ones(100), 0, 5)
    with pytest.raises(ValueError, match="> 0"):
        fitkit.fit_crossing_episode(np.r_[np.ones(20), -1.0], 0, 30)
    with pytest.raises(ValueError, match="lengths"):
        fitkit.fit_crossing_episode(np.ones(20), 0, 30, times=np.arange(19))


def test_episode_window_uses_series_times(crossing_series):
    fit = fitkit.fit_crossing_episode(crossing_series, 20, 40, times=GRID)
    assert fit.t_start == 20 and fit.t_end == 40
    # amplitudes refer to the window start
    assert fit.model(20.0) == pytest.approx(crossing_series[200], rel=1e-6)


def test_segment_two_episodes():
    t = np.round(np.arange(0, 301) * 0.1, 10)
    sch = ShockSchedule(((0.0, oracles.CROSSING_G), (8.0, oracles.SECOND_SHOCK_G)), [1.0, 0.1])
    eps = fitkit.segment_episodes(sectors.integrate(sch, t).k_tot, t)
    assert len(eps) == 2 and all(isinstance(e, EpisodeFit) for e in eps)
    assert abs(eps[0].t_end - 8.0) <= 0.1 + 1e-9
    for e in eps:
        assert e.lambda_old == pytest.approx(oracles.CROSSING_LAMBDA[1], abs=0.02)
        assert e.lambda_new == pytest.approx(oracles.CROSSING_LAMBDA[0], abs=0.02)


def test_segment_monotone_exponential():
    eps = fitkit.segment_episodes(np.exp(0.02 * np.arange(100.0)))
    assert len(eps) == 1 and eps[0].single_exponential


def test_segment_reports_failures_without_aborting():
    # a cusp near the end leaves a window with too few samples
    t = np.arange(100.0)
    v = np.exp(np.where(t < 95, 0.05 * t, 0.05 * 95 - 0.5 * (t - 95)))
    eps = fitkit.segment_episodes(v, t, window=3)
    assert isinstance(eps[0], EpisodeFit)
    assert isinstance(eps[-1], EpisodeFailure) and "8 samples" in eps[-1].message


def test_segment_rejects_short_series():
    with pytest.raises(ValueError, match="32"):
        fitkit.segment_episodes(np.ones(31))
