"""Autocatalytic reaction-diffusion agents on a periodic lattice.

Resource agents ``a`` only diffuse. Proliferating agents ``k`` reproduce at
rate ``s`` per (k, a) pair on the same site (k + a -> k + k + a), die at rate
``delta`` and diffuse. Time is advanced by synchronous tau-leaping: every
site draws its events against the pre-step state, then all updates are
applied at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from mezo._rng import frozen, map_chunks, stream
from mezo.rngwalk import POLYA_CONSTANTS

#: Sites are frozen at this count and the run is flagged (no Verhulst term).
OVERFLOW_GUARD = 10**15
MAX_EVENT_PROBABILITY = 0.5

_KEY_INIT = 0
_KEY_STEP = 1


@dataclass(frozen=True)
class ReactionRates:
    s: float
    delta: float
    d_a: float = 0.0
    d_k: float = 0.0

    def __post_init__(self):
        for name in ("s", "delta", "d_a", "d_k"):
            if getattr(self, name) < 0:
                raise ValueError(f"rate {name} must be >= 0")


@dataclass(frozen=True)
class LatticeState:
    dims: int
    side: int
    a_counts: np.ndarray
    k_counts: np.ndarray
    time: float = 0.0
    overflowed: bool = False

    @property
    def total_a(self) -> int:
        return int(self.a_counts.sum())

    @property
    def total_k(self) -> int:
        return _exact_sum(self.k_counts)


@dataclass(frozen=True)
class RunSummary:
    times: np.ndarray
    k_total: tuple[int, ...]
    growth_set_size: np.ndarray
    max_site_k: np.ndarray
    overflowed: np.ndarray
    final_state: LatticeState | None = field(default=None, repr=False, compare=False)

    def growth_factor(self) -> float:
        return self.k_total[-1] / self.k_total[0] if self.k_total[0] else math.nan


def _exact_sum(k: np.ndarray) -> int:
    if float(k.sum(dtype=float)) < 9.0e18:
        return int(k.sum())
    return sum(int(v) for v in k.ravel())


def poisson_pmf(mean: float, count: int) -> float:
    """``mean**count * exp(-mean) / count!``."""
    if mean < 0:
        raise ValueError("mean must be >= 0")
    if count < 0:
        return 0.0
    if mean == 0:
        return 1.0 if count == 0 else 0.0
    return math.exp(count * math.log(mean) - mean - math.lgamma(count + 1))


def naive_growth_rate(rates: ReactionRates, mean_a: float) -> float:
    """Mean-field growth rate g = s*A - delta."""
    return rates.s * mean_a - rates.delta


def survival_condition(rates: ReactionRates, dims: int) -> bool:
    """Whether k survives: s / D_A > 1 - Pol_d.

    With D_A = 0 the resource never moves, so any s > 0 suffices.
    """
    if dims not in POLYA_CONSTANTS:
        raise ValueError("dims must be 1, 2 or 3")
    if rates.d_a == 0:
        return rates.s > 0
    return rates.s / rates.d_a > 1.0 - POLYA_CONSTANTS[dims]


def init_lattice(dims: int, side: int, mean_a: float, k0_per_site: int, seed: int, member: int = 0) -> LatticeState:
    """Poisson(mean_a) resource counts per site and a uniform k population."""
    if dims not in (1, 2, 3):
        raise ValueError("dims must be 1, 2 or 3")
    if side < 2:
        raise ValueError("side must be >= 2")
    if mean_a < 0:
        raise ValueError("mean_a must be >= 0")
    if k0_per_site < 0:
        raise ValueError("k0_per_site must be >= 0")
    shape = (side,) * dims
    rng = stream(seed, member, _KEY_INIT)
    a = rng.poisson(mean_a, size=shape).astype(np.int64)
    k = np.full(shape, k0_per_site, dtype=np.int64)
    return LatticeState(dims, side, a, k)


def max_event_probability(state: LatticeState, rates: ReactionRates, dt: float, well_mixed: bool = False) -> float:
    a_max = state.a_counts.mean() if well_mixed else state.a_counts.max(initial=0)
    k_rate = rates.s * a_max + rates.delta + rates.d_k
    return max(k_rate, rates.d_a) * dt


def _diffuse(counts: np.ndarray, movers: np.ndarray, dims: int, rng: np.random.Generator) -> np.ndarray:
    """Remove ``movers`` from each site and spread them uniformly over the 2d neighbours."""
    out = counts - movers
    remaining = movers
    n_dir = 2 * dims
    for j in range(n_dir):
        if j < n_dir - 1:
            flow = rng.binomial(remaining, 1.0 / (n_dir - j))
            remaining = remaining - flow
        else:
            flow = remaining
        axis, shift = j // 2, (1 if j % 2 == 0 else -1)
        out += np.roll(flow, shift, axis=axis)
    return out


def step(
    state: LatticeState,
    rates: ReactionRates,
    dt: float,
    rng: np.random.Generator,
    well_mixed: bool = False,
) -> LatticeState:
    """Advance one tau-leap of length ``dt``.

    Births ~ Poisson(s k a dt), deaths ~ Binomial(k, delta dt), and each
    surviving agent hops with probability D dt to a uniformly chosen
    neighbour. Raises if any per-agent event probability exceeds 0.5.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    p_max = max_event_probability(state, rates, dt, well_mixed)
    if p_max > MAX_EVENT_PROBABILITY:
        raise ValueError(f"dt={dt} gives per-agent event probability {p_max:.3f} > {MAX_EVENT_PROBABILITY}")
    a, k = state.a_counts, state.k_counts
    local_a = np.full(a.shape, a.mean()) if well_mixed else a

    births = rng.poisson(rates.s * dt * k * local_a) if rates.s > 0 else 0
    deaths = rng.binomial(k, rates.delta * dt) if rates.delta > 0 else 0
    survivors = k - deaths
    k_new = survivors
    if rates.d_k > 0:
        k_new = _diffuse(survivors, rng.binomial(survivors, rates.d_k * dt), state.dims, rng)
    k_new = k_new + births
    a_new = a
    if rates.d_a > 0:
        a_new = _diffuse(a, rng.binomial(a, rates.d_a * dt), state.dims, rng)

    overflowed = state.overflowed
    if k_new.max(initial=0) > OVERFLOW_GUARD:
        k_new = np.minimum(k_new, OVERFLOW_GUARD)
        overflowed = True
    return replace(
        state,
        a_counts=np.asarray(a_new, dtype=np.int64),
        k_counts=np.asarray(k_new, dtype=np.int64),
        time=state.time + dt,
        overflowed=overflowed,
    )


def run(
    state: LatticeState,
    rates: ReactionRates,
    horizon: float,
    record_interval: float,
    seed: int,
    member: int = 0,
    dt: float = 0.05,
    well_mixed: bool = False,
) -> RunSummary:
    """Integrate to ``horizon``, recording totals every ``record_interval``.

    ``dt`` is halved as needed so the event-probability cap holds at the
    current state; steps are also shortened to land on record times.
    """
    if horizon <= 0 or record_interval <= 0:
        raise ValueError("horizon and record_interval must be positive")
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_rec = int(math.floor(horizon / record_interval + 1e-9))
    record_times = [state.time + i * record_interval for i in range(n_rec + 1)]
    if record_times[-1] < state.time + horizon - 1e-9:
        record_times.append(state.time + horizon)

    def growth_set(st: LatticeState) -> int:
        a = np.full(st.a_counts.shape, st.a_counts.mean()) if well_mixed else st.a_counts
        return int(np.count_nonzero(rates.s * a > rates.delta))

    times, totals, gs, mx, ov = [], [], [], [], []

    def record(st: LatticeState):
        times.append(st.time)
        totals.append(st.total_k)
        gs.append(growth_set(st))
        mx.append(int(st.k_counts.max(initial=0)))
        ov.append(st.overflowed)

    record(state)
    n_step = 0
    for target in record_times[1:]:
        while state.time < target - 1e-12:
            h = min(dt, target - state.time)
            while max_event_probability(state, rates, h, well_mixed) > MAX_EVENT_PROBABILITY:
                h /= 2
            state = step(state, rates, h, stream(seed, member, _KEY_STEP, n_step), well_mixed)
            n_step += 1
        state = replace(state, time=target)
        record(state)
    return RunSummary(
        times=frozen(times),
        k_total=tuple(totals),
        growth_set_size=frozen(gs, dtype=np.int64),
        max_site_k=frozen(mx, dtype=np.int64),
        overflowed=frozen(ov, dtype=bool),
        final_state=state,
    )


@dataclass(frozen=True)
class LatticeScenario:
    dims: int = 2
    side: int = 200
    mean_a: float = 1.0
    k0_per_site: int = 1
    rates: ReactionRates = ReactionRates(s=0.2, delta=0.4, d_a=0.05, d_k=0.05)
    horizon: float = 15.0
    record_interval: float = 1.0
    dt: float = 0.05


def run_ensemble(
    scenario: LatticeScenario,
    seed: int,
    members: int = 1,
    well_mixed: bool = False,
    threads: int = 1,
) -> list[RunSummary]:
    """Independent runs keyed by ``(seed, member)``; order-independent."""

    def work(i, lo, hi):
        out = []
        for m in range(lo, hi):
            st = init_lattice(scenario.dims, scenario.side, scenario.mean_a, scenario.k0_per_site, seed, member=m)
            out.append(
                run(st, scenario.rates, scenario.horizon, scenario.record_interval, seed,
                    member=m, dt=scenario.dt, well_mixed=well_mixed)
            )
        return out

    return [r for chunk in map_chunks(work, members, 1, threads) for r in chunk]


def ensemble_median(runs: Sequence[RunSummary]) -> RunSummary:
    """Per-record median across members; overflow flag is any-member."""
    if not runs:
        raise ValueError("no runs")
    k = np.array([[float(v) for v in r.k_total] for r in runs])
    return RunSummary(
        times=runs[0].times,
        k_total=tuple(np.median(k, axis=0).tolist()),
        growth_set_size=frozen(np.median([r.growth_set_size for r in runs], axis=0)),
        max_site_k=frozen(np.median([r.max_site_k for r in runs], axis=0)),
        overflowed=frozen(np.any([r.overflowed for r in runs], axis=0)),
    )
