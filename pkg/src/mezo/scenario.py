"""Scenario files: validation, dispatch to the model modules, outputs and manifest.

A scenario is a TOML file::

    kind = "sectors"        # walk | lattice | levy | sectors | fit | pipeline
    seed = 7
    name = "crossing"       # output file prefix (defaults to the kind)
    out_dir = "out"         # relative to the scenario file
    plot = true

    [params]
    k0 = [1.0, 0.01]
    segments = [{t_start = 0.0, matrix = [[-0.35, 0.1], [0.1, 0.15]]}]

A pipeline replaces ``[params]`` with ``[[stages]]`` tables, each carrying
``kind``, ``name`` and ``params``. A fit stage may read ``series = "@stage"``,
the series emitted by an earlier levy or sectors stage.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from mezo import __version__, fitkit, lattice, levy, rngwalk, sectors
from mezo.errors import NumericalError, ScenarioError
from mezo.io import Provenance, load_series, load_wealth_list, sha256_file, write_csv, write_svg

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("walk", "lattice", "levy", "sectors", "fit", "pipeline")


class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


Lags = Union[str, list[int]]


def _lag_list(v: Lags) -> list[int]:
    out = rngwalk.parse_lags(v) if isinstance(v, str) else list(v)
    if not out or min(out) < 1:
        raise ValueError("lags must be a non-empty list of positive integers")
    return out


class WalkParams(_Params):
    dim: Literal[1, 2, 3] = 1
    steps: int = Field(512, ge=1)
    walkers: int = Field(100_000, ge=1)
    lags: Lags = "8:512:geometric"
    polya_horizon: Optional[int] = Field(None, ge=100)
    polya_walkers: int = Field(100_000, ge=1000)

    @model_validator(mode="after")
    def _check(self):
        lags = _lag_list(self.lags)
        if any(x % 2 for x in lags):
            raise ValueError("walk lags must be even")
        if max(lags) > self.steps:
            raise ValueError(f"max lag {max(lags)} exceeds steps {self.steps}")
        return self


class LatticeParams(_Params):
    dims: Literal[1, 2, 3] = 2
    side: int = Field(200, ge=2)
    mean_a: float = Field(1.0, ge=0)
    k0: int = Field(1, ge=0)
    s: float = Field(0.2, ge=0)
    delta: float = Field(0.4, ge=0)
    d_a: float = Field(0.1, ge=0)
    d_k: float = Field(0.1, ge=0)
    horizon: float = Field(15.0, gt=0)
    record: float = Field(1.0, gt=0)
    dt: float = Field(0.05, gt=0)
    ensemble: int = Field(1, ge=1)
    well_mixed: bool = False


class LevyParams(_Params):
    alpha: Optional[float] = Field(None, gt=0)
    uniform_bound: Optional[float] = Field(None, gt=0)
    steps: int = Field(2048, ge=2)
    paths: int = Field(100_000, ge=1)
    lags: Lags = "16:2048:geometric"
    series_steps: Optional[int] = Field(None, ge=100)

    @model_validator(mode="after")
    def _check(self):
        if (self.alpha is None) == (self.uniform_bound is None):
            raise ValueError("set exactly one of alpha or uniform_bound")
        if max(_lag_list(self.lags)) > self.steps:
            raise ValueError("max lag exceeds steps")
        return self

    def distribution(self) -> levy.StepDistribution:
        if self.alpha is not None:
            return levy.StepDistribution.pareto(self.alpha)
        return levy.StepDistribution.uniform(self.uniform_bound)


def _square_metzler(m: list[list[float]]) -> list[list[float]]:
    if not m or any(len(row) != len(m) for row in m):
        raise ValueError("matrix must be square")
    if any(m[i][j] < 0 for i in range(len(m)) for j in range(len(m)) if i != j):
        raise ValueError("off-diagonal transfers must be >= 0")
    return m


class Segment(_Params):
    t_start: float = Field(ge=0)
    matrix: list[list[float]]

    @field_validator("matrix")
    @classmethod
    def _square(cls, v):
        return _square_metzler(v)


class Sweep(_Params):
    g11: float
    g22: float
    mu: list[float] = Field(min_length=1)

    @field_validator("mu")
    @classmethod
    def _nonneg(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("mu values must be >= 0")
        return v


class SectorsParams(_Params):
    k0: list[float] = Field(min_length=1)
    segments: Optional[list[Segment]] = None
    sweep: Optional[Sweep] = None
    t_end: float = Field(60.0, gt=0)
    dt: float = Field(0.1, gt=0)
    method: Literal["auto", "analytic", "numerical"] = "auto"
    theta: float = Field(10.0, gt=0)

    @field_validator("k0")
    @classmethod
    def _pos(cls, v):
        if any(x <= 0 for x in v):
            raise ValueError("k0 components must be > 0")
        return v

    @model_validator(mode="after")
    def _check(self):
        if (self.segments is None) == (self.sweep is None):
            raise ValueError("set exactly one of segments or sweep")
        problems = []
        if self.segments is not None:
            if not self.segments:
                problems.append("segments must not be empty")
            elif self.segments[0].t_start != 0:
                problems.append("first segment must start at t_start = 0")
            starts = [s.t_start for s in self.segments]
            if any(b <= a for a, b in zip(starts, starts[1:])):
                problems.append("segment start times must be strictly increasing")
            for i, s in enumerate(self.segments):
                if len(s.matrix) != len(self.k0):
                    problems.append(f"segments[{i}] matrix is {len(s.matrix)}x{len(s.matrix)} but k0 has {len(self.k0)}")
        if self.sweep is not None and len(self.k0) != 2:
            problems.append("a mu sweep needs a two-sector k0")
        if self.dt > self.t_end:
            problems.append("dt must not exceed t_end")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def grid(self) -> np.ndarray:
        n = int(round(self.t_end / self.dt))
        return np.linspace(0.0, n * self.dt, n + 1)


class FitParams(_Params):
    wealth: Optional[str] = None
    series: Optional[str] = None
    lags: Optional[Lags] = None
    tolerance: float = Field(0.1, ge=0)
    fit_range: Optional[list[int]] = None
    episodes: bool = False
    beta: Optional[bool] = None  # default: estimate beta unless only episodes are wanted

    @property
    def wants_beta(self) -> bool:
        return self.series is not None and (self.beta if self.beta is not None else not self.episodes)

    @model_validator(mode="after")
    def _check(self):
        if self.wealth is None and self.series is None:
            raise ValueError("set wealth and/or series")
        if (self.episodes or self.beta) and self.series is None:
            raise ValueError("episodes and beta need a series")
        if self.lags is not None:
            _lag_list(self.lags)
        if self.fit_range is not None and (len(self.fit_range) != 2 or not 1 <= self.fit_range[0] < self.fit_range[1]):
            raise ValueError("fit_range must be [lo, hi] with 1 <= lo < hi")
        return self


PARAMS = {
    "walk": WalkParams,
    "lattice": LatticeParams,
    "levy": LevyParams,
    "sectors": SectorsParams,
    "fit": FitParams,
}


@dataclass(frozen=True)
class Stage:
    kind: str
    name: str
    params: _Params


@dataclass(frozen=True)
class Scenario:
    kind: str
    seed: int
    stages: tuple[Stage, ...]
    out_dir: Path
    plot: bool = True
    base_dir: Path = field(default=Path("."), compare=False)
    plot_path: Path | None = field(default=None, compare=False)

    @property
    def params(self) -> _Params:
        """Parameters of a single-stage scenario."""
        if self.kind == "pipeline":
            raise AttributeError("pipeline scenarios carry per-stage params")
        return self.stages[0].params

    def canonical(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "stages": [{"kind": s.kind, "name": s.name, "params": s.params.model_dump(mode="json")} for s in self.stages],
        }

    def digest(self) -> str:
        payload = self.canonical()
        inputs = {}
        for st in self.stages:
            for key in ("wealth", "series"):
                ref = getattr(st.params, key, None)
                if ref and not ref.startswith("@"):
                    p = self.resolve(ref)
                    inputs[f"{st.name}.{key}"] = sha256_file(p) if p.is_file() else None
        payload["inputs"] = inputs
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


@dataclass(frozen=True)
class Manifest:
    version: str
    scenario_hash: str
    seed: int
    wall_clock: float
    outputs: dict[str, str]
    summary: tuple[str, ...] = ()

    def to_json(self) -> str:
        return json.dumps(
            {
                "tool": "mezo",
                "version": self.version,
                "scenario_sha256": self.scenario_hash,
                "seed": self.seed,
                "wall_clock_seconds": round(self.wall_clock, 3),
                "outputs": self.outputs,
            },
            indent=2,
            sort_keys=True,
        )


# ---------------------------------------------------------------------------
# parsing


def _format_errors(prefix: str, exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"])
        where = f"{prefix}.{loc}" if loc else prefix
        msg = err["msg"].removeprefix("Value error, ")
        if err["type"] == "extra_forbidden":
            msg = "unknown key"
        elif err["type"] == "missing":
            msg = "missing required key"
        out.append(f"{where}: {msg}")
    return out


def _stage(kind, name, params, where: str, problems: list[str]) -> Stage | None:
    """Validate one stage; ``where`` prefixes problem locations ("" for a single-kind scenario)."""
    pre = f"{where}." if where else ""
    if kind not in PARAMS:
        problems.append(f"{pre}kind: unknown kind {kind!r} (expected one of {', '.join(PARAMS)})")
        return None
    if not isinstance(name, str) or not name or any(c in name for c in "/\\"):
        problems.append(f"{pre}name: must be a plain non-empty string")
        return None
    if not isinstance(params, dict):
        problems.append(f"{pre}params: must be a table")
        return None
    try:
        return Stage(kind, name, PARAMS[kind].model_validate(params))
    except ValidationError as exc:
        problems.extend(_format_errors(f"{pre}params", exc))
        return None


def scenario_from_dict(data: dict[str, Any], base_dir: Path | str = ".") -> Scenario:
    """Validate a scenario mapping; every problem is collected before raising."""
    base_dir = Path(base_dir)
    problems: list[str] = []
    data = dict(data)
    kind = data.pop("kind", None)
    seed = data.pop("seed", 0)
    name = data.pop("name", kind if isinstance(kind, str) else "run")
    out_dir = data.pop("out_dir", ".")
    plot = data.pop("plot", True)
    params = data.pop("params", None)
    raw_stages = data.pop("stages", None)
    for key in sorted(data):
        problems.append(f"{key}: unknown key")

    if kind is None:
        problems.append("kind: missing required key")
    elif kind not in KINDS:
        problems.append(f"kind: unknown kind {kind!r} (expected one of {', '.join(KINDS)})")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append("seed: must be a non-negative integer")
    if not isinstance(out_dir, str):
        problems.append("out_dir: must be a string")
    if not isinstance(plot, bool):
        problems.append("plot: must be true or false")

    stages: list[Stage] = []
    if kind == "pipeline":
        if params is not None:
            problems.append("params: pipelines take [[stages]], not [params]")
        if not isinstance(raw_stages, list) or not raw_stages:
            problems.append("stages: a pipeline needs at least one [[stages]] table")
            raw_stages = []
        seen: dict[str, str] = {}
        for i, raw in enumerate(raw_stages):
            where = f"stages[{i}]"
            if not isinstance(raw, dict):
                problems.append(f"{where}: must be a table")
                continue
            raw = dict(raw)
            skind = raw.pop("kind", None)
            sname = raw.pop("name", f"{skind}{i}")
            sparams = raw.pop("params", {})
            for key in sorted(raw):
                problems.append(f"{where}.{key}: unknown key")
            if skind is None:
                problems.append(f"{where}.kind: missing required key")
                continue
            st = _stage(skind, sname, sparams, where, problems)
            if st is None:
                continue
            if st.name in seen:
                problems.append(f"{where}.name: duplicate stage name {st.name!r}")
            ref = getattr(st.params, "series", None)
            if ref and ref.startswith("@"):
                src = ref[1:]
                if src not in seen:
                    problems.append(f"{where}.params.series: {ref!r} does not name an earlier stage")
                elif seen[src] not in ("levy", "sectors"):
                    problems.append(f"{where}.params.series: stage {src!r} ({seen[src]}) emits no series")
            seen[st.name] = st.kind
            stages.append(st)
    elif kind in PARAMS:
        if raw_stages is not None:
            problems.append("stages: only pipeline scenarios take [[stages]]")
        st = _stage(kind, name, params if params is not None else {}, "", problems)
        if st is not None:
            ref = getattr(st.params, "series", None)
            if ref and ref.startswith("@"):
                problems.append("params.series: '@stage' references only work inside a pipeline")
            stages.append(st)

    if problems:
        raise ScenarioError(problems)
    return Scenario(kind, int(seed), tuple(stages), Path(out_dir), plot, base_dir)


def parse_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError([f"{path}: scenario file not found"])
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError([f"{path}: {exc}"]) from None
    return scenario_from_dict(data, path.parent)


# ---------------------------------------------------------------------------
# running


@dataclass
class _Ctx:
    scenario: Scenario
    out_dir: Path
    prov: Provenance
    threads: int
    written: list[Path] = field(default_factory=list)
    series: dict[str, Path] = field(default_factory=dict)
    summary: list[str] = field(default_factory=list)

    def csv(self, filename: str, header, rows) -> Path:
        p = write_csv(self.out_dir / filename, header, rows, self.prov)
        self.written.append(p)
        return p

    def svg(self, filename: str, series, **kw):
        if not self.scenario.plot:
            return
        target = self.out_dir / filename
        if self.scenario.plot_path is not None and len(self.scenario.stages) == 1:
            target = self.scenario.plot_path
        p = write_svg(target, series, self.prov, **kw)
        if p is not None:
            self.written.append(p)


def _run_walk(ctx: _Ctx, st: Stage):
    p: WalkParams = st.params
    seed = ctx.scenario.seed
    stats = rngwalk.simulate_return_statistics(
        rngwalk.WalkEnsembleSpec(p.dim, p.steps, p.walkers, seed), _lag_list(p.lags), ctx.threads
    )
    ctx.csv(f"{st.name}.csv", ["lag", "p_origin", "stderr"],
            zip(stats.lags, stats.p_origin, stats.standard_errors))
    rows = []
    try:
        fit = rngwalk.fit_return_exponent(stats)
        rows.append(("slope", fit.slope, fit.ci_halfwidth))
        ctx.summary.append(f"{st.name}: log-log slope {fit.slope:.4f} +- {fit.ci_halfwidth:.4f} (expected {-p.dim / 2})")
    except ValueError as exc:
        ctx.summary.append(f"{st.name}: no slope ({exc})")
    if p.polya_horizon is not None:
        est = rngwalk.estimate_polya_constant(p.dim, p.polya_horizon, p.polya_walkers, seed, threads=ctx.threads)
        rows += [("polya", est.value, est.confidence_halfwidth), ("polya_raw", est.raw, math.nan),
                 ("tail_correction", est.tail_correction, math.nan)]
        ctx.summary.append(f"{st.name}: return constant {est.value:.4f} +- {est.confidence_halfwidth:.4f}")
    ctx.csv(f"{st.name}_fit.csv", ["quantity", "estimate", "ci_halfwidth"], rows)
    keep = stats.p_origin > 0
    ctx.svg(f"{st.name}.svg", {"Monte Carlo": (stats.lags[keep] / 2, stats.p_origin[keep])},
            title=f"return probability, d={p.dim}", xlabel="t (lag/2)", ylabel="P_origin", logx=True, logy=True)


def _run_lattice(ctx: _Ctx, st: Stage):
    p: LatticeParams = st.params
    scen = lattice.LatticeScenario(
        dims=p.dims, side=p.side, mean_a=p.mean_a, k0_per_site=p.k0,
        rates=lattice.ReactionRates(p.s, p.delta, p.d_a, p.d_k),
        horizon=p.horizon, record_interval=p.record, dt=p.dt,
    )
    runs = lattice.run_ensemble(scen, ctx.scenario.seed, p.ensemble, p.well_mixed, ctx.threads)
    summary = runs[0] if len(runs) == 1 else lattice.ensemble_median(runs)
    header = ["time", "k_total", "growth_set_size", "max_site_k", "overflowed"]

    def rows(r: lattice.RunSummary):
        return zip(r.times, r.k_total, r.growth_set_size, r.max_site_k, r.overflowed)

    ctx.csv(f"{st.name}.csv", header, rows(summary))
    if len(runs) > 1:
        ctx.csv(f"{st.name}_members.csv", ["member", *header],
                ((m, *row) for m, r in enumerate(runs) for row in rows(r)))
    g = lattice.naive_growth_rate(scen.rates, p.mean_a)
    factor = summary.growth_factor()
    mode = "well-mixed" if p.well_mixed else "spatial"
    ctx.summary.append(f"{st.name}: {mode}, naive rate g={g:+.4f}, K(T)/K(0) = {factor:.4g}"
                       + (" (median of %d)" % len(runs) if len(runs) > 1 else "")
                       + (" [overflow guard hit]" if bool(np.any(summary.overflowed)) else ""))
    k = np.asarray(summary.k_total, dtype=float)
    if np.all(k > 0):
        ctx.svg(f"{st.name}.svg", {"K(t)": (summary.times, k)}, title=f"{mode} lattice",
                xlabel="t", ylabel="K total", logy=True)


def _run_levy(ctx: _Ctx, st: Stage):
    p: LevyParams = st.params
    seed = ctx.scenario.seed
    dist = p.distribution()
    lags = _lag_list(p.lags)
    ens = levy.simulate_flight(dist, p.steps, p.paths, seed, record=lags, threads=ctx.threads)
    peak = levy.central_peak_estimate(ens, lags)
    width = levy.width_scaling(ens, lags)
    ctx.csv(f"{st.name}.csv", ["lag", "p_origin", "sigma", "stderr"],
            zip(peak.lags, peak.p_origin_hat, peak.sigma_hat, peak.stderr))
    pred = levy.predicted_peak_slope(dist)
    ctx.csv(f"{st.name}_fit.csv", ["quantity", "estimate", "ci_halfwidth"], [
        ("peak_slope", peak.slope, peak.slope_ci),
        ("width_exponent", width.exponent, width.exponent_ci),
        ("predicted_peak_slope", pred, math.nan),
    ])
    regime = levy.classify_regime(dist.alpha).value if dist.kind == "pareto" else "Gaussian"
    ctx.summary.append(f"{st.name}: peak slope {peak.slope:.4f} +- {peak.slope_ci:.4f} (predicted {pred:.4f}), "
                       f"width exponent {width.exponent:.4f}, regime {regime}")
    ctx.svg(f"{st.name}.svg", {"P_origin": (peak.lags, peak.p_origin_hat)}, title="central peak",
            xlabel="lag", ylabel="P_origin", logx=True, logy=True)
    if p.series_steps is not None:
        path = levy.simulate_flight(dist, p.series_steps, 1, seed, stream_key=(1,)).paths[0]
        # exp of the rescaled walk keeps levels finite; beta is unaffected by the rescaling
        levels = np.exp(path / max(1.0, float(np.abs(path).max())))
        ctx.series[st.name] = ctx.csv(f"{st.name}_series.csv", ["time", "value"],
                                      zip(range(levels.size), levels))


def _run_sectors(ctx: _Ctx, st: Stage):
    p: SectorsParams = st.params
    grid = p.grid()
    n = len(p.k0)
    header = ["time", *[f"k_{i + 1}" for i in range(n)], "k_tot", *[f"rate_{i + 1}" for i in range(n)]]

    def emit(tag: str, schedule: sectors.ShockSchedule):
        tr = sectors.integrate(schedule, grid, p.method)
        ctx.csv(f"{tag}.csv", header, (
            (t, *k, kt, *r) for t, k, kt, r in zip(tr.times, tr.k, tr.k_tot, tr.rates)))
        cusps = sectors.detect_cusps(tr.k_tot, tr.times, theta=p.theta) if grid.size >= 16 else []
        ctx.csv(f"{tag}_cusps.csv", ["time", "kind"], ((c.time, c.kind) for c in cusps))
        return tr, cusps

    if p.segments is not None:
        sched = sectors.ShockSchedule(tuple((s.t_start, sectors.GrowthMatrix.of(s.matrix)) for s in p.segments), p.k0)
        tr, cusps = emit(st.name, sched)
        for s in p.segments:
            eig = sectors.eigen_solve(sectors.GrowthMatrix.of(s.matrix))
            vals = ", ".join(f"{v:.6g}" for v in np.real_if_close(eig.eigenvalues))
            ctx.summary.append(f"{st.name}: segment t>={s.t_start:g}: eigenvalues [{vals}], lambda_max {eig.lambda_max:.6g}")
        kinds = [c.kind for c in cusps]
        ctx.summary.append(f"{st.name}: {kinds.count('cusp-max')} cusp maxima, {kinds.count('smooth-min')} smooth minima")
        ctx.series[st.name] = ctx.csv(f"{st.name}_series.csv", ["time", "value"], zip(tr.times, tr.k_tot))
        plot = {"K_tot": (tr.times, tr.k_tot)}
        plot.update({f"k_{i + 1}": (tr.times, tr.k[:, i]) for i in range(n)})
        ctx.svg(f"{st.name}.svg", plot, title="sector trajectories", xlabel="t", ylabel="K", logy=True)
        return

    sw = p.sweep
    rows, plot = [], {}
    for mu in sw.mu:
        g = sectors.build_policy_matrix(sw.g11, sw.g22, mu)
        tr, _ = emit(f"{st.name}_mu{mu:g}", sectors.ShockSchedule.constant(g, p.k0))
        lam = sectors.eigen_solve(g).lambda_max
        i = int(np.argmin(tr.k_tot))
        rows.append((mu, lam, tr.times[i], tr.k_tot[i], tr.k_tot[-1]))
        plot[f"mu={mu:g}"] = (tr.times, tr.k_tot)
        ctx.summary.append(f"{st.name}: mu={mu:g} lambda_max {lam:+.6f}, min K_tot {tr.k_tot[i]:.4f} at t={tr.times[i]:g}")
    ctx.csv(f"{st.name}_sweep.csv", ["mu", "lambda_max", "trough_time", "trough_k_tot", "final_k_tot"], rows)
    ctx.svg(f"{st.name}.svg", plot, title="transfer policy sweep", xlabel="t", ylabel="K_tot", logy=True)


def _run_fit(ctx: _Ctx, st: Stage):
    p: FitParams = st.params
    rows, report = [], []
    rank = beta = None
    if p.wealth is not None:
        sizes = load_wealth_list(ctx.scenario.resolve(p.wealth))
        rank = fitkit.rank_size_fit(sizes, None if p.fit_range is None else tuple(p.fit_range))
        rows.append(("alpha", rank.alpha_hat, rank.ci_halfwidth))
        report.append(f"alpha = {rank.alpha_hat:.4f} +- {rank.ci_halfwidth:.4f} (ranks {rank.fit_range[0]}-{rank.fit_range[1]})")
    times = values = None
    if p.series is not None:
        src = ctx.series[p.series[1:]] if p.series.startswith("@") else ctx.scenario.resolve(p.series)
        times, values = load_series(src)
    if p.wants_beta:
        beta = fitkit.beta_from_series(values, None if p.lags is None else _lag_list(p.lags))
        rows.append(("beta", beta.beta_hat, beta.ci_halfwidth))
        report.append(f"beta  = {beta.beta_hat:.4f} +- {beta.ci_halfwidth:.4f} (lags {beta.lags[0]}-{beta.lags[-1]})")
    if rank is not None and beta is not None:
        ab = fitkit.alpha_beta_test(rank, beta, p.tolerance)
        rows.append(("abs_difference", ab.difference, math.nan))
        report.append(f"|alpha - beta| = {ab.difference:.4f} -> {ab.verdict} at tolerance {p.tolerance:g}")
    ctx.csv(f"{st.name}.csv", ["quantity", "estimate", "ci_halfwidth"], rows)
    if p.episodes:
        eps = fitkit.segment_episodes(values, times)
        ep_rows = []
        for e in eps:
            if isinstance(e, fitkit.EpisodeFailure):
                ep_rows.append((e.t_start, e.t_end, *[math.nan] * 5, 0, e.message))
                report.append(f"episode [{e.t_start:g}, {e.t_end:g}]: failed ({e.message})")
            else:
                ep_rows.append((e.t_start, e.t_end, e.lambda_old, e.lambda_new, e.c_old, e.c_new, e.rmse,
                                e.single_exponential, ""))
                tag = " single exponential" if e.single_exponential else ""
                report.append(f"episode [{e.t_start:g}, {e.t_end:g}]: rates {e.lambda_old:+.4f} / {e.lambda_new:+.4f}{tag}")
        ctx.csv(f"{st.name}_episodes.csv", ["t_start", "t_end", "lambda_old", "lambda_new", "c_old", "c_new", "rmse",
                                            "single_exponential", "error"], ep_rows)
    txt = ctx.out_dir / f"{st.name}.txt"
    txt.write_text("".join(f"# {line}\n" for line in ctx.prov.lines()) + "\n".join(report) + "\n")
    ctx.written.append(txt)
    ctx.summary.extend(f"{st.name}: {line}" for line in report)


_RUNNERS = {"walk": _run_walk, "lattice": _run_lattice, "levy": _run_levy, "sectors": _run_sectors, "fit": _run_fit}


def _check_writable(out_dir: Path):
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ScenarioError([f"out_dir: cannot create {out_dir}: {exc.strerror}"]) from None
    if not os.access(out_dir, os.W_OK):
        raise ScenarioError([f"out_dir: {out_dir} is not writable"])


def run_scenario(scenario: Scenario, threads: int = 1, out_dir: Path | str | None = None) -> Manifest:
    """Run every stage in order, write outputs and ``<name>.manifest.json``."""
    if threads < 1:
        raise ValueError("threads must be >= 1")
    out = Path(out_dir) if out_dir is not None else scenario.resolve(str(scenario.out_dir))
    _check_writable(out)
    start = time.perf_counter()
    digest = scenario.digest()
    ctx = _Ctx(scenario, out, Provenance(scenario.seed, digest), threads)
    for st in scenario.stages:
        where = f"stage {st.name!r} ({st.kind})"
        try:
            _RUNNERS[st.kind](ctx, st)
        except NumericalError as exc:
            raise type(exc)(f"{where}: {exc}") from exc
        except ScenarioError as exc:
            raise ScenarioError([f"{where}: {q}" for q in exc.problems]) from exc
        except ValueError as exc:
            raise ScenarioError([f"{where}: {exc}"]) from exc
    manifest = Manifest(
        version=__version__,
        scenario_hash=digest,
        seed=scenario.seed,
        wall_clock=time.perf_counter() - start,
        outputs={p.name: sha256_file(p) for p in ctx.written},
        summary=tuple(ctx.summary),
    )
    label = scenario.stages[0].name if scenario.kind != "pipeline" else "pipeline"
    (out / f"{label}.manifest.json").write_text(manifest.to_json() + "\n")
    return manifest
