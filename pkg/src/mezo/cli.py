"""Command-line entry point: ``mezo <subcommand>``.

Every subcommand builds a scenario and hands it to :func:`run_scenario`, so
flag-driven runs and scenario files produce identical outputs and manifests.
Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from mezo import __version__
from mezo.errors import NumericalError, ScenarioError
from mezo.scenario import parse_scenario, run_scenario, scenario_from_dict

log = logging.getLogger("mezo")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _mu_values(text: str) -> list[float]:
    """``a:b:n`` (n evenly spaced values) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        try:
            a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        except (ValueError, IndexError):
            raise argparse.ArgumentTypeError(f"expected a:b:n, got {text!r}") from None
        if len(parts) != 3 or n < 1:
            raise argparse.ArgumentTypeError(f"expected a:b:n with n >= 1, got {text!r}")
        return np.linspace(a, b, n).tolist()
    return _float_list(text)


def _lags(text: str):
    return text if ":" in text else [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads (default 1)")
    common.add_argument("--out-dir", type=Path, default=argparse.SUPPRESS, help="output directory")

    p = argparse.ArgumentParser(prog="mezo", description="Simulate granular growth models and estimate their exponents.", parents=[common])
    p.add_argument("--version", action="version", version=f"mezo {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("walk", parents=[common], help="return-to-origin statistics of lattice walks")
    w.add_argument("--dim", type=int, default=1)
    w.add_argument("--steps", type=int, default=512)
    w.add_argument("--walkers", type=int, default=100_000)
    w.add_argument("--lags", type=_lags, default="8:512:geometric", help="comma list or a:b:geometric")
    w.add_argument("--polya-horizon", type=int, help="also estimate the return constant to this horizon")
    w.add_argument("--polya-walkers", type=int, default=100_000)
    w.add_argument("--out", type=Path, default=Path("walk.csv"))
    w.add_argument("--plot", type=Path)

    la = sub.add_parser("lattice", parents=[common], help="autocatalytic agents on a periodic lattice")
    la.add_argument("--dims", type=int, default=2)
    la.add_argument("--side", type=int, default=200)
    la.add_argument("--mean-a", type=float, default=1.0)
    la.add_argument("--k0", type=int, default=1)
    la.add_argument("--s", type=float, default=0.2)
    la.add_argument("--delta", type=float, default=0.4)
    la.add_argument("--da", type=float, default=0.1)
    la.add_argument("--dk", type=float, default=0.1)
    la.add_argument("--horizon", type=float, default=15.0)
    la.add_argument("--record", type=float, default=1.0)
    la.add_argument("--dt", type=float, default=0.05)
    la.add_argument("--ensemble", type=int, default=1)
    la.add_argument("--well-mixed", action="store_true")
    la.add_argument("--out", type=Path, default=Path("lattice.csv"))
    la.add_argument("--plot", type=Path)

    lv = sub.add_parser("levy", parents=[common], help="Levy flights and central-peak scaling")
    g = lv.add_mutually_exclusive_group(required=True)
    g.add_argument("--alpha", type=float)
    g.add_argument("--uniform-bound", type=float)
    lv.add_argument("--steps", type=int, default=2048)
    lv.add_argument("--paths", type=int, default=100_000)
    lv.add_argument("--lags", type=_lags, default="16:2048:geometric")
    lv.add_argument("--series-steps", type=int, help="also emit one long path as a level series")
    lv.add_argument("--out", type=Path, default=Path("levy.csv"))
    lv.add_argument("--plot", type=Path)

    se = sub.add_parser("sectors", parents=[common], help="multi-sector growth with shocks")
    se.add_argument("scenario", nargs="?", type=Path, help="sectors scenario file")
    se.add_argument("--sweep-mu", type=_mu_values, help="a:b:n or comma list of transfer values")
    se.add_argument("--g11", type=float, help="intrinsic rate of sector 1 (sweep)")
    se.add_argument("--g22", type=float, help="intrinsic rate of sector 2 (sweep)")
    se.add_argument("--k0", type=_float_list, help="initial sectors, comma list (sweep default 0.1,0.9)")
    se.add_argument("--t-end", type=float, help="horizon (default 60)")
    se.add_argument("--dt", type=float, help="output grid step (default 0.1)")
    se.add_argument("--out", type=Path, help="trajectory CSV; its stem prefixes the other outputs")
    se.add_argument("--plot", type=Path, help="log-scale SVG plot")

    f = sub.add_parser("fit", parents=[common], help="rank-size alpha, central-peak beta, episodes")
    f.add_argument("--wealth", type=Path, help="CSV with 'size' or 'rank,size'")
    f.add_argument("--series", type=Path, help="CSV with 'time,value'")
    f.add_argument("--lags", type=_lags)
    f.add_argument("--tolerance", type=float, default=0.1)
    f.add_argument("--episodes", action="store_true", help="segment the series into crossing-exponential episodes")
    f.add_argument("--beta", action=argparse.BooleanOptionalAction, default=None,
                   help="estimate beta from the series (default: on unless --episodes)")
    f.add_argument("--out", type=Path, default=Path("fit.csv"))

    r = sub.add_parser("run", parents=[common], help="run a scenario file")
    r.add_argument("scenario_file", type=Path)
    return p


def _out_parts(out: Path | None, default: str) -> tuple[str, str]:
    if out is None:
        return default, "."
    return out.stem, str(out.parent)


def _scenario(args):
    seed = getattr(args, "seed", 0)
    cmd = args.command
    if cmd == "run":
        sc = parse_scenario(args.scenario_file)
        return dataclasses.replace(sc, seed=seed) if hasattr(args, "seed") else sc

    if cmd == "sectors" and args.scenario is not None:
        sc = parse_scenario(args.scenario)
        if sc.kind != "sectors":
            raise ScenarioError([f"kind: expected a sectors scenario, got {sc.kind!r}"])
        if hasattr(args, "seed"):
            sc = dataclasses.replace(sc, seed=seed)
        if args.out is not None:
            stage = dataclasses.replace(sc.stages[0], name=args.out.stem)
            sc = dataclasses.replace(sc, stages=(stage,), out_dir=args.out.parent, base_dir=Path("."))
        return dataclasses.replace(sc, plot=args.plot is not None or sc.plot, plot_path=args.plot)

    if cmd == "walk":
        params = dict(dim=args.dim, steps=args.steps, walkers=args.walkers, lags=args.lags,
                      polya_walkers=args.polya_walkers)
        if args.polya_horizon is not None:
            params["polya_horizon"] = args.polya_horizon
    elif cmd == "lattice":
        params = dict(dims=args.dims, side=args.side, mean_a=args.mean_a, k0=args.k0, s=args.s, delta=args.delta,
                      d_a=args.da, d_k=args.dk, horizon=args.horizon, record=args.record, dt=args.dt,
                      ensemble=args.ensemble, well_mixed=args.well_mixed)
    elif cmd == "levy":
        params = dict(steps=args.steps, paths=args.paths, lags=args.lags)
        if args.alpha is not None:
            params["alpha"] = args.alpha
        else:
            params["uniform_bound"] = args.uniform_bound
        if args.series_steps is not None:
            params["series_steps"] = args.series_steps
    elif cmd == "sectors":
        if args.sweep_mu is None:
            raise ScenarioError(["sectors: give a scenario file or --sweep-mu with --g11 and --g22"])
        missing = [flag for flag, v in (("--g11", args.g11), ("--g22", args.g22)) if v is None]
        if missing:
            raise ScenarioError([f"sectors: {flag} is required with --sweep-mu" for flag in missing])
        params = dict(k0=args.k0 or [0.1, 0.9], sweep=dict(g11=args.g11, g22=args.g22, mu=args.sweep_mu))
        if args.t_end is not None:
            params["t_end"] = args.t_end
        if args.dt is not None:
            params["dt"] = args.dt
    else:  # fit
        params = dict(tolerance=args.tolerance, episodes=args.episodes)
        if args.beta is not None:
            params["beta"] = args.beta
        if args.wealth is not None:
            params["wealth"] = str(args.wealth)
        if args.series is not None:
            params["series"] = str(args.series)
        if args.lags is not None:
            params["lags"] = args.lags

    name, out_dir = _out_parts(getattr(args, "out", None), cmd)
    sc = scenario_from_dict(dict(kind=cmd, seed=seed, name=name, out_dir=out_dir, plot=False, params=params))
    plot = getattr(args, "plot", None)
    return dataclasses.replace(sc, plot=plot is not None, plot_path=plot)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    logging.captureWarnings(True)
    try:
        scenario = _scenario(args)
        manifest = run_scenario(scenario, threads=getattr(args, "threads", 1), out_dir=getattr(args, "out_dir", None))
    except ScenarioError as exc:
        for problem in exc.problems:
            log.error("error: %s", problem)
        return EXIT_INVALID
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except ValueError as exc:
        log.error("error: %s", exc)
        return EXIT_INVALID
    for line in manifest.summary:
        log.info(line)
    for name, digest in manifest.outputs.items():
        log.debug("%s  %s", digest[:16], name)
    log.info("wrote %d files (scenario %s, seed %d)", len(manifest.outputs), manifest.scenario_hash[:12], manifest.seed)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
