"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .calibration import (CalibrationConfig, FitResult, LearnableParamSet, ObservationSeries,
                          calibrate)
from .config import RunConfig, load_config
from .ensemble import EnsembleConfig, EnsembleSummary, run_ensemble
from .epi.engine import SimSettings, Simulator
from .epi.modulator import ModulatorWeights
from .errors import DataError, DivergenceError, GradEpiError, WeekRangeMismatch
from .metrics import comparison_report, read_breakdown_csv, write_breakdown_csv
from .population import (ContactGraph, Population, build_contact_graph, generate_synthetic,
                         load_population)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2, which we reserve for data errors
        raise UsageError(f"{self.prog}: error: {message}")


# --- shared plumbing --------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads (default: all cores)")
    p.add_argument("--out-dir", type=Path, help="output directory (overrides [io] output_dir)")


def _config(args: argparse.Namespace, io: dict | None = None,
            extra: dict | None = None) -> RunConfig:
    overrides: dict = dict(extra or {})
    if args.seed is not None:
        if args.seed < 0:
            raise UsageError("--seed must be non-negative")
        overrides["seed"] = args.seed
    io = {k: str(v) for k, v in (io or {}).items() if v is not None}
    if args.out_dir is not None:
        io["output_dir"] = str(args.out_dir.resolve())
    if io:
        overrides["io"] = io
    return load_config(args.config, overrides)


def _require(*paths: Path | None) -> None:
    """Fail before any work if a referenced input is missing."""
    for p in paths:
        if p is not None and not p.exists():
            raise FileNotFoundError(f"no such file: {p}")


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.path("output_dir") or Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _world(cfg: RunConfig) -> tuple[Population, ContactGraph]:
    agents = cfg.path("agents")
    if agents is not None:
        pop = load_population(agents, cfg.path("venues"))
    else:
        pop = generate_synthetic(cfg.population, cfg.seed)
    return pop, build_contact_graph(pop, cfg.disease.venue_params)


def _restriction(cfg: RunConfig) -> str | None:
    return cfg.simulation["restriction"] or None


def _fresh_modulator(cfg: RunConfig) -> ModulatorWeights | None:
    sim = cfg.simulation
    if not sim["modulator"]:
        return None
    rng = np.random.default_rng([cfg.seed, 7])
    return ModulatorWeights.xavier(rng, int(sim["hidden_size"]), float(sim["phi_max"]))


def _say(*parts) -> None:
    print(*parts, flush=True)


# --- subcommands --------------------------------------------------------------------

def cmd_synth_pop(args: argparse.Namespace) -> int:
    extra = {"population": {"n_agents": args.n_agents}} if args.n_agents is not None else None
    cfg = _config(args, extra=extra)
    pop = generate_synthetic(cfg.population, cfg.seed)
    out = _out_dir(cfg)
    pop.write(out / "agents.csv", out / "venues.csv", comment=f"config_hash: {cfg.hash()}")
    _say(f"wrote {pop.n_agents} agents and {pop.n_venues} venues to {out}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _config(args, {"agents": args.population, "venues": args.venues, "fit": args.fit})
    _require(cfg.path("agents"), cfg.path("venues"), cfg.path("fit"))
    params, modulator = cfg.disease, _fresh_modulator(cfg)
    fit_path = cfg.path("fit")
    if fit_path is not None:
        fit = FitResult.read_json(fit_path)
        params, modulator = fit.params, fit.modulator
    pop, graph = _world(cfg)
    sim_cfg = cfg.simulation
    horizon = args.horizon or int(sim_cfg["horizon_days"])
    settings = SimSettings(horizon_days=horizon, mode=sim_cfg["mode"],
                           temperature=float(sim_cfg["temperature"]),
                           gate_sharpness=float(sim_cfg["gate_sharpness"]))
    trace = Simulator(pop, graph, settings, cfg.policies).run(
        params, cfg.seed, modulator=modulator, restriction=_restriction(cfg))
    out = _out_dir(cfg) / "trace.csv"
    trace.write_csv(out, comment=f"config_hash: {cfg.hash()}")
    total = float(np.sum(trace.new_infections))
    _say(f"simulated {horizon} days on {pop.n_agents} agents: {total:g} infections -> {out}")
    return EXIT_OK


def _observed(cfg: RunConfig) -> ObservationSeries:
    obs = ObservationSeries.from_csv(cfg.path("observed"))
    if cfg.week_range is None:
        return obs
    first, last = cfg.week_range
    have = obs.week_index
    if first < have[0] or last > have[-1]:
        raise WeekRangeMismatch(
            f"week_range [{first}..{last}] is not inside the observed weeks "
            f"[{int(have[0])}..{int(have[-1])}]")
    keep = (have >= first) & (have <= last)
    return ObservationSeries(have[keep], obs.cases[keep], obs.region)


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = _config(args, {"agents": args.population, "venues": args.venues,
                         "observed": args.observed})
    if args.iterations is not None:
        if args.iterations < 1:
            raise UsageError("--iterations must be >= 1")
        cfg.calibration = replace(cfg.calibration, iterations=args.iterations)
    if args.week_range is not None:
        cfg.week_range = args.week_range
    if cfg.path("observed") is None:
        raise UsageError("calibrate needs observations: pass --observed or set [io] observed")
    _require(cfg.path("agents"), cfg.path("venues"), cfg.path("observed"))
    observed = _observed(cfg)
    pop, graph = _world(cfg)
    cal: CalibrationConfig = cfg.calibration
    if cal.restriction is None and _restriction(cfg):
        cal = replace(cal, restriction=_restriction(cfg))
    init = LearnableParamSet.from_params(cfg.disease, _fresh_modulator(cfg), cal.learn)
    every = max(1, cal.iterations // 10)

    def progress(it: int, value: float, _lp) -> None:
        if it % every == 0 or it == cal.iterations - 1:
            _say(f"iteration {it:4d}  loss {value:.6g}")

    fit = calibrate(pop, graph, observed, cfg.policies, cal, init, progress)
    out = _out_dir(cfg) / "fit.json"
    fit.write_json(out, cfg.hash())
    _say(f"best loss {fit.loss_history[fit.best_iteration]:.6g} at iteration "
         f"{fit.best_iteration}; beta {fit.params.beta:.6g} -> {out}")
    return EXIT_OK


def _write_ensemble(summary: EnsembleSummary, out: Path, config_hash: str) -> None:
    summary.write_csv(out / "ensemble.csv", config_hash)
    summary.write_members_csv(out / "members.csv", config_hash)
    write_breakdown_csv(out / "breakdown.csv", summary.breakdowns, config_hash)


def _ensemble_config(cfg: RunConfig, args: argparse.Namespace, fit: FitResult | None,
                     seed_count: int | None = None) -> EnsembleConfig:
    horizon, week_start = int(cfg.simulation["horizon_days"]), 0
    if fit is not None and fit.week_index:
        week_start, horizon = int(fit.week_index[0]), 7 * len(fit.week_index)
    if args.horizon is not None:
        horizon = args.horizon
    ens = replace(cfg.ensemble, horizon_days=horizon, week_start=week_start,
                  threads=max(1, args.threads))
    if args.n_members is not None:
        ens = replace(ens, n_members=args.n_members)
    if seed_count is not None:
        ens = replace(ens, seed_count=seed_count)
    ens.validate()
    return ens


def cmd_ensemble(args: argparse.Namespace) -> int:
    cfg = _config(args, {"agents": args.population, "venues": args.venues, "fit": args.fit})
    _require(cfg.path("agents"), cfg.path("venues"), cfg.path("fit"))
    fit = FitResult.read_json(cfg.path("fit")) if cfg.path("fit") else None
    params = fit.params if fit is not None else cfg.disease
    modulator = fit.modulator if fit is not None else _fresh_modulator(cfg)
    pop, graph = _world(cfg)
    ens = _ensemble_config(cfg, args, fit)
    _say(f"running {ens.n_members} members over {ens.horizon_days} days "
         f"on {ens.threads} thread(s)")
    summary = run_ensemble(pop, graph, params, cfg.policies, ens, modulator, _restriction(cfg))
    out = _out_dir(cfg)
    _write_ensemble(summary, out, cfg.hash())
    _say(f"mean cumulative {float(np.sum(summary.mean)):g} -> {out / 'ensemble.csv'}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    cfg = _config(args, {"observed": args.observed})
    ens_path = args.ensemble or (_out_dir(cfg) / "ensemble.csv")
    if cfg.path("observed") is None:
        raise UsageError("report needs observations: pass --observed or set [io] observed")
    _require(ens_path, cfg.path("observed"), args.breakdown)
    summary = EnsembleSummary.read_csv(ens_path)
    observed = _observed(cfg)
    parts = read_breakdown_csv(args.breakdown) if args.breakdown else None
    report = comparison_report(summary, observed, breakdowns=parts)
    report.config_hash = cfg.hash()
    out = _out_dir(cfg)
    report.write_json(out / "report.json")
    report.write_curves_csv(out / "curves.csv")
    if report.breakdowns:
        report.write_breakdown_csv(out / "breakdown.csv")
    _say(f"cumulative simulated {report.cumulative_sim:.1f} vs observed "
         f"{report.cumulative_obs:g} ({report.cumulative_difference:+.1f}); peak week "
         f"{report.peak_week_sim} vs {report.peak_week_obs} -> {out / 'report.json'}")
    return EXIT_OK


def cmd_transfer(args: argparse.Namespace) -> int:
    cfg = _config(args, {"agents": args.population, "venues": args.venues, "fit": args.fit,
                         "observed": args.observed})
    if args.seed_count is not None and args.seed_count < 0:
        raise UsageError("--seed-count must be non-negative")
    _require(cfg.path("fit"), cfg.path("agents"), cfg.path("venues"), cfg.path("observed"))
    fit = FitResult.read_json(cfg.path("fit"))
    pop, graph = _world(cfg)
    ens = _ensemble_config(cfg, args, fit, args.seed_count)
    restriction = args.region or _restriction(cfg)
    _say(f"transferring fit to {pop.n_agents} agents"
         + (f" with {ens.seed_count} seed infections" if ens.seed_count is not None else ""))
    summary = run_ensemble(pop, graph, fit.params, cfg.policies, ens, fit.modulator, restriction)
    out = _out_dir(cfg)
    _write_ensemble(summary, out, cfg.hash())
    if cfg.path("observed") is not None:
        report = comparison_report(summary, _observed(cfg))
        report.config_hash = cfg.hash()
        report.write_json(out / "report.json")
        report.write_curves_csv(out / "curves.csv")
    _say(f"mean cumulative {float(np.sum(summary.mean)):g} -> {out / 'ensemble.csv'}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------------

def _week_range(text: str) -> tuple[int, int]:
    try:
        first, last = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected FIRST:LAST, e.g. 30:45") from None
    if first > last:
        raise argparse.ArgumentTypeError("FIRST must not exceed LAST")
    return first, last


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gradepi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gradepi {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth-pop", help="synthesize agents.csv and venues.csv")
    _common(p)
    p.add_argument("--n-agents", type=int)
    p.set_defaults(func=cmd_synth_pop)

    p = sub.add_parser("simulate", help="run one simulation and write trace.csv")
    _common(p)
    p.add_argument("--population", type=Path, help="agents.csv (default: synthesize)")
    p.add_argument("--venues", type=Path)
    p.add_argument("--fit", type=Path, help="use parameters from a fit.json")
    p.add_argument("--horizon", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="fit parameters to observed weekly cases")
    _common(p)
    p.add_argument("--population", type=Path)
    p.add_argument("--venues", type=Path)
    p.add_argument("--observed", type=Path, help="observed.csv (week_index,cases)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--week-range", type=_week_range, metavar="FIRST:LAST")
    p.set_defaults(func=cmd_calibrate)

    for name, func, text in (("ensemble", cmd_ensemble, "run a perturbed ensemble"),
                             ("transfer", cmd_transfer, "apply a fit to another population")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--fit", type=Path, required=name == "transfer")
        p.add_argument("--population", type=Path, required=name == "transfer")
        p.add_argument("--venues", type=Path)
        p.add_argument("--n-members", type=int)
        p.add_argument("--horizon", type=int)
        if name == "transfer":
            p.add_argument("--seed-count", type=int, help="exact number of seed infections")
            p.add_argument("--region", help="restrict seeding to one region label")
            p.add_argument("--observed", type=Path, help="also write a report against this")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="compare an ensemble with observations")
    _common(p)
    p.add_argument("--ensemble", type=Path, help="ensemble.csv (default: in the output dir)")
    p.add_argument("--observed", type=Path)
    p.add_argument("--breakdown", type=Path, help="breakdown.csv written by ensemble")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"gradepi: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, GradEpiError) as exc:
        print(f"gradepi: numerical error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
