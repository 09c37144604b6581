"""Command-line entry point: one subcommand per analysis, tables and reports written atomically."""

import argparse
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict, ValidationError

from trimer import config, instrumentation, logging
from trimer.artifacts import render_json, render_table, write_json, write_table
from trimer.bifurcation.boundaries import boundary_trace
from trimer.bifurcation.equilibria import EquilibriumClass
from trimer.config import OutputFormat, RunConfig, Subcommand, parse_config
from trimer.dynamics.analysis import (
    classify_attractor,
    detect_burst,
    detect_transient_chaos,
    power_spectrum,
    random_ensemble,
    spectral_peaks,
    synchrony,
)
from trimer.dynamics.integrate import integrate
from trimer.dynamics.state import SemiclassicalState, preset_state
from trimer.fitting import delta_grid
from trimer.fluctuations.scaling import DELTA_POINTS, DELTA_RANGE, photon_scan, scaling_fit
from trimer.landscape import critical_coupling, phase_diagram
from trimer.model import TrimerError
from trimer.semiclassics import (
    classify_fluctuations,
    curvature_profile,
    fsp_determinant_scaling,
    semiclassics_table,
)
from trimer.spectra import soft_mode_exponent, spectrum_sweep, variance_profile

logging.init()
instrumentation.init()

log = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

PARAM_FLAGS = ("omega0", "omega_a", "g", "eta", "jbar", "phi", "kappa", "n_atoms")


class UsageError(Exception):
    pass


class Outcome(BaseModel):
    """What a subcommand produced: a table, a report, or both."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    table: Optional[pd.DataFrame] = None
    report: Any = None
    summary: str


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    params = common.add_argument_group("model parameters")
    params.add_argument("--omega0", type=float)
    params.add_argument("--omega-a", dest="omega_a", type=float)
    params.add_argument("--g", type=float)
    params.add_argument("--eta", type=float)
    params.add_argument("--jbar", type=float)
    params.add_argument("--phi", type=float)
    params.add_argument("--kappa", type=float, help="cavity loss, required by open-system commands")
    params.add_argument("--n-atoms", dest="n_atoms", type=int)

    run = common.add_argument_group("run")
    run.add_argument("--config", type=Path, help="JSON or YAML document merged over the flags")
    run.add_argument("--output", type=Path, help="table path; reports go next to it as .json")
    run.add_argument("--format", choices=[f.value for f in OutputFormat], default="csv")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--threads", type=int, default=config.THREADS)
    run.add_argument("--metrics-file", type=Path)
    run.add_argument("--log-level")

    sweep = common.add_argument_group("sweep")
    sweep.add_argument("--sweep-var")
    sweep.add_argument("--sweep-min", type=float)
    sweep.add_argument("--sweep-max", type=float)
    sweep.add_argument("--sweep-points", type=int)
    sweep.add_argument("--sweep-log", action="store_true")

    opts = common.add_argument_group("command options")
    opts.add_argument("--eta-range", type=float, nargs=2)
    opts.add_argument("--phi-values", type=float, nargs="+")
    opts.add_argument("--points", type=int)
    opts.add_argument("--probe-g", type=float)
    opts.add_argument("--g-range", type=float, nargs=2)
    opts.add_argument("--delta-range", type=float, nargs=2)
    opts.add_argument("--side", choices=["np", "sp"])
    opts.add_argument("--preset")
    opts.add_argument("--t-end", type=float)
    opts.add_argument("--tol", type=float)
    opts.add_argument("--dt", type=float)
    opts.add_argument("--t-transient", type=float)
    opts.add_argument("--t-measure", type=float)
    opts.add_argument("--site", type=int)
    opts.add_argument("--resolution", type=int)
    opts.add_argument("--classes", nargs="+")
    opts.add_argument("--branch")
    opts.add_argument("--runs", type=int, help="escape: random initial states in the ensemble")
    opts.add_argument(
        "--dynamical",
        action="store_true",
        default=None,
        help="bifurcate: also follow oscillations born at Hopf points (slow)",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=config.APP_NAME, description=__doc__)
    parser.add_argument("--version", action="version", version=config.VERSION)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    common = _common_parser()
    for command in Subcommand:
        sub.add_parser(command.value, parents=[common])
    return parser


def flags_from_args(args: argparse.Namespace) -> dict[str, Any]:
    values = vars(args)
    params = {k: values[k] for k in PARAM_FLAGS if values.get(k) is not None}
    options = {
        k: values[k]
        for k in config.CommandOptions.model_fields
        if values.get(k) is not None
    }
    flags: dict[str, Any] = {
        "subcommand": args.subcommand,
        "params": params,
        "rng_seed": args.seed,
        "threads": args.threads,
        "kappa_given": args.kappa is not None,
        "output": {"path": args.output, "format": args.format},
        "options": options,
    }
    if args.sweep_var is not None:
        flags["sweep"] = {
            "variable": args.sweep_var,
            "min": args.sweep_min,
            "max": args.sweep_max,
            "points": args.sweep_points or 51,
            "log": args.sweep_log,
        }
    return flags


def _explicit(cfg: RunConfig, name: str) -> bool:
    return name in cfg.options.model_fields_set


def _g_values(cfg: RunConfig) -> np.ndarray:
    if cfg.sweep is not None:
        if cfg.sweep.variable != "g":
            raise UsageError(f"this command sweeps g, not {cfg.sweep.variable}")
        return cfg.sweep.values()
    if cfg.options.g_range is None:
        raise UsageError("give --g-range or a g sweep")
    lo, hi = cfg.options.g_range
    return np.linspace(lo, hi, cfg.options.points)


def _g_range(cfg: RunConfig) -> tuple[float, float]:
    if cfg.options.g_range is None:
        raise UsageError("give --g-range")
    return cfg.options.g_range


def _deltas(cfg: RunConfig, default: tuple[float, float], points: int) -> np.ndarray:
    lo, hi = cfg.options.delta_range if _explicit(cfg, "delta_range") else default
    n = cfg.options.points if _explicit(cfg, "points") else points
    return delta_grid(lo, hi, n)


def _branch(cfg: RunConfig) -> EquilibriumClass:
    try:
        return EquilibriumClass(cfg.options.branch)
    except ValueError as e:
        raise UsageError(f"unknown branch {cfg.options.branch!r}") from e


def run_phase_diagram(cfg: RunConfig) -> Outcome:
    lo, hi = cfg.options.eta_range
    etas = np.linspace(lo, hi, cfg.options.points)
    phis = cfg.options.phi_values if _explicit(cfg, "phi_values") else [cfg.params.phi]
    g_max = cfg.options.g_range[1] if cfg.options.g_range is not None else None
    frame = phase_diagram(cfg.params, etas, phis, cfg.options.probe_g, cfg.threads, g_max)
    return Outcome(table=frame, summary=f"phase-diagram: {len(frame)} points")


def run_spectra(cfg: RunConfig) -> Outcome:
    frame = spectrum_sweep(cfg.params, _g_values(cfg), cfg.threads)
    failed = int((frame["phase"] == "error").sum())
    return Outcome(table=frame, summary=f"spectra: {len(frame)} points, {failed} failed")


def run_semiclassics(cfg: RunConfig) -> Outcome:
    p, side = cfg.params, cfg.options.side
    deltas = _deltas(cfg, (1e-5, 1e-2), 30)
    frame = semiclassics_table(p, deltas, side, cfg.options.site)
    report = classify_fluctuations(curvature_profile(p, deltas, side), deltas)
    return Outcome(
        table=frame,
        report=report,
        summary=f"semiclassics: {len(frame)} points, {report.kind.value}",
    )


def _initial_state(cfg: RunConfig) -> SemiclassicalState:
    rng = np.random.default_rng(cfg.rng_seed)
    return preset_state(cfg.options.preset, cfg.params, rng)


def run_evolve(cfg: RunConfig) -> Outcome:
    p, o = cfg.params, cfg.options
    s0 = _initial_state(cfg)
    traj = integrate(p, s0, o.t_end, tol=o.tol, dt=o.dt)
    report = classify_attractor(p, s0, o.t_transient, o.t_measure, dt=o.dt, tol=o.tol)
    return Outcome(
        table=traj.to_frame(),
        report=report,
        summary=f"evolve: {len(traj)} samples, {report.kind.value}",
    )


def run_spectrum(cfg: RunConfig) -> Outcome:
    p, o = cfg.params, cfg.options
    traj = integrate(p, _initial_state(cfg), o.t_transient + o.t_measure, tol=o.tol, dt=o.dt)
    measured = traj.after(o.t_transient)
    spectrum = power_spectrum(measured, o.site)
    report: dict[str, Any] = {
        "peaks": spectral_peaks(spectrum),
        "synchrony": synchrony(measured),
        "burst": detect_burst(measured),
    }
    frame = spectrum.rename(columns={"frequency": "freq"})
    return Outcome(table=frame, report=report, summary=f"spectrum: {len(frame)} frequencies")


def run_escape(cfg: RunConfig) -> Outcome:
    o = cfg.options
    starts = random_ensemble(o.runs, rng_seed=cfg.rng_seed)
    report = detect_transient_chaos(cfg.params, starts, o.t_end, threads=cfg.threads)
    frame = pd.DataFrame(
        {
            "run": np.arange(len(starts)),
            "escape_time": [np.nan if t is None else t for t in report.escape_times],
            "censored": report.censored,
        }
    )
    return Outcome(
        table=frame,
        report=report,
        summary=f"escape: {len(starts)} runs, {sum(report.censored)} censored",
    )


def run_bifurcate(cfg: RunConfig) -> Outcome:
    lo, hi = cfg.options.eta_range
    etas = np.linspace(lo, hi, cfg.options.resolution)
    try:
        classes = [EquilibriumClass(c) for c in cfg.options.classes]
    except ValueError as e:
        raise UsageError(f"unknown equilibrium class in {cfg.options.classes}") from e
    trace = boundary_trace(
        cfg.params,
        etas,
        _g_range(cfg),
        classes,
        threads=cfg.threads,
        dynamical=cfg.options.dynamical,
        rng_seed=cfg.rng_seed,
    )
    return Outcome(
        table=trace.to_frame(),
        report=trace,
        summary=f"bifurcate: {len(trace.events)} events, {len(trace.curves)} curves",
    )


def run_fluctuations(cfg: RunConfig) -> Outcome:
    g_start, g_end = _g_range(cfg)
    branch = _branch(cfg)
    deltas = _deltas(cfg, DELTA_RANGE, DELTA_POINTS)
    scan = photon_scan(cfg.params.replace(g=g_start), branch, g_end, deltas, rng_seed=cfg.rng_seed)
    table = scan.to_frame()
    try:
        report = scaling_fit(scan, branch)
    except TrimerError:
        # the scan is still worth keeping
        _write(cfg, Outcome(table=table, summary=""))
        raise
    exponents = ", ".join(f"{e:.3f}" for e in report.exponents)
    return Outcome(
        table=table,
        report=report.summary(),
        summary=f"fluctuations: {len(table)} points, exponents {exponents}",
    )


def run_scaling(cfg: RunConfig) -> Outcome:
    p, side = cfg.params, cfg.options.side
    deltas = _deltas(cfg, (1e-5, 1e-2), 30)
    soft = soft_mode_exponent(p, deltas, side)
    fluct = classify_fluctuations(curvature_profile(p, deltas, side), deltas)
    report: dict[str, Any] = {
        "g_c": critical_coupling(p).g_c,
        "side": side,
        "soft_mode": soft,
        "gamma": soft.exponent,
        "fluctuations": fluct,
    }
    if side == "sp":
        try:
            det = fsp_determinant_scaling(p, deltas)
            report["determinant"] = det
            report["gamma_frustrated"] = det.exponent / 2
        except TrimerError as e:
            log.warning("determinant scaling skipped", reason=str(e))
    return Outcome(
        table=variance_profile(p, deltas, side),
        report=report,
        summary=f"scaling: gamma {soft.exponent:.3f}, fluctuations {fluct.kind.value}",
    )


HANDLERS: dict[Subcommand, Callable[[RunConfig], Outcome]] = {
    Subcommand.PHASE_DIAGRAM: run_phase_diagram,
    Subcommand.SPECTRA: run_spectra,
    Subcommand.SEMICLASSICS: run_semiclassics,
    Subcommand.EVOLVE: run_evolve,
    Subcommand.SPECTRUM: run_spectrum,
    Subcommand.BIFURCATE: run_bifurcate,
    Subcommand.FLUCTUATIONS: run_fluctuations,
    Subcommand.SCALING: run_scaling,
    Subcommand.ESCAPE: run_escape,
}


def _write(cfg: RunConfig, outcome: Outcome) -> None:
    summary = cfg.summary()
    path = cfg.output.path
    as_json = cfg.output.format == OutputFormat.JSON
    if path is None:
        if as_json or outcome.table is None:
            sys.stdout.write(render_json(outcome.report))
        else:
            sys.stdout.write(render_table(outcome.table, summary))
        return
    if outcome.table is not None and not as_json:
        write_table(outcome.table, path, summary)
        if outcome.report is not None:
            write_json({"config": summary, "report": outcome.report}, path.with_suffix(".json"))
        return
    report = outcome.report
    if report is None and outcome.table is not None:
        report = outcome.table.to_dict(orient="records")
    write_json({"config": summary, "report": report}, path)


def validate(cfg: RunConfig) -> None:
    if cfg.subcommand.open_system and not cfg.kappa_given:
        raise UsageError(f"{cfg.subcommand.value} needs --kappa")
    for violated in cfg.params.constraint_violations():
        log.warning("hopping constraint violated", constraint=violated)


def run(cfg: RunConfig) -> int:
    validate(cfg)
    log.info("run", subcommand=cfg.subcommand.value, seed=cfg.rng_seed, threads=cfg.threads)
    outcome = HANDLERS[cfg.subcommand](cfg)
    _write(cfg, outcome)
    if cfg.output.path is not None:
        sys.stdout.write(outcome.summary + "\n")
    else:
        log.info("done", summary=outcome.summary)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        logging.set_level(args.log_level)
    try:
        try:
            cfg = parse_config(flags_from_args(args), args.config)
        except ValueError as e:
            log.error("invalid configuration", error=str(e))
            return EXIT_USAGE
        return run(cfg)
    except (ValidationError, UsageError) as e:
        log.error("invalid configuration", error=str(e))
        return EXIT_USAGE
    except TrimerError as e:
        log.error("run failed", error=e.message, **{k: str(v) for k, v in e.context.items()})
        return EXIT_FAILURE
    except (ValueError, ArithmeticError) as e:
        log.error("numerical failure", error=str(e), kind=type(e).__name__)
        return EXIT_FAILURE
    finally:
        if args.metrics_file is not None:
            instrumentation.write_metrics(args.metrics_file)
