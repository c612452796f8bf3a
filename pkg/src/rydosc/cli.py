"""Command-line front end: configuration in, CSV/JSON artifacts out.

Subcommands: coherent | trajectory | ensemble | scan | fit | units.
Every run writes a manifest.json last, so a run is complete iff the
manifest exists.  Floats are serialized with 17 significant digits to make
reruns byte-comparable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import UnitMap, convert_units, fit_lognormal, negativity_bin_edges
from .effective import (
    analytic_observables,
    build_h_eff,
    negativity_series,
    tau_to_time,
    time_to_tau,
)
from .model import (
    ConfigError,
    SystemConfig,
    build_config,
    initial_state,
    read_config_file,
)
from .operators import build_h_total
from .propagator import TimeSeries, format_float, observable_series, standard_observables
from .trajectories import (
    post_select,
    run_ensemble,
    run_trajectory,
    summary_record,
    trajectory_seed,
    write_ensemble_csv,
)

OUT_ENV_VAR = "RYDOSC_OUT"


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV_VAR) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args) -> SystemConfig:
    raw = read_config_file(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        from .model import _parse_scalar

        raw[key.strip()] = _parse_scalar(value)
    if getattr(args, "initial", None):
        raw.setdefault("initial_state", args.initial)
    if getattr(args, "seed", None) is not None:
        raw["master_seed"] = args.seed
    return build_config(raw)


def _write_manifest(out: Path, subcommand: str, config: SystemConfig,
                    outputs: list[str], started: float, extra=None) -> None:
    manifest = {
        "subcommand": subcommand,
        "artifact_version": __version__,
        "config": {k: getattr(config, k) for k in (
            "n_atoms", "n_max", "coupling_j", "interaction_v", "detuning",
            "gamma_up", "gamma_down", "kappa", "rotating_frame",
            "integrator_tol", "t_max", "master_seed")},
        "outputs": outputs,
        "wall_clock_seconds": time.time() - started,
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _coherent_grid(args, config: SystemConfig) -> np.ndarray:
    if args.t_max is not None:
        t_end = args.t_max
    elif config.t_max is not None:
        t_end = config.t_max
    elif config.n_atoms == 2:
        t_end = float(tau_to_time(4 * np.pi, config))
    else:
        raise ConfigError("coherent runs need t_max (flag or config key)")
    return np.linspace(0.0, t_end, args.points)


def cmd_coherent(args) -> int:
    started = time.time()
    config = _load_config(args)
    state0 = initial_state(args.initial, config)
    out = _out_dir(args)
    t_grid = _coherent_grid(args, config)
    h = build_h_total(config)
    obs = standard_observables(config)
    series = observable_series(state0, h, obs, t_grid)
    values = dict(series.values)
    values["negativity"] = negativity_series(state0, h, t_grid)
    if config.n_atoms == 2:
        h_eff = build_h_eff(config)
        eff = observable_series(state0, h_eff, {"n_a": obs["n_a"], "n_b": obs["n_b"]}, t_grid)
        values["n_a_effective"] = eff.values["n_a"]
        values["n_b_effective"] = eff.values["n_b"]
        values["negativity_effective"] = negativity_series(state0, h_eff, t_grid)
        if args.initial in ("psi1", "psi2"):
            analytic = analytic_observables(args.initial, time_to_tau(t_grid, config))
            for label in ("n_a", "n_b", "negativity"):
                values[f"{label}_analytic"] = analytic.values[label]
    path = out / "coherent.csv"
    TimeSeries(t_grid, values).to_csv(path)
    _write_manifest(out, "coherent", config, [path.name], started,
                    {"initial": args.initial})
    return 0


def cmd_trajectory(args) -> int:
    started = time.time()
    config = _load_config(args)
    state0 = initial_state(args.initial, config)
    out = _out_dir(args)
    rec = run_trajectory(config, state0, trajectory_seed(config.master_seed, 0),
                         record_series=True)
    series_path = out / "trajectory.csv"
    rec.series.to_csv(series_path)
    events_path = out / "events.csv"
    with events_path.open("w") as fh:
        fh.write("time,channel,pre_jump_norm_sq\n")
        for ev in rec.events:
            fh.write(f"{format_float(ev.time)},{ev.channel},{format_float(ev.pre_jump_norm_sq)}\n")
    _write_manifest(out, "trajectory", config, [series_path.name, events_path.name],
                    started, {
                        "initial": args.initial,
                        "seed": config.master_seed,
                        "final_negativity": rec.final_negativity,
                        "completion_time": rec.completion_time,
                        "terminated_by": rec.terminated_by,
                    })
    return 0


def _run_one_ensemble(config, initial, n_traj, workers, cutoff):
    state0 = initial_state(initial, config)
    result = run_ensemble(config, state0, n_traj, config.master_seed, workers=workers)
    selected = post_select(result, cutoff) if cutoff is not None else None
    return result, selected


def cmd_ensemble(args) -> int:
    started = time.time()
    config = _load_config(args)
    out = _out_dir(args)
    result, selected = _run_one_ensemble(config, args.initial, args.traj,
                                         args.workers, args.cutoff)
    csv_path = out / "ensemble.csv"
    write_ensemble_csv(result, csv_path)
    edges = negativity_bin_edges(config.n_atoms)
    record = summary_record(result, edges)
    if selected is not None:
        record["post_selected"] = summary_record(selected, edges)
        record["post_selected"]["cutoff_time"] = args.cutoff
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(record, indent=2) + "\n")
    _write_manifest(out, "ensemble", config, [csv_path.name, summary_path.name],
                    started, {"initial": args.initial, "n_traj": args.traj})
    return 0


def cmd_scan(args) -> int:
    started = time.time()
    config = _load_config(args)
    gammas = [float(g) for g in args.gammas.split(",") if g.strip()]
    if not gammas:
        raise ConfigError("--gammas must list at least one decay rate")
    for g in gammas:
        if g < 0:
            raise ConfigError("scan decay rates must be >= 0")
    out = _out_dir(args)
    scan_path = out / "scan.csv"
    # per-rate rows are flushed as they finish so long scans are resumable
    with scan_path.open("w") as fh:
        fh.write("gamma_down,n_avg,stderr,n_traj,acceptance_fraction\n")
        fh.flush()
        for gamma in gammas:
            from dataclasses import replace

            cfg = replace(config, gamma_down=gamma)
            result, selected = _run_one_ensemble(cfg, args.initial, args.traj,
                                                 args.workers, args.cutoff)
            active = selected if selected is not None else result
            avg = active.avg_negativity
            err = active.negativity_stderr
            accept = "" if selected is None else format_float(selected.acceptance_fraction)
            fh.write(
                f"{format_float(gamma)},"
                f"{'' if avg is None else format_float(avg)},"
                f"{'' if err is None else format_float(err)},"
                f"{active.n_trajectories},{accept}\n"
            )
            fh.flush()
    _write_manifest(out, "scan", config, [scan_path.name], started,
                    {"initial": args.initial, "gammas": gammas, "n_traj": args.traj})
    return 0


def cmd_fit(args) -> int:
    started = time.time()
    rows = []
    with open(args.scan) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            cells = dict(zip(header, line.strip().split(",")))
            if cells.get("n_avg"):
                rows.append((float(cells["gamma_down"]), float(cells["n_avg"])))
    if len(rows) < 4:
        print("fit needs at least 4 populated scan rows", file=sys.stderr)
        return 2
    gammas, avgs = zip(*rows)
    fit = fit_lognormal(np.array(gammas), np.array(avgs))
    out = _out_dir(args)
    path = out / "fit.txt"
    with path.open("w") as fh:
        for key, value in (
            ("amplitude", fit.amplitude),
            ("location", fit.location),
            ("width", fit.width),
            ("rss", fit.rss),
            ("peak_gamma", fit.peak_gamma),
            ("iterations", fit.iterations),
            ("converged", fit.converged),
        ):
            fh.write(f"{key} = {format_float(value) if isinstance(value, float) else value}\n")
    manifest = {
        "subcommand": "fit", "artifact_version": __version__,
        "inputs": [str(args.scan)], "outputs": [path.name],
        "wall_clock_seconds": time.time() - started,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return 0


def cmd_units(args) -> int:
    units = UnitMap(j_in_mhz=args.j_mhz)
    value = convert_units(args.value, args.kind, args.direction, units)
    print(format_float(value))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydosc",
        description="oscillator-chain-oscillator entanglement simulator",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, initial_default="all_up"):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV_VAR} or .)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (flags > file > defaults)")
        p.add_argument("--initial", default=initial_default,
                       choices=["psi1", "psi2", "all_up"])

    p = sub.add_parser("coherent", help="coherent evolution time series")
    common(p, initial_default="psi1")
    p.add_argument("--t-max", type=float, dest="t_max")
    p.add_argument("--points", type=int, default=400)
    p.set_defaults(func=cmd_coherent)

    p = sub.add_parser("trajectory", help="one quantum-jump trajectory")
    common(p)
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("ensemble", help="trajectory ensemble statistics")
    common(p)
    p.add_argument("--traj", type=int, default=1000)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--cutoff", type=float, help="post-selection completion cutoff")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("scan", help="ensemble per down-decay rate")
    common(p)
    p.add_argument("--gammas", required=True, help="comma-separated rates in J")
    p.add_argument("--traj", type=int, default=500)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--cutoff", type=float)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("fit", help="log-normal fit of a scan CSV")
    p.add_argument("--scan", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("units", help="convert between J-units and MHz/us")
    p.add_argument("--value", type=float, required=True)
    p.add_argument("--kind", choices=["rate", "time", "energy"], required=True)
    p.add_argument("--direction", choices=["to_physical", "to_dimensionless"],
                   required=True)
    p.add_argument("--j-mhz", type=float, default=1.0, dest="j_mhz")
    p.set_defaults(func=cmd_units)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
