"""Command-line interface.

Subcommands: ``run`` (scenario from a TOML config), ``benchmark``
(built-in validation case), ``roughness`` (profile synthesis and PSD
check), and ``sweep`` (parametric study). All numeric CSV output uses
``%.9e``, UTF-8, LF line endings. Exit codes: 0 success (a
non-converged step only sets a warning in the summary), 2
configuration error, 3 solver error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, config, roughness
from ._kernels import active_backend_name
from .coupling import ScenarioConfig, SimulationResult, run_coupled, run_decoupled, simulate
from .errors import ConfigError, UnknownBenchmark, VbiError

CSV_SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _fmt(x: float) -> str:
    return f"{x:.9e}"


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    rows = len(columns[0])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(rows):
            fh.write(",".join(_fmt(float(c[i])) for c in columns) + "\n")


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(out_dir: Path, cfg: ScenarioConfig | None, outputs: list[str], extra=None) -> None:
    doc = {
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "csv_float_format": "%.9e",
        "versions": {
            "vbisim": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "kernel_backend": active_backend_name(),
        },
        "timestamp_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "outputs": sorted(outputs),
    }
    if cfg is not None:
        doc["config_hash"] = config.config_hash(cfg)
        doc["seeds"] = {
            "scenario": cfg.seed,
            "roughness": cfg.roughness.seed if cfg.roughness else None,
            "traffic": cfg.traffic.seed if cfg.traffic else None,
        }
    if extra:
        doc.update(extra)
    _write_json(out_dir / "manifest.json", doc)


def write_run_outputs(result: SimulationResult, cfg: ScenarioConfig, out_dir: Path) -> list[str]:
    """Write the fixed output layout for one simulation run."""
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    t = result.t

    mid = result.midspan_node
    _write_csv(
        out_dir / "bridge_midspan.csv",
        ["t_s", "disp_m", "vel_mps", "accel_mps2"],
        [t, result.bridge_disp[:, mid], result.bridge_vel[:, mid], result.bridge_accel[:, mid]],
    )
    outputs.append("bridge_midspan.csv")

    node_cols = [f"w_{x:g}m" for x in result.node_x]
    _write_csv(
        out_dir / "bridge_nodes.csv",
        ["t_s"] + node_cols,
        [t] + [result.bridge_disp[:, j] for j in range(len(result.node_x))],
    )
    outputs.append("bridge_nodes.csv")

    for i, veh in enumerate(result.vehicles):
        header = ["t_s"]
        cols: list[np.ndarray] = [t]
        for d, name in enumerate(veh.dof_names):
            header += [f"{name}_disp", f"{name}_vel", f"{name}_accel"]
            cols += [veh.disp[:, d], veh.vel[:, d], veh.accel[:, d]]
        _write_csv(out_dir / f"vehicle_{i}_dofs.csv", header, cols)
        outputs.append(f"vehicle_{i}_dofs.csv")

    header = ["t_s"]
    cols = [t]
    for i, veh in enumerate(result.vehicles):
        for a in range(veh.contact_forces.shape[1]):
            header.append(f"v{i}_axle{a}_N")
            cols.append(veh.contact_forces[:, a])
    _write_csv(out_dir / "contact_forces.csv", header, cols)
    outputs.append("contact_forces.csv")

    steps = np.arange(len(result.iterations))
    _write_csv(
        out_dir / "iterations.csv",
        ["step", "t_s", "iterations"],
        [steps, t[1:], result.iterations.astype(float)],
    )
    outputs.append("iterations.csv")
    return outputs


def run_summary(result: SimulationResult, cfg: ScenarioConfig) -> dict:
    doc = {
        "mode": result.mode,
        "config_hash": config.config_hash(cfg),
        "midspan": {
            "min_disp_m": float(result.midspan_displacement.min()),
            "max_disp_m": float(result.midspan_displacement.max()),
            "peak_abs_disp_m": float(np.max(np.abs(result.midspan_displacement))),
            "peak_abs_accel_mps2": float(np.max(np.abs(result.midspan_acceleration))),
        },
        "flags": {
            "uplift_events": result.flags.uplift_events,
            "roughness_off_domain": result.flags.roughness_off_domain,
            "non_convergence_steps": result.flags.non_convergence_steps,
        },
        "warnings": [],
        "meta": dict(cfg.meta),
    }
    if result.mode == "coupled":
        stats = analysis.iteration_stats(result)
        doc["iterations"] = {
            "histogram": {str(k): v for k, v in stats.histogram.items()},
            "min": stats.min_count,
            "max": stats.max_count,
            "mode": stats.mode_count,
            "share": {str(k): v for k, v in stats.share.items()},
        }
    if result.flags.non_convergence_steps:
        doc["warnings"].append(
            f"{result.flags.non_convergence_steps} step(s) hit max_iter without converging"
        )
    return doc


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    changes = {}
    if args.mode:
        changes["mode"] = args.mode
    if args.tol is not None:
        changes["tol"] = args.tol
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.hermitian_interp:
        changes["hermitian_interp"] = True
    if args.ne is not None:
        changes["bridge"] = dataclasses.replace(cfg.bridge, num_elements=args.ne)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def cmd_run(args) -> int:
    try:
        cfg = config.load_scenario(args.config)
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out)
    try:
        result = simulate(cfg)
    except VbiError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = write_run_outputs(result, cfg, out_dir)
    summary = run_summary(result, cfg)
    _write_json(out_dir / "summary.json", summary)
    outputs.append("summary.json")
    write_manifest(out_dir, cfg, outputs + ["manifest.json"])
    for w in summary["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {len(outputs) + 1} files to {out_dir}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    try:
        cfg = analysis.benchmark_config(args.name)
    except UnknownBenchmark as exc:
        print(f"error: unknown benchmark {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out)
    try:
        res_c = run_coupled(cfg)
        # The low-mass-ratio validation cases are also compared against
        # the one-pass decoupled analysis.
        compare = args.name.startswith(("nube_", "eshkevari_"))
        res_d = run_decoupled(cfg) if compare else None
    except VbiError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = write_run_outputs(res_c, cfg, out_dir)
    summary = run_summary(res_c, cfg)
    if res_d is not None:
        window = analysis.on_bridge_window(cfg)
        rep = analysis.compare_series(
            res_c.t, res_c.midspan_displacement, res_d.midspan_displacement, window
        )
        summary["decoupled_comparison"] = {
            "r2_midspan_disp": rep.r_squared,
            "rms_diff_m": rep.rms_diff,
            "peak_abs_coupled_m": rep.peak_abs_ref,
            "peak_abs_decoupled_m": rep.peak_abs_other,
            "window": [rep.window.t_start, rep.window.t_end],
        }
        _write_csv(
            out_dir / "midspan_decoupled.csv",
            ["t_s", "disp_m"],
            [res_d.t, res_d.midspan_displacement],
        )
        outputs.append("midspan_decoupled.csv")
    _write_json(out_dir / "summary.json", summary)
    outputs.append("summary.json")
    write_manifest(out_dir, cfg, outputs + ["manifest.json"])
    hist = summary.get("iterations", {}).get("histogram")
    print(f"benchmark {args.name}: peak midspan "
          f"{summary['midspan']['peak_abs_disp_m'] * 1e3:.3f} mm, iterations {hist}")
    return EXIT_OK


def cmd_roughness(args) -> int:
    try:
        spec = roughness.RoughnessSpec(
            class_or_coefficient=args.coefficient if args.coefficient else args.road_class,
            span=args.span,
            x0=args.x0,
            x_max=args.x_max,
            dx=args.dx,
            seed=args.seed,
            smoothing_window=args.smooth,
        )
        profile = roughness.generate(spec)
    except VbiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    roughness.write_profile_csv(profile, out_dir / "profile.csv")
    n_bins = int(round(roughness.UPPER_CUTOFF / profile.delta_n))
    centers, ghat = roughness.psd_estimate(profile, n_bins)
    _write_csv(out_dir / "psd.csv", ["n_cyc_per_m", "gd_m3"], [centers, ghat])
    write_manifest(
        out_dir,
        None,
        ["profile.csv", "psd.csv", "manifest.json"],
        extra={
            "delta_n_cyc_per_m": profile.delta_n,
            "gd0_m3": profile.gd0,
            "n_harmonics": profile.n_harmonics,
            "seed": args.seed,
        },
    )
    print(f"profile over [{args.x0}, {args.x_max}] m, delta_n={profile.delta_n} cycles/m")
    return EXIT_OK


_PLOT_SCRIPT = """\
# gnuplot script for sweep report charts
set datafile separator ','
set grid
set term pngcairo size 900,600

set output 'r2_disp.png'
set xlabel '{xlabel}'
set ylabel 'R^2 midspan displacement'
plot {disp_series}

set output 'r2_body_acc.png'
set ylabel 'R^2 body acceleration'
plot {acc_series}
"""


def _write_plot_script(report, out_dir: Path) -> None:
    """Line charts from report.csv, one series per vehicle group.

    Cells are written grouped by vehicle, so each series is a
    contiguous row range of the report (gnuplot ``every``). The
    roughness study has a categorical axis and uses xtic labels.
    """
    xcol = {"span": 2, "speed": 4, "roughness": 5, "traffic": 6}[report.study]
    xlabel = {"span": "span (m)", "speed": "speed (m/s)",
              "roughness": "ISO class", "traffic": "background vehicles"}[report.study]
    groups: dict[str, list[int]] = {}
    for i, cell in enumerate(report.cells):
        groups.setdefault(cell.params["vehicle"], []).append(i)
    if report.study == "roughness":
        use_disp, use_acc = f"($0+1):7:xtic({xcol})", f"($0+1):8:xtic({xcol})"
    else:
        use_disp, use_acc = f"{xcol}:7", f"{xcol}:8"
    disp, acc = [], []
    for veh, rows in groups.items():
        rng = f"every ::{rows[0] + 1}::{rows[-1] + 1}"
        disp.append(f"'report.csv' {rng} using {use_disp} with linespoints title '{veh}'")
        acc.append(f"'report.csv' {rng} using {use_acc} with linespoints title '{veh}'")
    script = _PLOT_SCRIPT.format(
        xlabel=xlabel, disp_series=", \\\n     ".join(disp), acc_series=", \\\n     ".join(acc)
    )
    (out_dir / "plots.gp").write_text(script, encoding="utf-8")


def cmd_sweep(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        report = analysis.sweep(args.study, workers=args.workers, out_dir=out_dir)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    analysis.write_sweep_csv(report, out_dir / "report.csv")
    analysis.write_sweep_json(report, out_dir / "summary.json")
    _write_plot_script(report, out_dir)
    write_manifest(out_dir, None, ["report.csv", "summary.json", "plots.gp", "manifest.json"],
                   extra={"study": args.study, "n_cells": len(report.cells)})
    failed = [c for c in report.cells if c.status != "ok"]
    for c in failed:
        print(f"cell failed: {c.params}: {c.status}", file=sys.stderr)
    print(f"sweep {args.study}: {len(report.cells) - len(failed)}/{len(report.cells)} cells ok")
    return EXIT_SOLVER if len(failed) == len(report.cells) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vbi",
        description="Vehicle-bridge interaction simulator (coupled and moving-load analysis)",
    )
    parser.add_argument("--version", action="version", version=f"vbi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario from a TOML config")
    p_run.add_argument("--config", required=True, help="scenario TOML file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--mode", choices=["coupled", "decoupled"], help="override analysis mode")
    p_run.add_argument("--tol", type=float, help="override convergence tolerance")
    p_run.add_argument("--dt", type=float, help="override time step (s)")
    p_run.add_argument("--seed", type=int, help="override the scenario seed")
    p_run.add_argument("--ne", type=int, help="override the bridge element count")
    p_run.add_argument("--hermitian-interp", action="store_true",
                       help="cubic (rotation-aware) bridge interpolation")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("benchmark", help="run a built-in validation case")
    p_bench.add_argument("name", help="one of: " + ", ".join(analysis.BENCHMARK_NAMES))
    p_bench.add_argument("--out", required=True)
    p_bench.set_defaults(func=cmd_benchmark)

    p_rough = sub.add_parser("roughness", help="synthesize an ISO 8608 profile")
    grp = p_rough.add_mutually_exclusive_group(required=True)
    grp.add_argument("--road-class", choices=list("ABCDE"), help="ISO class (geometric mean)")
    grp.add_argument("--coefficient", type=float, help="explicit G_d(n0) in m^3")
    p_rough.add_argument("--span", type=float, required=True, help="bridge span L (m)")
    p_rough.add_argument("--x0", type=float, default=0.0)
    p_rough.add_argument("--x-max", type=float, required=True)
    p_rough.add_argument("--dx", type=float, default=0.05)
    p_rough.add_argument("--seed", type=int, default=0)
    p_rough.add_argument("--smooth", type=int, default=None,
                         help="moving-average window (odd sample count)")
    p_rough.add_argument("--out", required=True)
    p_rough.set_defaults(func=cmd_roughness)

    p_sweep = sub.add_parser("sweep", help="run a parametric study")
    p_sweep.add_argument("study", choices=["span", "speed", "roughness", "traffic"])
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--workers", type=int, default=None,
                         help="parallel cells (default: VBI_THREADS or CPU count)")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
