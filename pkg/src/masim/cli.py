"""Command-line front end: single runs, design-space sweeps, calibration.

Subcommands:

  run        simulate one problem at one design point (or --auto) and
             write a JSON report with the model estimate, per-array
             statistics, steal log and check results
  explore    rank all feasible design points for a problem; optionally
             simulate each point and compare against the bounds
  calibrate  validate a measured bandwidth table and store it for reuse

Reports are deterministic for a fixed configuration and seed (only the
created_at field varies). Exit status is 0 on success, 1 when any check
fails, 2 for infeasible or invalid configurations.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time

import numpy as np

from . import mac, model, wqm
from .blockmm import partition, reference_gemm
from .mpe import InfeasibleBlockError, layout_for_point
from .presets import LAYER_PRESETS
from .simulator import make_workload, run_mpe

LOWER_BOUND_SLACK = 1e-3      # tolerated relative shortfall against the lower bound
UPPER_BOUND_GUARD = 1e-9      # absorbs addition-order ULPs when a run has no overlap
                              # at all and lands exactly on the upper bound
ORACLE_RTOL = 1e-4
DEFAULT_VERIFY_CUTOFF = 2 ** 27   # skip full verification above this m*depth*n


class CliError(Exception):
    """Configuration problem reported to the user (exit status 2)."""


def parse_shape(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise CliError(f"shape must look like MxKxN, got {text!r}")
    try:
        m, k, n = (int(p) for p in parts)
    except ValueError as exc:
        raise CliError(f"shape must be three integers, got {text!r}") from exc
    return m, k, n


def resolve_shape(args) -> tuple[str, model.ProblemShape]:
    if args.preset is not None and args.shape is not None:
        raise CliError("give either --shape or --preset, not both")
    if args.preset is not None:
        if args.preset not in LAYER_PRESETS:
            raise CliError(f"unknown preset {args.preset!r}; "
                           f"choose from {', '.join(LAYER_PRESETS)}")
        m, k, n = LAYER_PRESETS[args.preset]
        return args.preset, model.ProblemShape(m, k, n)
    if args.shape is not None:
        m, k, n = parse_shape(args.shape)
        return args.shape, model.ProblemShape(m, k, n)
    raise CliError("a problem is required: --shape MxKxN or --preset NAME")


def resolve_bw_model(spec: str):
    if spec == "ideal":
        return mac.IdealBandwidth()
    if spec == "parametric":
        return mac.ParametricBandwidth()
    if spec.startswith("parametric:"):
        fields = spec.split(":", 1)[1].split(",")
        if len(fields) != 3:
            raise CliError(
                "parametric bandwidth spec is parametric:peak_bps,latency_elems,contention")
        try:
            peak, l0, alpha = (float(f) for f in fields)
            return mac.ParametricBandwidth(peak, l0, alpha)
        except ValueError as exc:
            raise CliError(f"bad parametric bandwidth spec {spec!r}: {exc}") from exc
    try:
        return mac.TableBandwidth.from_csv(spec)
    except FileNotFoundError as exc:
        raise CliError(f"bandwidth model {spec!r} is neither a keyword nor a file") from exc
    except mac.CalibrationError as exc:
        raise CliError(f"bad calibration {spec!r}: {exc}") from exc


def feasibility_table_text(pes_per_base: int, max_arrays: int) -> str:
    """Human-readable feasibility rows for the configured geometry."""
    lines = []
    for chains in range(1, max_arrays + 1):
        lo = (chains - 1) * pes_per_base + 1
        hi = chains * pes_per_base
        counts = ", ".join(str(c) for c in range(1, max_arrays // chains + 1))
        lines.append(f"  block rows {lo:>4}..{hi:<4} -> array count in {{{counts}}}")
    lines.append(f"  block rows > {max_arrays * pes_per_base:<7} -> infeasible")
    return "\n".join(lines)


def resolve_point(args, shape: model.ProblemShape, bw_model) -> model.DesignPoint:
    if args.auto:
        if args.np is not None or args.si is not None or args.sj is not None:
            raise CliError("--auto replaces --np/--si/--sj")
        result = model.explore(shape, bw_model=bw_model, pes_per_base=args.p,
                               max_arrays=args.pm, fmac_stages=args.stage,
                               f_acc=args.freq)
        return result.best.point
    if args.np is None or args.si is None:
        raise CliError("a design point is required: --np and --si, or --auto")
    point = model.DesignPoint(args.np, args.si, args.sj)
    if not model.is_feasible(point, args.p, args.pm):
        raise CliError(
            f"design point (n_arrays={point.n_arrays}, block_rows={point.block_rows}) "
            f"is infeasible for {args.pm} base arrays of {args.p} PEs:\n"
            + feasibility_table_text(args.p, args.pm))
    return point


def build_matrices(shape: model.ProblemShape, seed: int):
    rng = np.random.default_rng(seed)
    a = rng.random((shape.m, shape.depth), dtype=np.float32)
    b = rng.random((shape.depth, shape.n), dtype=np.float32)
    return a, b


def simulate_point(shape, point, bw_model, args, *, numerics, trace_path=None):
    grid = partition(shape.m, shape.n, shape.depth,
                     point.block_rows, point.block_cols)
    layout, active = layout_for_point(point.n_arrays, point.block_rows,
                                      args.p, args.pm)
    a, b = build_matrices(shape, args.seed)
    workload = make_workload(a, b, grid)
    queues = wqm.partition_workload(grid, point.n_arrays)
    return run_mpe(layout, workload, queues, bw_model,
                   f_acc=args.freq, fmac_stages=args.stage,
                   steal=not args.no_steal, numerics=numerics,
                   contention=args.contention, trace_path=trace_path,
                   active_arrays=active)


def report_dict(args, label, shape, point, estimate, sim, checks) -> dict:
    return {
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "config": {
            "problem": label,
            "m": shape.m, "depth": shape.depth, "n": shape.n,
            "n_arrays": point.n_arrays,
            "block_rows": point.block_rows,
            "block_cols": point.block_cols,
            "pes_per_base": args.p,
            "max_arrays": args.pm,
            "f_acc": args.freq,
            "fmac_stages": args.stage,
            "bw_model": args.bw_model,
            "seed": args.seed,
            "steal": not args.no_steal,
            "contention": args.contention,
            "numerics": "fast" if args.fast_numerics else "exact",
        },
        "estimate": dataclasses.asdict(estimate)
        | {"peak_gflops": model.peak_gflops(args.freq, args.pm, args.p)},
        "sim": {
            "time_seconds": sim.time_seconds,
            "time_with_drain_seconds": sim.time_with_drain_seconds,
            "total_cycles": sim.total_cycles,
            "gflops": sim.gflops,
            "tile_count": sim.tile_count,
        },
        "arrays": [dataclasses.asdict(s) for s in sim.arrays],
        "steal_events": [dataclasses.asdict(e) for e in sim.steal_events],
        "checks": checks,
    }


def cmd_run(args) -> int:
    _, shape = resolve_shape(args)
    label = args.preset or args.shape
    bw_model = resolve_bw_model(args.bw_model)
    point = resolve_point(args, shape, bw_model)
    numerics = "fast" if args.fast_numerics else "exact"

    sim = simulate_point(shape, point, bw_model, args,
                         numerics=numerics, trace_path=args.trace)
    estimate = model.bounds(shape, point, bw_model=bw_model,
                            fmac_stages=args.stage, f_acc=args.freq)

    checks: dict = {}
    checks["bounds_ok"] = bool(
        estimate.lower_seconds * (1.0 - LOWER_BOUND_SLACK) <= sim.time_seconds
        <= estimate.upper_seconds * (1.0 + UPPER_BOUND_GUARD))
    ops = shape.m * shape.depth * shape.n
    if args.no_verify or ops > args.verify_cutoff:
        checks["oracle_ok"] = None
        checks["max_rel_error"] = None
    else:
        a, b = build_matrices(shape, args.seed)
        ref = reference_gemm(a, b, accumulate="f64")
        err = np.abs(sim.output.astype(np.float64) - ref)
        rel = float((err / np.maximum(np.abs(ref), np.finfo(np.float64).tiny)).max())
        checks["max_rel_error"] = rel
        checks["oracle_ok"] = bool(rel <= ORACLE_RTOL)
    checks["tiles_ok"] = bool(
        sum(s.blocks_executed for s in sim.arrays) == sim.tile_count)

    report = report_dict(args, label, shape, point, estimate, sim, checks)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)

    failed = [k for k, v in checks.items() if v is False]
    if failed:
        print(f"check failure: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_explore(args) -> int:
    _, shape = resolve_shape(args)
    label = args.preset or args.shape
    bw_model = resolve_bw_model(args.bw_model)
    candidates = None
    if args.candidates:
        candidates = [int(c) for c in args.candidates.split(",")]
    result = model.explore(shape, bw_model=bw_model, pes_per_base=args.p,
                           max_arrays=args.pm, fmac_stages=args.stage,
                           f_acc=args.freq, candidates=candidates)

    rows = []
    for rank, entry in enumerate(result.entries):
        row = {
            "rank": rank,
            "n_arrays": entry.point.n_arrays,
            "block_rows": entry.point.block_rows,
            "block_cols": entry.point.block_cols,
            "feasible": model.is_feasible(entry.point, args.p, args.pm),
            **dataclasses.asdict(entry.estimate),
        }
        if args.simulate:
            sim = simulate_point(shape, entry.point, bw_model, args,
                                 numerics="fast" if args.fast_numerics else "exact")
            row["measured_seconds"] = sim.time_seconds
            row["measured_gflops"] = sim.gflops
            row["in_bounds"] = bool(
                entry.estimate.lower_seconds * (1.0 - LOWER_BOUND_SLACK)
                <= sim.time_seconds
                <= entry.estimate.upper_seconds * (1.0 + UPPER_BOUND_GUARD))
        rows.append(row)

    if args.out and args.out.endswith(".json"):
        payload = {"problem": label, "entries": rows,
                   "best": rows[0] if rows else None}
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        out_fh = open(args.out, "w", newline="") if args.out else sys.stdout
        try:
            writer = csv.DictWriter(out_fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        finally:
            if args.out:
                out_fh.close()
    if args.simulate and any(not r["in_bounds"] for r in rows):
        print("check failure: simulated time outside model bounds", file=sys.stderr)
        return 1
    return 0


def cmd_calibrate(args) -> int:
    try:
        table = mac.TableBandwidth.from_csv(args.csv)
    except mac.CalibrationError as exc:
        print(f"calibration rejected: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot read calibration: {exc}", file=sys.stderr)
        return 2
    out = args.out or args.csv
    table.to_csv(out)
    print(f"calibration accepted: {len(table.table)} points -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="masim",
        description="Simulator and performance model for a multi-array "
                    "linear systolic GEMM accelerator")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--shape", help="problem as MxKxN, e.g. 128x1200x729")
        p.add_argument("--preset", help=f"layer preset: {', '.join(LAYER_PRESETS)}")
        p.add_argument("--p", type=int, default=64, help="PEs per base array")
        p.add_argument("--pm", type=int, default=4, help="number of base arrays")
        p.add_argument("--freq", type=float, default=2e8, help="clock in Hz")
        p.add_argument("--stage", type=int, default=8,
                       help="multiply-accumulate pipeline depth")
        p.add_argument("--bw-model", default="parametric",
                       help="ideal | parametric[:peak,latency_elems,contention] "
                            "| calibration CSV path")
        p.add_argument("--seed", type=int, default=0, help="seed for matrix data")
        p.add_argument("--fast-numerics", action="store_true",
                       help="compute tiles with a float32 matmul instead of the "
                            "bit-exact per-PE accumulation")
        p.add_argument("--no-steal", action="store_true",
                       help="disable work stealing (static partition)")
        p.add_argument("--contention", choices=["per_array", "shared_port"],
                       default="per_array", help="transfer serialisation regime")

    p_run = sub.add_parser("run", help="simulate one problem at one design point")
    add_common(p_run)
    p_run.add_argument("--np", type=int, help="number of active arrays")
    p_run.add_argument("--si", type=int, help="block rows (A sub-block)")
    p_run.add_argument("--sj", type=int, help="block cols (B sub-block), default --si")
    p_run.add_argument("--auto", action="store_true",
                       help="pick the best design point from the model")
    p_run.add_argument("--trace", help="write the event trace CSV here")
    p_run.add_argument("--out", help="write the JSON report here (default stdout)")
    p_run.add_argument("--no-verify", action="store_true",
                       help="skip the reference-product verification")
    p_run.add_argument("--verify-cutoff", type=int, default=DEFAULT_VERIFY_CUTOFF,
                       help="skip verification when m*depth*n exceeds this")
    p_run.set_defaults(func=cmd_run)

    p_exp = sub.add_parser("explore", help="rank all feasible design points")
    add_common(p_exp)
    p_exp.add_argument("--candidates", help="comma-separated block-size candidates")
    p_exp.add_argument("--simulate", action="store_true",
                       help="simulate every point and compare against the bounds")
    p_exp.add_argument("--out", help="write the table here (.json or CSV)")
    p_exp.set_defaults(func=cmd_explore)

    p_cal = sub.add_parser("calibrate", help="validate a bandwidth table")
    p_cal.add_argument("csv", help="CSV with header n_p,s_i,bytes_per_second")
    p_cal.add_argument("--out", help="where to store the validated table")
    p_cal.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleBlockError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
