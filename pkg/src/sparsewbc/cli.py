"""Command-line entry point.

Commands
--------
verify     identity, oracle and dynamics suites (JSON report)
bench      sparse vs dense decomposition timing, optional kernel timing
simulate   run scenarios, write CSV logs with JSON sidecars
export     tidy plot-ready series from a log or a scenario

Exit codes: 0 success, 1 verification or run failure, 2 usage or input error.
Model names are looked up in ``$SPARSEWBC_MODEL_DIR`` before the bundled
models.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .errors import ModelFormatError, ScenarioError, SparseWBCError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=str)
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text + "\n")
    return text


def _load_model(ref):
    from .sim.scenario import resolve_model

    return resolve_model(ref)


# --------------------------------------------------------------------------- verify


def cmd_verify(args) -> int:
    from .verify import run_all

    if args.instances < 1:
        raise UsageError("--instances must be at least 1")
    models = [_load_model(m) for m in args.model or []]
    report = run_all(args.instances, args.seed, models=models)
    report["models"] = [m.name for m in models]
    for name, suite in report["suites"].items():
        status = "ok" if suite["passed"] else "FAIL"
        print(f"{name:<14}{status:<6}{suite['cases']:>5} cases  {suite['seconds']:7.2f} s")
        for check, c in suite["checks"].items():
            gate = "info" if c["tol"] is None else f"<= {c['tol']:.0e}"
            print(f"    {check:<34}{c['max']:11.3e}  {gate}")
    print("verify:", "PASS" if report["passed"] else "FAIL")
    if args.json:
        _dump(report, args.json)
    return EXIT_OK if report["passed"] else EXIT_FAIL


# --------------------------------------------------------------------------- bench


def cmd_bench(args) -> int:
    from .dense_ref import bench

    if args.repetitions < 1:
        raise UsageError("--repetitions must be at least 1")
    if args.ks < args.base_dim:
        raise UsageError(f"--ks must be at least the base dimension ({args.base_dim})")
    try:
        report = bench(args.n, args.ks, args.kf, args.repetitions, base_dim=args.base_dim, seed=args.seed,
                       end_to_end=args.end_to_end)
    except (ValueError, RuntimeError) as exc:
        raise UsageError(f"cannot build an instance with n={args.n}, k_s={args.ks}, k_f={args.kf}: {exc}") from None
    out = {"decomposition": report}
    print(f"n={args.n} k_s={args.ks} k_f={args.kf} base_dim={args.base_dim} repetitions={args.repetitions}")
    print(f"  {'path':<10}{'median ms':>11}{'std ms':>10}")
    print(f"  {'sparse':<10}{report['sparse_decompose_ms']:11.4f}{report['sparse_std_ms']:10.4f}")
    print(f"  {'dense':<10}{report['dense_decompose_ms']:11.4f}{report['dense_std_ms']:10.4f}")
    print(f"  speedup {report['ratio']:.2f}x")
    if args.end_to_end:
        print(f"  full tick: sparse {report['sparse_tick_ms']:.3f} ms, dense {report['dense_tick_ms']:.3f} ms")
    if args.kernels:
        from .rbd.kernel_bench import bench_kernels

        kr = bench_kernels(repetitions=args.repetitions, n=args.n, base_dim=args.base_dim, seed=args.seed)
        out["kernels"] = kr
        for backend, t in kr["backends"].items():
            print(f"  kernels[{backend}]: " + ", ".join(f"{k} {v:.1f} us" for k, v in t.items()))
    print(json.dumps(out, sort_keys=True))
    if args.json:
        _dump(out, args.json)
    if args.min_ratio is not None and report["ratio"] < args.min_ratio:
        print(f"bench: speedup {report['ratio']:.2f} below required {args.min_ratio}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# --------------------------------------------------------------------------- simulate / export


def _substeps(scenario, args):
    control_dt = args.control_dt or scenario.control_dt
    if args.dt is None:
        return control_dt, None
    ratio = control_dt / args.dt
    sub = int(round(ratio))
    if sub < 1 or not math.isclose(ratio, sub, rel_tol=1e-9):
        raise UsageError(f"--dt {args.dt} must divide the control period {control_dt}")
    return control_dt, sub


def _run(ref, args):
    from .sim import load_scenario, run_scenario

    scenario = load_scenario(ref)
    model = _load_model(args.model) if args.model else None
    control_dt, sub = _substeps(scenario, args)

    def progress(t):
        if not args.quiet:
            print(f"  {scenario.name}: t = {t:5.1f} / {scenario.end_time:g} s", file=sys.stderr)

    log = run_scenario(scenario, model, control_dt=control_dt, substeps=sub,
                       optimize_forces=not args.no_force_optimization, progress=progress)
    log.meta["command_line"] = {"dt": args.dt, "control_dt": args.control_dt, "model": args.model}
    return scenario, log


def cmd_simulate(args) -> int:
    from .sim import compare_torque_jumps

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    logs = {}
    for ref in args.scenario:
        scenario, log = _run(ref, args)
        csv_path, json_path = log.write(out / f"{scenario.name}.csv")
        logs[scenario.name] = log
        print(f"{scenario.name}: {csv_path} ({len(log.t)} rows), {json_path}")
        for key, val in log.metrics.items():
            print(f"  {key}: {json.dumps(val, sort_keys=True)}")
    if sum("torque_jumps" in lg.metrics for lg in logs.values()) == 2:
        summary = compare_torque_jumps(logs)
        _dump(summary, out / "comparison.json")
        print(f"torque-jump ratio {summary['ratio']:.1f} ({summary['smoother']} smoother); {out / 'comparison.json'}")
    return EXIT_OK


def cmd_export(args) -> int:
    from .sim import SimulationLog, export_series

    src = Path(args.source)
    if src.suffix == ".csv":
        if not src.is_file():
            raise UsageError(f"log {src} not found")
        try:
            log = SimulationLog.read_csv(src)
        except (ValueError, KeyError) as exc:
            raise UsageError(str(exc)) from None
        name = src.stem
    else:
        scenario, log = _run(args.source, args)
        name = scenario.name
    target = Path(args.out) if args.out else Path(f"{name}_series.csv")
    target.parent.mkdir(parents=True, exist_ok=True)
    series = args.series.split(",") if args.series else None
    if series:
        missing = [s for s in series if s not in log.columns]
        if missing:
            raise UsageError(f"unknown series {missing}; available: {', '.join(log.columns[2:])}")
    export_series(log, target, series)
    print(f"{target}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsewbc", description="Sparse whole-body motion/force control toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run the self-check suites")
    v.add_argument("--instances", type=int, default=100, help="random oracle instances (default 100)")
    v.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    v.add_argument("--model", action="append", help="also check this model file (repeatable)")
    v.add_argument("--json", help="write the report here")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="time sparse vs dense decompositions")
    b.add_argument("--n", type=int, default=23, help="actuated joints (default 23)")
    b.add_argument("--ks", type=int, default=6, help="supporting rows (default 6)")
    b.add_argument("--kf", type=int, default=12, help="controlled rows (default 12)")
    b.add_argument("--base-dim", type=int, choices=(3, 6), default=6)
    b.add_argument("--repetitions", type=int, default=200)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--end-to-end", action="store_true", help="also time full control ticks")
    b.add_argument("--kernels", action="store_true", help="also time compiled vs Python dynamics kernels")
    b.add_argument("--min-ratio", type=float, help="exit 1 when the speedup is below this")
    b.add_argument("--json", help="write the report here")
    b.set_defaults(func=cmd_bench)

    def sim_flags(sp):
        sp.add_argument("--model", help="model file or name (overrides the scenario's)")
        sp.add_argument("--dt", type=float, help="simulator step in s (must divide the control period)")
        sp.add_argument("--control-dt", type=float, help="control period in s (default from scenario)")
        sp.add_argument("--no-force-optimization", action="store_true",
                        help="keep the minimum-norm torques instead of optimizing supporting forces")
        sp.add_argument("--quiet", action="store_true")

    s = sub.add_parser("simulate", help="run scenarios and write logs")
    s.add_argument("scenario", nargs="+", help="scenario file or bundled name (test1_planar, test2_pfc, ...)")
    s.add_argument("--out", default="out", help="output directory (default ./out)")
    sim_flags(s)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("export", help="write tidy t,series,value CSV for plotting")
    e.add_argument("source", help="log CSV written by simulate, or a scenario to run first")
    e.add_argument("--out", help="output CSV (default <name>_series.csv)")
    e.add_argument("--series", help="comma-separated log columns (default: normal forces and torques)")
    sim_flags(e)
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ModelFormatError, ScenarioError, FileNotFoundError) as exc:
        print(f"sparsewbc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SparseWBCError as exc:
        print(f"sparsewbc {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
