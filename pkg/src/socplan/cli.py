"""Command-line entry point: ``socplan <command> [options]``.

Exit codes: 0 success, 1 invalid input, 2 infeasible where a feasible
answer was required, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from socplan import __version__
from socplan.battery import BUILTIN_BATTERIES, default_battery, read_battery_config
from socplan.bench import (
    BenchPlan,
    aggregate,
    format_summary,
    records_to_csv,
    run_bench,
    summary_to_csv,
)
from socplan.errors import SocplanError
from socplan.instances import GenConfig, generate_instance, load_instance, save_instance
from socplan.milp import export_milp
from socplan.models import LinearFit, default_power_grid, default_soc_grid, fit_linear
from socplan.rcspp import SOLVERS, ResourceModel
from socplan.simulator import (
    INTEGRATED_MODELS,
    SINGLE_STEP_MODELS,
    MeasuredLog,
    PulseProfile,
    coulomb_count,
    compare_models,
    integrate,
    predict_single_step,
    segment_pulses,
)

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for infeasibility here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _g(x: float) -> str:
    return f"{x:.4g}"


def _pct(soc: float) -> str:
    return f"{100.0 * soc:.4g}%"


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"socplan: error: no such file: {path}")
    return p


def _read_text(path: str) -> str:
    return _existing(path).read_text(encoding="utf-8")


def _write_text(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _battery(arg: str):
    """A battery config path, or the name of a built-in battery."""
    if arg in BUILTIN_BATTERIES and not os.path.exists(arg):
        return default_battery(arg)
    return read_battery_config(_existing(arg))


def _emit(text: str, out: str | None) -> None:
    if out:
        _write_text(out, text)
    else:
        sys.stdout.write(text)


# commands -----------------------------------------------------------------


def cmd_fit(args) -> int:
    curve, params = _battery(args.battery)
    if not 0 <= args.pmin < args.pmax:
        raise UsageError("need 0 <= --pmin < --pmax")
    socs = np.linspace(args.soc_min, args.soc_max, args.soc_steps + 1)
    fit = fit_linear(curve, params, socs, default_power_grid(args.pmin, args.pmax, args.p_steps))
    _emit(fit.dumps() + "\n", args.output)
    print(
        f"1/V = {_g(fit.a)}*soc + {_g(fit.b)}*P + {_g(fit.c)}   "
        f"max relative residual {_pct(fit.max_rel_residual)}",
        file=sys.stderr if not args.output else sys.stdout,
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    curve, params = _battery(args.battery)
    profile = PulseProfile.loads(_read_text(args.profile))
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    known = INTEGRATED_MODELS + SINGLE_STEP_MODELS
    bad = [m for m in models if m not in known]
    if bad or not models:
        raise UsageError(f"--models: unknown {bad}; choose from {', '.join(known)}")
    fit = None
    if "linear" in models:
        if args.fit:
            fit = LinearFit.loads(_read_text(args.fit))
        else:
            powers = [leg.power for leg in profile.legs if leg.power > 0]
            fit = fit_linear(curve, params, default_soc_grid(), default_power_grid(min(powers), max(powers)))
    reference_name = args.reference or next((m for m in models if m in INTEGRATED_MODELS), models[0])
    if reference_name not in models:
        raise UsageError(f"--reference {reference_name!r} is not among --models")

    trajectories = {}
    for m in models:
        if m in INTEGRATED_MODELS:
            trajectories[m] = integrate(m, args.soc0, profile, args.steps, curve, params)
        else:
            trajectories[m] = predict_single_step(m, args.soc0, profile, fit, params)

    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    for m, traj in trajectories.items():
        (outdir / f"{m}.csv").write_text(traj.to_csv(), encoding="utf-8")
    others = [trajectories[m] for m in models if m != reference_name]
    report = compare_models(trajectories[reference_name], others)
    doc = {
        "reference": reference_name,
        "reference_final_soc": trajectories[reference_name].final_soc,
        "models": {
            r.model_name: {
                "final_soc": trajectories[r.model_name].final_soc,
                "final_diff_pp": r.final_diff_pp,
                "max_diff_pp": r.max_diff_pp,
                "mean_diff_pp": r.mean_diff_pp,
                "rms_diff_pp": r.rms_diff_pp,
                "n_points": r.n_points,
            }
            for r in report
        },
    }
    (outdir / "comparison.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

    print(f"reference {reference_name}: final SOC {_pct(trajectories[reference_name].final_soc)}")
    print(f"{'model':<9} {'final SOC':>10} {'final pp':>9} {'max pp':>8} {'mean pp':>8}")
    for r in report:
        print(
            f"{r.model_name:<9} {_pct(trajectories[r.model_name].final_soc):>10} "
            f"{_g(r.final_diff_pp):>9} {_g(r.max_diff_pp):>8} {_g(r.mean_diff_pp):>8}"
        )
    return EXIT_OK


def cmd_ingest(args) -> int:
    _, params = _battery(args.battery)
    log = MeasuredLog.from_csv(_read_text(args.log))
    profile = segment_pulses(log, args.threshold, args.min_duration, label=Path(args.log).stem)
    truth = coulomb_count(log, params.capacity_coulombs, args.soc0)
    _write_text(args.output, profile.dumps() + "\n")
    if args.truth:
        _write_text(args.truth, truth.to_csv())
    print(
        f"{len(profile.legs)} legs over {_g(profile.total_duration)} s; "
        f"coulomb-counted SOC {_pct(args.soc0)} -> {_pct(truth.final_soc)}"
    )
    return EXIT_OK


def cmd_gen(args) -> int:
    config = GenConfig.from_dict(json.loads(_read_text(args.config))) if args.config else GenConfig()
    inst = generate_instance(args.n, args.seed, config)
    save_instance(inst, args.output)
    print(f"{inst.n} nodes, {len(inst.edges)} edges, start {inst.start}, goal {inst.goal}")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = load_instance(_existing(args.instance))
    model = ResourceModel.for_instance(inst, args.model)
    kwargs = {"time_limit": args.time_limit}
    if args.solver == "brute" and args.max_nodes is not None:
        kwargs["max_nodes"] = args.max_nodes
    sol = SOLVERS[args.solver](inst, model, **kwargs)
    _emit(sol.dumps() + "\n", args.output)
    if sol.status == "optimal":
        print(
            f"optimal cost {_g(sol.cost)} over {len(sol.nodes) - 1} edges, "
            f"final SOC {_pct(sol.soc_profile[-1])}, {_g(1000 * sol.wall_time)} ms",
            file=sys.stderr if not args.output else sys.stdout,
        )
        return EXIT_OK
    print(f"infeasible ({_g(1000 * sol.wall_time)} ms)", file=sys.stderr if not args.output else sys.stdout)
    return EXIT_INFEASIBLE if args.require_feasible else EXIT_OK


def cmd_export_milp(args) -> int:
    inst = load_instance(_existing(args.instance))
    model = ResourceModel.for_instance(inst, args.model)
    _emit(export_milp(inst, model), args.output)
    return EXIT_OK


def cmd_bench(args) -> int:
    plan = BenchPlan.loads(_read_text(args.plan)) if args.plan else BenchPlan()
    config = GenConfig.from_dict(json.loads(_read_text(args.config))) if args.config else GenConfig()
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    t0 = time.perf_counter()
    records = run_bench(plan, config, jobs=args.jobs)
    _write_text(args.output, records_to_csv(records))
    rows = aggregate(records)
    if args.summary:
        _write_text(args.summary, summary_to_csv(rows))
    print(format_summary(rows))
    print(f"{len(records)} cells in {_g(time.perf_counter() - t0)} s")
    return EXIT_OK


# parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="socplan", description="Battery SOC models and battery-constrained shortest paths.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    battery_help = f"battery config JSON, or a built-in name ({', '.join(BUILTIN_BATTERIES)})"

    s = sub.add_parser("fit", help="fit 1/V = a*soc + b*P + c to the Ohmic-drop model")
    s.add_argument("--battery", required=True, help=battery_help)
    s.add_argument("--pmin", type=float, required=True, help="lowest power of the fit grid (W)")
    s.add_argument("--pmax", type=float, required=True, help="highest power of the fit grid (W)")
    s.add_argument("--soc-min", type=float, default=0.2, help="lowest SOC of the fit grid (default 0.2)")
    s.add_argument("--soc-max", type=float, default=1.0, help="highest SOC of the fit grid (default 1.0)")
    s.add_argument("--soc-steps", type=int, default=16, help="SOC grid intervals (default 16)")
    s.add_argument("--p-steps", type=int, default=10, help="power grid intervals (default 10)")
    s.add_argument("-o", "--output", help="fit JSON (default: standard output)")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run SOC models over a pulse profile and compare them")
    s.add_argument("--battery", required=True, help=battery_help)
    s.add_argument("--profile", required=True, help="pulse profile JSON")
    s.add_argument("--models", default="ohmic,rc,linear,nominal", help="comma-separated models (default all four)")
    s.add_argument("--fit", help="linear fit JSON (default: fit over the profile's power range)")
    s.add_argument("--reference", help="model the others are compared to (default: first of ohmic/rc given)")
    s.add_argument("--soc0", type=float, default=1.0, help="initial SOC fraction (default 1.0)")
    s.add_argument("--steps", type=int, default=100, help="RK4 steps per leg for ohmic/rc (default 100)")
    s.add_argument("-o", "--output", required=True, help="directory for <model>.csv and comparison.json")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("ingest", help="turn a measured log into a pulse profile plus coulomb-counted SOC")
    s.add_argument("--log", required=True, help="CSV with t_s,power_w,voltage_v,current_a")
    s.add_argument("--battery", required=True, help=battery_help + "; supplies the capacity")
    s.add_argument("--threshold", type=float, help="pulse power threshold in W (default 5%% of peak)")
    s.add_argument("--min-duration", type=float, default=0.0, help="merge runs shorter than this many seconds")
    s.add_argument("--soc0", type=float, default=1.0, help="SOC at the first log row (default 1.0)")
    s.add_argument("--truth", help="also write the coulomb-counted SOC trajectory CSV here")
    s.add_argument("-o", "--output", required=True, help="pulse profile JSON")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("gen", help="generate a random instance")
    s.add_argument("--n", type=int, required=True, help="number of nodes")
    s.add_argument("--seed", type=int, required=True, help="random seed")
    s.add_argument("--config", help="generator config JSON (default: 4S LiPo, 10 km square)")
    s.add_argument("-o", "--output", required=True, help="instance JSON")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve an instance")
    s.add_argument("--instance", required=True, help="instance JSON")
    s.add_argument("--solver", choices=sorted(SOLVERS), default="labeling", help="default labeling")
    s.add_argument("--model", choices=["linear", "nominal"], default="linear", help="default linear")
    s.add_argument("--time-limit", type=float, help="seconds before giving up")
    s.add_argument("--max-nodes", type=int, help="node guard for the brute-force solver (default 15)")
    s.add_argument("--require-feasible", action="store_true", help="exit 2 when the instance is infeasible")
    s.add_argument("-o", "--output", help="solution JSON (default: standard output)")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("export-milp", help="write the instance as an LP-format MILP")
    s.add_argument("--instance", required=True, help="instance JSON")
    s.add_argument("--model", choices=["linear", "nominal"], default="linear", help="default linear")
    s.add_argument("-o", "--output", help="LP file (default: standard output)")
    s.set_defaults(func=cmd_export_milp)

    s = sub.add_parser("bench", help="time both solvers under both battery models")
    s.add_argument("--plan", help="bench plan JSON (default: sizes 5-100 step 5, 30 instances)")
    s.add_argument("--config", help="generator config JSON")
    s.add_argument("--jobs", type=int, default=1, help="worker threads (default 1; >1 adds timing noise)")
    s.add_argument("--summary", help="also write the per-size summary CSV here")
    s.add_argument("-o", "--output", required=True, help="records CSV")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except (SocplanError, json.JSONDecodeError, OSError) as exc:
        print(f"socplan: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"socplan: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
