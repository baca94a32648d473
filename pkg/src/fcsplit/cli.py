"""Command-line interface.

Commands
    simulate             one closed-loop run; writes the run CSV, a text
                         summary, and the derived-model report
    sweep                closed-loop runs over a list of discharge budgets;
                         per-budget CSVs plus a summary CSV
    describe-constraints print the constraint row schema and active limits
    selfcheck            run the built-in numerical verification suite

Exit codes
    0  command succeeded and every planner solve reported Converged
    1  configuration or I/O error (no partial outputs are left behind)
    2  at least one planner solve did not report Converged
    3  selfcheck found a failing check
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, build_scenario, load_config, model_report
from .mpc import SimLog, run_closed_loop, sweep_qmax, sweep_summary_csv
from .ocp import describe_constraints
from .selfcheck import run_all

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_SELFCHECK = 3


def _parse_budgets(text: str):
    try:
        budgets = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"invalid budget list {text!r}: {exc}") from exc
    if not budgets:
        raise ConfigError("budget list must be non-empty")
    if any(q < 0.0 for q in budgets):
        raise ConfigError("budgets must be non-negative")
    return budgets


def _step_times(cfg) -> tuple:
    return tuple(t for t, _ in cfg.demand.breakpoints[1:])


def _all_converged(logs, expected_steps: int | None = None) -> bool:
    for log in logs:
        # a log shorter than the scenario means a solve aborted mid-run
        if expected_steps is not None and len(log.t) != expected_steps:
            return False
        if any(s != "Converged" for s in log.status):
            return False
    return True


def _run_summary(log: SimLog, step_times: tuple) -> str:
    lines = [
        f"total hydrogen [g]        : {log.h2_total_kg * 1e3:.6f}",
        f"final discharge [A*s]     : {log.q_dis_final:.6f}",
        f"max scaled violation      : {log.max_violation:.3e}",
        f"tracking RMS [W]          : {log.tracking_rms(step_times):.3f}",
        f"clamp activations         : {log.clamp_activations}",
        f"steps not converged       : {sum(s != 'Converged' for s in log.status)}",
    ]
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    cfg_dict = load_config(args.config)
    cfg = build_scenario(cfg_dict)
    out = Path(args.out)

    log = run_closed_loop(cfg, store_traces=False)
    steps = _step_times(cfg)

    out.mkdir(parents=True, exist_ok=True)
    log.to_csv(out / "run.csv")
    (out / "summary.txt").write_text(_run_summary(log, steps))
    (out / "model_ledger.txt").write_text(model_report(cfg.model))
    if args.emit_plots:
        from .plots import render_run
        render_run(log, out, step_times=steps)

    sys.stdout.write(_run_summary(log, steps))
    expected = int(round(cfg.duration / cfg.dt))
    return EXIT_OK if _all_converged([log], expected) else EXIT_NOT_CONVERGED


def cmd_sweep(args) -> int:
    cfg_dict = load_config(args.config)
    cfg = build_scenario(cfg_dict)
    if args.budgets is not None:
        budgets = _parse_budgets(args.budgets)
    else:
        budgets = list(cfg_dict["sweep.budgets"])
        if not budgets:
            raise ConfigError("sweep.budgets must be non-empty")
    workers = int(cfg_dict["sweep.workers"])
    out = Path(args.out)

    rows, logs = sweep_qmax(cfg, budgets, workers=workers)
    steps = _step_times(cfg)

    out.mkdir(parents=True, exist_ok=True)
    for q, log in logs.items():
        log.to_csv(out / f"budget_{q:g}.csv")
    sweep_summary_csv(rows, out / "sweep_summary.csv")
    (out / "model_ledger.txt").write_text(model_report(cfg.model))
    if args.emit_plots:
        from .plots import render_sweep
        render_sweep(logs, out, step_times=steps)

    for r in rows:
        sys.stdout.write(
            f"budget {r['q_max_As']:g} A*s: H2 {r['h2_total_g']:.4f} g, "
            f"final discharge {r['q_dis_final_As']:.3f} A*s, "
            f"max violation {r['max_violation']:.2e}\n")
    expected = int(round(cfg.duration / cfg.dt))
    return EXIT_OK if _all_converged(logs.values(), expected) else EXIT_NOT_CONVERGED


def cmd_describe_constraints(args) -> int:
    cfg_dict = load_config(args.config)
    cfg = build_scenario(cfg_dict)
    schema = describe_constraints()
    cs = cfg.constraints
    limits = {
        "oxygen_starvation": f"lambda_O2 >= {cs.lambda_min:g}",
        "compressor_choke": (f"p_sm >= {cs.choke_slope:g}*flow"
                             f" + {cs.choke_intercept:g} Pa"),
        "compressor_surge": (f"p_sm <= {cs.surge_slope:g}*flow"
                             f" + {cs.surge_intercept:g} Pa"),
        "v_cm_lower": f"v_cm >= {cs.v_cm_min:g} V",
        "v_cm_upper": f"v_cm <= {cs.v_cm_max:g} V",
        "i_st_lower": f"i_st >= {cs.i_st_min:g} A",
        "i_st_upper": f"i_st <= {cs.i_st_max:g} A",
        "i_bat_lower": f"i_bat >= {cs.i_bat_min:g} A",
        "i_bat_upper": f"i_bat <= {cs.i_bat_max:g} A",
        "discharge_budget": f"q_dis <= {cs.q_max:g} A*s",
        "p_o2_nonneg": "p_O2 >= 0 Pa",
        "cathode_above_atm": "p_ca >= atmospheric",
        "manifold_above_atm": "p_sm >= atmospheric",
    }
    sys.stdout.write(f"convention: {schema['convention']}\n")
    for row in schema["rows"]:
        term = "stage+terminal" if row["terminal"] else "stage"
        sys.stdout.write(
            f"{row['index']:>3d}  {row['name']:<20s} scale {row['scale']:>8g}"
            f"  {term:<14s} {limits[row['name']]}\n")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    results = run_all(seed=args.seed, corrupt_jacobians=args.corrupt_jacobians)
    for r in results:
        sys.stdout.write(r.line() + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFCHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcsplit",
        description="Fuel-cell / battery power-split trajectory planner")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, out_default):
        p.add_argument("--config", metavar="PATH", default=None,
                       help="configuration file (defaults are built in)")
        p.add_argument("--out", metavar="DIR", default=out_default,
                       help="output directory")
        p.add_argument("--seed", metavar="U64", type=int, default=0,
                       help="seed for any randomized component")
        p.add_argument("--emit-plots", action="store_true",
                       help="render PNG figures alongside the CSV output")

    p_sim = sub.add_parser("simulate", help="run one closed-loop scenario")
    add_common(p_sim, "out")
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="run the discharge-budget sweep")
    add_common(p_sweep, "out")
    p_sweep.add_argument("--budgets", metavar="LIST", default=None,
                         help="comma-separated discharge budgets [A*s]")
    p_sweep.set_defaults(func=cmd_sweep)

    p_desc = sub.add_parser("describe-constraints",
                            help="print the constraint row schema")
    p_desc.add_argument("--config", metavar="PATH", default=None)
    p_desc.set_defaults(func=cmd_describe_constraints)

    p_check = sub.add_parser("selfcheck",
                             help="run the numerical verification suite")
    p_check.add_argument("--seed", metavar="U64", type=int, default=0)
    p_check.add_argument("--corrupt-jacobians", action="store_true",
                         help=argparse.SUPPRESS)  # negative-control hook
    p_check.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
