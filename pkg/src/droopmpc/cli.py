"""Command-line entry point: ``droopmpc {forecast,solve,simulate,compare,oracle}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 infeasible or
solver failure, 4 verification failure.
"""
import argparse
import csv
import json
import os
import sys
from typing import List, Optional

import numpy as np

from .config import ConfigError, RunConfig, dumps_config, load_config, with_overrides
from .forecast import ForecastError, bounds_from_scenarios
from .model import ForecastBounds, InitialConditions, ModelError, build_mpc_problem, solve_mpc
from .oracle import OracleError, grid_oracle
from .sim import (SimError, forecast_scenarios, metrics, metrics_json, run_closed_loop,
                  run_compare)
from .solver.bnb import dumps_solution, loads_solution
from .solver.problem import ProblemError, dumps_problem, validate_solution

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 2, 3, 4
BOUNDS_COLUMNS = ("step", "timestamp", "pv_low", "pv_high", "demand_low", "demand_high")


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_bounds_csv(path: str, bounds: ForecastBounds, stamps) -> None:
    rows = [",".join(BOUNDS_COLUMNS)]
    for j in range(len(bounds)):
        rows.append(",".join([str(j), stamps[j].isoformat(), _fmt(bounds.pv_low[j]),
                              _fmt(bounds.pv_high[j]), _fmt(bounds.demand_low[j]),
                              _fmt(bounds.demand_high[j])]))
    _write(path, "\n".join(rows) + "\n")


def read_bounds_csv(path: str, horizon: int) -> ForecastBounds:
    cols = {k: [] for k in BOUNDS_COLUMNS[2:]}
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not set(cols) <= set(reader.fieldnames):
                raise CliFailure(EXIT_INVALID, f"{path}: missing bound columns")
            for lineno, row in enumerate(reader, 2):
                try:
                    for k in cols:
                        cols[k].append(float(row[k]))
                except (TypeError, ValueError):
                    raise CliFailure(EXIT_INVALID, f"{path}: line {lineno}: bad number") from None
    except OSError as exc:
        raise CliFailure(EXIT_INVALID, f"cannot read bounds: {exc}") from None
    if len(cols["pv_low"]) < horizon:
        raise CliFailure(EXIT_INVALID, f"{path}: {len(cols['pv_low'])} rows, horizon needs "
                                       f"{horizon}")
    return ForecastBounds(*(np.array(cols[k][:horizon]) for k in BOUNDS_COLUMNS[2:]))


def _instance(cfg: RunConfig, args):
    sim = cfg.sim
    J = sim.params.horizon_j
    if getattr(args, "bounds", None):
        bounds = read_bounds_csv(args.bounds, J)
    else:
        scen, _ = forecast_scenarios(sim, J, 0)
        bounds = bounds_from_scenarios(scen)
    return bounds, InitialConditions(sim.x0, sim.delta_f_prev)


def cmd_forecast(cfg: RunConfig, args) -> int:
    scen, stamps = forecast_scenarios(cfg.sim, cfg.sim.steps, 0)
    out = _out_dir(args)
    rows = ["scenario,step,timestamp,pv,demand"]
    for i in range(scen.n):
        for j in range(scen.horizon):
            rows.append(f"{i},{j},{stamps[j].isoformat()},{_fmt(scen.pv[i, j])},"
                        f"{_fmt(scen.demand[i, j])}")
    _write(os.path.join(out, "scenarios.csv"), "\n".join(rows) + "\n")
    write_bounds_csv(os.path.join(out, "bounds.csv"), bounds_from_scenarios(scen), stamps)
    print(f"wrote {scen.n} scenarios x {scen.horizon} steps to {out}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig, args) -> int:
    sim = cfg.sim
    bounds, init = _instance(cfg, args)
    problem, sol = solve_mpc(sim.params, bounds, init, sim.mode, sim.solver, sim.pairing,
                             sim.curtailment_reference)
    out = _out_dir(args)
    _write(os.path.join(out, "problem.txt"), dumps_problem(problem))
    _write(os.path.join(out, "solution.txt"), dumps_solution(sol, sim.record_timing))
    print(f"status {sol.status}  objective {sol.objective:.9g}  gap {sol.gap:.3g}  "
          f"nodes {sol.node_count}")
    if not sol.has_point:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    log = run_closed_loop(cfg.sim)
    out = _out_dir(args)
    _write(os.path.join(out, "config.ini"), dumps_config(cfg))
    _write(os.path.join(out, "simlog.csv"), log.to_csv())
    if log.steps:
        _write(os.path.join(out, "metrics.json"),
               metrics_json(metrics(log), cfg.sim.record_timing))
    if log.aborted:
        print(f"aborted: {log.abort_reason}", file=sys.stderr)
        return EXIT_INFEASIBLE
    m = metrics(log)
    print(f"{len(log.steps)} steps  PV {m.cumulative_pv_energy:.4f} puh  "
          f"FC {m.cumulative_fc_energy:.4f} puh  switches {m.switch_count}  "
          f"limit events {m.constraint_violation_count}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args) -> int:
    log_a, log_f, report = run_compare(cfg.sim)
    out = _out_dir(args)
    _write(os.path.join(out, "config.ini"), dumps_config(cfg))
    _write(os.path.join(out, "adaptive.csv"), log_a.to_csv())
    _write(os.path.join(out, "fixed.csv"), log_f.to_csv())
    _write(os.path.join(out, "report.json"), json.dumps(report, indent=2, sort_keys=True) + "\n")
    ref = report["reference"]

    def pct(v):
        return "n/a" if v is None else f"{v + 0.0:+.2f}%"

    print(f"PV gain       {pct(report['pv_gain_pct'])}  (reference +{ref['pv_gain_pct']}%)")
    print(f"FC reduction  {pct(report['fc_reduction_pct'])}  "
          f"(reference +{ref['fc_reduction_pct']}%)")
    if log_a.aborted or log_f.aborted:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, args) -> int:
    sim = cfg.sim
    if sim.params.horizon_j > 2:
        raise CliFailure(EXIT_INVALID, "the oracle check needs horizon_j <= 2")
    bounds, init = _instance(cfg, args)
    problem = build_mpc_problem(sim.params, bounds, init, sim.mode, sim.pairing,
                                sim.curtailment_reference)
    if args.solution:
        try:
            with open(args.solution) as fh:
                sol = loads_solution(fh.read())
        except OSError as exc:
            raise CliFailure(EXIT_INVALID, f"cannot read solution: {exc}") from None
        except ProblemError as exc:
            print(f"FAIL: unreadable solution file: {exc}")
            return EXIT_VERIFY
        if sol.names != problem.names():
            print("FAIL: solution variables do not match the configured problem")
            return EXIT_VERIFY
    else:
        problem, sol = solve_mpc(sim.params, bounds, init, sim.mode, sim.solver, sim.pairing,
                                 sim.curtailment_reference)
        if not sol.has_point:
            print(f"solver returned {sol.status}")
            return EXIT_INFEASIBLE
    report = validate_solution(problem, sol.values)
    objective = problem.objective_value(sol.values)
    ok = report.max_violation <= 1e-7 and np.isfinite(objective)
    print(f"solution: objective {objective:.9g}  max violation {report.max_violation:.3g}  "
          f"{'ok' if ok else 'FAIL'}")
    resolutions = sorted(set(args.resolution or [cfg.oracle_resolution]))
    if resolutions[0] < 1:
        raise CliFailure(EXIT_INVALID, "oracle resolution must be at least 1")
    previous = None
    for res in resolutions:
        try:
            orc = grid_oracle(problem, res)
        except OracleError as exc:
            print(f"resolution {res}: {exc}")
            previous = None
            continue
        bound_ok = objective <= orc.objective + 1e-6 * (1.0 + abs(objective))
        print(f"resolution {res}: oracle {orc.objective:.9g} over {orc.evaluated} points  "
              f"one-sided bound {'ok' if bound_ok else 'FAIL'}")
        ok = ok and bound_ok
        # refined grids that contain the coarser one can only lower the minimum
        if previous is not None and res % previous[0] == 0 and orc.objective > previous[1] + 1e-12:
            print(f"resolution {res}: FAIL oracle objective rose on a nested refinement")
            ok = False
        previous = (res, orc.objective)
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"forecast": cmd_forecast, "solve": cmd_solve, "simulate": cmd_simulate,
            "compare": cmd_compare, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--mode", choices=("adaptive", "fixed"), help="droop gain mode")
    common.add_argument("--seed", type=int, metavar="N", help="forecast, realization and world seed")
    common.add_argument("--out", metavar="DIR", help="output directory (default: .)")
    parser = argparse.ArgumentParser(prog="droopmpc", parents=[common],
                                     description="Robust minmax MPC of a droop-controlled "
                                                 "standalone microgrid.")
    parser.add_argument("--emit-defaults", action="store_true",
                        help="print the default configuration and exit")
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("forecast", parents=[common], help="write scenarios.csv and bounds.csv")
    p = sub.add_parser("solve", parents=[common], help="solve one MPC instance")
    p.add_argument("--bounds", metavar="CSV", help="bounds file (default: forecast at step 0)")
    sub.add_parser("simulate", parents=[common], help="closed-loop run, writes simlog.csv")
    sub.add_parser("compare", parents=[common], help="paired adaptive and fixed runs")
    p = sub.add_parser("oracle", parents=[common], help="check the solver against a grid oracle")
    p.add_argument("--bounds", metavar="CSV")
    p.add_argument("--solution", metavar="PATH", help="check this solution file instead")
    p.add_argument("--resolution", type=int, nargs="+", metavar="R",
                   help="grid resolution(s); several values form a refinement sweep")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = with_overrides(load_config(args.config), args.mode, args.seed)
        if args.emit_defaults:
            text = dumps_config(cfg if args.config else RunConfig())
            if args.out:
                _write(os.path.join(_out_dir(args), "config.ini"), text)
            else:
                sys.stdout.write(text)
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_INVALID
        cfg.validate()
        return COMMANDS[args.command](cfg, args)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ModelError, SimError, ForecastError, ProblemError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
