import csv
import json

import numpy as np
import pytest

from droopmpc.cli import main
from droopmpc.config import config_key, load_config, RunConfig


def write_config(tmp_path, model=None, sim=None, name="c.ini"):
    lines = ["[model]"] + [f"{k} = {v}" for k, v in (model or {}).items()]
    lines += ["[sim]"] + [f"{k} = {v}" for k, v in (sim or {}).items()]
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_emit_defaults_round_trips(tmp_path, capsys):
    assert main(["--emit-defaults"]) == 0
    text = capsys.readouterr().out
    path = tmp_path / "d.ini"
    path.write_text(text)
    assert config_key(load_config(str(path))) == config_key(RunConfig())
    assert main(["--emit-defaults", "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "config.ini").read_text() == text


def test_no_command_is_an_error(capsys):
    assert main([]) == 2


def test_forecast_files(tmp_path):
    out = tmp_path / "f"
    assert main(["forecast", "--out", str(out)]) == 0
    bounds = read_csv(out / "bounds.csv")
    assert len(bounds) == 96
    scen = read_csv(out / "scenarios.csv")
    assert len(scen) == 100 * 96
    first = (out / "bounds.csv").read_bytes(), (out / "scenarios.csv").read_bytes()
    assert main(["forecast", "--out", str(out)]) == 0
    assert ((out / "bounds.csv").read_bytes(), (out / "scenarios.csv").read_bytes()) == first


def test_single_scenario_bounds_equal_the_scenario(tmp_path):
    cfg = write_config(tmp_path, sim={"n_scenarios": 1, "duration_hours": 6.0})
    assert main(["forecast", "--config", cfg, "--out", str(tmp_path)]) == 0
    bounds = read_csv(tmp_path / "bounds.csv")
    scen = read_csv(tmp_path / "scenarios.csv")
    assert len(bounds) == 12
    for b, s in zip(bounds, scen):
        assert b["pv_low"] == b["pv_high"] == s["pv"]
        assert b["demand_low"] == b["demand_high"] == s["demand"]


def write_bounds(path, pv_lo, pv_hi, d_lo, d_hi):
    rows = ["step,timestamp,pv_low,pv_high,demand_low,demand_high"]
    for j, vals in enumerate(zip(pv_lo, pv_hi, d_lo, d_hi)):
        rows.append(f"{j},2021-01-01T00:00:00," + ",".join(map(repr, vals)))
    path.write_text("\n".join(rows) + "\n")
    return str(path)


def _solution_objective(path):
    for line in open(path):
        if line.startswith("objective "):
            return float(line.split()[1])
    raise AssertionError("no objective line")


def test_solve_degenerate_and_nesting(tmp_path):
    cfg = write_config(tmp_path, model={"horizon_j": 2})
    flat = write_bounds(tmp_path / "flat.csv", [1.0, 2.0], [1.0, 2.0], [1.2, 1.1], [1.2, 1.1])
    assert main(["solve", "--config", cfg, "--bounds", flat, "--out", str(tmp_path / "z")]) == 0
    text = (tmp_path / "z" / "solution.txt").read_text()
    assert "status optimal" in text and "wall_time" not in text
    assert (tmp_path / "z" / "problem.txt").read_text().startswith("VARS")

    wide = write_bounds(tmp_path / "wide.csv", [0.8, 1.5], [1.3, 2.4], [1.0, 1.0], [1.3, 1.2])
    objs = {}
    for mode in ("adaptive", "fixed"):
        out = tmp_path / mode
        assert main(["solve", "--config", cfg, "--bounds", wide, "--mode", mode,
                     "--out", str(out)]) == 0
        objs[mode] = _solution_objective(out / "solution.txt")
    assert objs["adaptive"] <= objs["fixed"] + 1e-8


def test_solve_reports_infeasible(tmp_path):
    cfg = write_config(tmp_path, model={"horizon_j": 1}, sim={"x0": 0.2})
    hopeless = write_bounds(tmp_path / "b.csv", [0.0], [0.0], [5.0], [5.0])
    assert main(["solve", "--config", cfg, "--bounds", hopeless, "--out", str(tmp_path)]) == 3


def test_bad_bounds_file(tmp_path):
    cfg = write_config(tmp_path, model={"horizon_j": 2})
    short = write_bounds(tmp_path / "b.csv", [0.0], [0.0], [1.0], [1.0])
    assert main(["solve", "--config", cfg, "--bounds", short]) == 2
    assert main(["solve", "--config", cfg, "--bounds", str(tmp_path / "missing.csv")]) == 2


def test_simulate_files_and_repeat(tmp_path):
    cfg = write_config(tmp_path, sim={"duration_hours": 2.0})
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["simulate", "--config", cfg, "--seed", "3", "--out", str(out)]) == 0
    for name in ("simlog.csv", "metrics.json", "config.ini"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert len(read_csv(outs[0] / "simlog.csv")) == 4
    m = json.loads((outs[0] / "metrics.json").read_text())
    assert m["steps"] == 4 and m["mean_solve_time"] is None
    eff = load_config(str(outs[0] / "config.ini"))
    assert eff.sim.forecast_seed == 3


def test_simulate_rejects_bad_gamma(tmp_path, capsys):
    cfg = write_config(tmp_path, model={"gamma": 1.5})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "gamma" in capsys.readouterr().err
    assert not (tmp_path / "simlog.csv").exists()


def test_unknown_key_and_missing_config(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[sim]\nspeed = 11\n")
    assert main(["simulate", "--config", str(path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "nope.ini")]) == 2


def test_compare_report(tmp_path, capsys):
    cfg = write_config(tmp_path, sim={"duration_hours": 2.0})
    assert main(["compare", "--config", cfg, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert {"adaptive", "fixed", "pv_gain_pct", "fc_reduction_pct", "solve_time_ratio",
            "reference"} <= set(rep)
    out = capsys.readouterr().out
    assert "7.5%" in out and "6.0%" in out
    assert len(read_csv(tmp_path / "adaptive.csv")) == len(read_csv(tmp_path / "fixed.csv")) == 4


def test_oracle_pass_sweep_and_limits(tmp_path, capsys):
    cfg = write_config(tmp_path, model={"horizon_j": 1})
    assert main(["oracle", "--config", cfg, "--resolution", "8", "16", "32"]) == 0
    out = capsys.readouterr().out
    assert out.count("one-sided bound ok") == 3
    cfg3 = write_config(tmp_path, model={"horizon_j": 3}, name="j3.ini")
    assert main(["oracle", "--config", cfg3]) == 2


def test_oracle_flags_corrupted_solution(tmp_path, capsys):
    cfg = write_config(tmp_path, model={"horizon_j": 1})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 0
    sol = tmp_path / "solution.txt"
    assert main(["oracle", "--config", cfg, "--solution", str(sol), "--resolution", "8"]) == 0
    lines = sol.read_text().splitlines()
    lines = [f"u_b[0] {float(l.split()[1]) + 0.3!r}" if l.startswith("u_b[0] ") else l
             for l in lines]
    sol.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert main(["oracle", "--config", cfg, "--solution", str(sol), "--resolution", "8"]) == 4
    assert "FAIL" in capsys.readouterr().out
    sol.write_text("garbage\n")
    assert main(["oracle", "--config", cfg, "--solution", str(sol)]) == 4
