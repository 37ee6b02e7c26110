from dataclasses import replace
from datetime import datetime, timedelta

import numpy as np
import pytest

from droopmpc.forecast import bounds_from_scenarios, synthetic_profiles
from droopmpc.model import (ADAPTIVE, FIXED, ControlInput, InitialConditions, MgParams,
                            ModelError, solve_mpc)
from droopmpc.sim import (CSV_COLUMNS, Metrics, PlantState, RealizedStep, SimConfig, SimError,
                          SimLog, compare_report, forecast_scenarios, metrics, mpc_envelope,
                          plant_step, run_closed_loop, run_compare)
from droopmpc.solver import SolveOptions

from conftest import random_instance

P = MgParams()


def test_zero_residual_with_fc_off():
    c = ControlInput(u_f=0.0, u_b=0.7, u_pv=1.0, delta_f=0, chi_f=0.5, chi_b=0.5)
    s = plant_step(PlantState(1.0, 0), c, (0.8, 1.5), P)
    assert s.mu == 0.0 and s.p_b == 0.7 and s.p_f == 0.0 and s.p_pv == 0.8


def test_two_unit_sharing():
    c = ControlInput(u_f=1.0, u_b=0.0, u_pv=0.5, delta_f=1, chi_f=0.5, chi_b=0.5)
    s = plant_step(PlantState(1.0, 1), c, (2.0, 2.0), P)
    # unknowns (p_f, p_b, mu): balance plus one sharing row per unit
    A = np.array([[1.0, 1.0, 0.0], [0.5, 0.0, -1.0], [0.0, 0.5, -1.0]])
    p_f, p_b, mu = np.linalg.solve(A, [2.0 - 0.5, 0.5 * 1.0, 0.0])
    assert (s.p_f, s.p_b, s.mu) == (pytest.approx(p_f), pytest.approx(p_b), pytest.approx(mu))
    assert (s.p_f, s.p_b, s.mu) == (pytest.approx(1.25), pytest.approx(0.25),
                                    pytest.approx(0.125))
    assert (s.p_f - c.u_f) * c.chi_f == pytest.approx(s.mu, abs=1e-15)


def test_storage_update():
    c = ControlInput(0.0, 0.2, 0.0, 0, 0.5, 0.5)
    s = plant_step(PlantState(0.3, 0), c, (0.0, 0.2), P)
    assert s.p_b == pytest.approx(0.2) and s.x_next == pytest.approx(0.2)


def test_limits_are_flagged_not_clipped():
    c = ControlInput(0.0, 0.9, 0.0, 0, 0.5, 0.5)
    s = plant_step(PlantState(0.3, 0), c, (0.0, 1.6), P)
    assert s.p_b == pytest.approx(1.6)
    assert "p_b_limit" in s.limit_events and "mu_limit" in s.limit_events
    assert "x_limit" in s.limit_events
    assert s.p_f + s.p_b + s.p_pv == pytest.approx(1.6, abs=1e-15)


def _log(p_pv, p_f, deltas, prev=1):
    cfg = SimConfig(delta_f_prev=prev)
    steps = [RealizedStep(k, ControlInput(0.0, 0.0, 0.0, d, 0.5, 0.5), 0.0, 0.0, f, 0.0, v, 0.0,
                          1.0, 1.0, wall_time=0.01 * (k + 1))
             for k, (v, f, d) in enumerate(zip(p_pv, p_f, deltas))]
    return SimLog(cfg, steps)


def test_metrics_arithmetic():
    m = metrics(_log(np.ones(96), np.zeros(96), [0] * 96))
    assert m.cumulative_pv_energy == 48.0 and m.cumulative_fc_energy == 0.0
    assert m.switch_count == 1  # initial FC status is on
    assert m.max_solve_time == pytest.approx(0.96) and m.mean_solve_time == pytest.approx(0.485)
    off = metrics(_log(np.zeros(4), np.zeros(4), [0, 1, 1, 0], prev=0))
    assert off.cumulative_pv_energy == off.cumulative_fc_energy == 0.0
    assert off.switch_count == 2
    with pytest.raises(SimError):
        metrics(SimLog(SimConfig()))


def test_compare_report_percentages():
    a = _log([2.0] * 4, [1.0] * 4, [1] * 4)
    f = _log([1.0] * 4, [2.0] * 4, [1] * 4)
    rep = compare_report(a, f)
    assert rep["pv_gain_pct"] == pytest.approx(100.0)
    assert rep["fc_reduction_pct"] == pytest.approx(50.0)
    assert rep["reference"]["pv_gain_pct"] == 7.5
    assert rep["reference"]["fc_reduction_pct"] == 6.0
    assert rep["adaptive_pv_at_least_fixed"] is True


def test_default_duration_is_96_steps():
    assert SimConfig().steps == 96
    with pytest.raises(SimError):
        _ = SimConfig(duration_hours=0.7).steps


@pytest.mark.parametrize("change", [dict(params=MgParams(gamma=1.5)),
                                    dict(realization="sometimes"), dict(n_scenarios=0),
                                    dict(x0=7.0), dict(pv_history="only_one.csv")])
def test_invalid_config_rejected_before_solving(change):
    with pytest.raises((SimError, ModelError)):
        run_closed_loop(replace(SimConfig(), **change))


def _periodic_world(tmp_path, load_scale=1.0, days=6):
    pv, load = synthetic_profiles(3, 0)
    paths = []
    for name, vals in (("pv", pv.values[:48]), ("load", load_scale * load.values[:48])):
        path = tmp_path / f"{name}.csv"
        t = datetime(2021, 6, 1)
        lines = ["timestamp,value"]
        for v in np.tile(vals, days):
            lines.append(f"{t.isoformat()},{float(v)!r}")
            t += timedelta(minutes=30)
        path.write_text("\n".join(lines) + "\n")
        paths.append(str(path))
    return paths


def test_degenerate_uncertainty_reproduces_the_plan(tmp_path):
    pv_path, load_path = _periodic_world(tmp_path)
    cfg = SimConfig(duration_hours=0.5, pv_history=pv_path, load_history=load_path,
                    history_unit="pu", realization="truth_trace")
    log = run_closed_loop(cfg)
    scen, _ = forecast_scenarios(cfg)
    bounds = bounds_from_scenarios(scen)
    assert np.array_equal(bounds.pv_low, bounds.pv_high)
    _, sol = solve_mpc(cfg.params, bounds, InitialConditions(cfg.x0, cfg.delta_f_prev),
                       cfg.mode, cfg.solver)
    step = log.steps[0]
    env = mpc_envelope(sol)
    for key in ("p_f", "p_b", "p_pv", "mu", "x_next"):
        lo, hi = env[key]
        assert hi - lo <= 1e-9
        assert getattr(step, key) == pytest.approx(lo, abs=1e-8)


def test_zero_uncertainty_modes_agree(tmp_path):
    pv_path, load_path = _periodic_world(tmp_path)
    cfg = SimConfig(duration_hours=4.0, pv_history=pv_path, load_history=load_path,
                    history_unit="pu")
    a, f, rep = run_compare(cfg)
    for key in ("cumulative_pv_energy", "cumulative_fc_energy"):
        assert rep["adaptive"][key] == pytest.approx(rep["fixed"][key], abs=1e-6)


def test_infeasible_step_aborts_with_partial_log(tmp_path):
    # a load of three times the usual level exceeds what FC and battery can supply at night
    pv_path, load_path = _periodic_world(tmp_path, load_scale=3.0)
    cfg = SimConfig(duration_hours=2.0, pv_history=pv_path, load_history=load_path,
                    history_unit="pu")
    log = run_closed_loop(cfg)
    assert log.aborted and log.abort_step == len(log.steps)
    assert "step" in log.abort_reason


def test_short_run_is_reproducible_and_safe():
    cfg = SimConfig(duration_hours=3.0, solver=SolveOptions(max_nodes=100))
    a = run_closed_loop(cfg)
    b = run_closed_loop(cfg)
    assert a.to_csv() == b.to_csv()
    header, *rows = a.to_csv().splitlines()
    assert header.split(",") == list(CSV_COLUMNS) and len(rows) == 6
    for s in a.steps:
        assert abs(s.p_f + s.p_b + s.p_pv - s.demand) <= 1e-9
        assert not s.limit_events


def test_adaptive_solve_never_worse_than_fixed_six_steps(rng):
    opts = SolveOptions(max_nodes=60)
    for _ in range(2):
        P6, b, init = random_instance(rng, 6)
        _, fx = solve_mpc(P6, b, init, FIXED, opts)
        _, ad = solve_mpc(P6, b, init, ADAPTIVE, opts)
        assert ad.objective <= fx.objective + 1e-8
