"""Closed-loop receding-horizon simulation of the droop-controlled microgrid.

Each step forecasts fresh bounds from the realized history, solves the MPC,
applies the first control to the steady-state droop plant fed with a realized
disturbance, and logs the result.  Everything random is seeded from
``(seed, step)`` so two runs with the same configuration produce identical logs.
"""
import io
import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .forecast import (DAY_STEPS, TimeSeries, bounds_from_scenarios, fit_seasonal_model,
                       load_history_csv, sample_scenarios, synthetic_profiles)
from .model import (ADAPTIVE, SIGMAS, STATE_SLACK, ControlInput, ForecastBounds, GainMode,
                    InitialConditions, MgParams, extract_control, scenario_vars, solve_mpc)
from .solver.bnb import MiblpSolution, SolveOptions

POLICIES = ("truth_trace", "uniform_in_bounds", "worst_case_high", "worst_case_low")
LIMIT_EVENTS = ("p_f_limit", "p_b_limit", "mu_limit", "x_limit")
OUT_OF_BOUNDS = "w_outside_bounds"
CSV_COLUMNS = ("k", "u_f", "u_b", "u_pv", "delta_f", "chi_f", "chi_b", "w_pv", "demand", "p_f",
               "p_b", "p_pv", "mu", "x", "solve_ms", "nodes", "events")
REFERENCE_PV_GAIN_PCT = 7.5
REFERENCE_FC_REDUCTION_PCT = 6.0

_LIMIT_TOL = 1e-9


class SimError(ValueError):
    """Configuration or data problem detected before or during a run."""


@dataclass(frozen=True)
class PlantState:
    x: float
    delta_f_prev: int
    sim_time: int = 0


@dataclass(frozen=True)
class RealizedStep:
    k: int
    control: ControlInput
    w_pv: float
    demand: float
    p_f: float
    p_b: float
    p_pv: float
    mu: float
    x: float
    x_next: float
    wall_time: float = 0.0
    node_count: int = 0
    status: str = ""
    objective: float = math.nan
    limit_events: Tuple[str, ...] = ()


def plant_step(state: PlantState, control: ControlInput, realized_w: Tuple[float, float],
               params: MgParams, bounds: Optional[ForecastBounds] = None,
               k: Optional[int] = None) -> RealizedStep:
    """Steady-state droop response to ``control`` under ``(pv_available, demand)``.

    Nothing is clipped: a response outside a unit limit is kept (so the power
    balance stays exact) and flagged in ``limit_events``.  With ``bounds`` the
    disturbance is also checked against the forecast interval of step 0.
    """
    w_pv, demand = float(realized_w[0]), float(realized_w[1])
    c = control
    p_pv = min(c.u_pv, w_pv)
    r = demand - c.u_f * c.delta_f - c.u_b - p_pv
    if c.delta_f:
        mu = r / (1.0 / c.chi_f + 1.0 / c.chi_b)
        p_f = c.u_f + mu / c.chi_f
    else:
        mu = r * c.chi_b
        p_f = 0.0
    p_b = c.u_b + mu / c.chi_b
    x_next = state.x - params.delta_t * p_b

    events = []
    if c.delta_f and not params.p_f_min - _LIMIT_TOL <= p_f <= params.p_f_max + _LIMIT_TOL:
        events.append("p_f_limit")
    if not params.p_b_min - _LIMIT_TOL <= p_b <= params.p_b_max + _LIMIT_TOL:
        events.append("p_b_limit")
    if not params.mu_min - _LIMIT_TOL <= mu <= params.mu_max + _LIMIT_TOL:
        events.append("mu_limit")
    if not params.x_min - _LIMIT_TOL <= x_next <= params.x_max + _LIMIT_TOL:
        events.append("x_limit")
    if bounds is not None and not bounds.contains(w_pv, demand, 0, tol=1e-12):
        events.append(OUT_OF_BOUNDS)
    return RealizedStep(state.sim_time if k is None else k, control, w_pv, demand, p_f, p_b,
                        p_pv, mu, state.x, x_next, limit_events=tuple(events))


def mpc_envelope(solution: MiblpSolution) -> Dict[str, Tuple[float, float]]:
    """``[min, max]`` over the two scenarios of the step-0 MPC trajectories."""
    sv = scenario_vars(solution)
    out = {}
    for key, traj, j in (("p_f", sv.p_f, 0), ("p_b", sv.p_b, 0), ("p_pv", sv.p_pv, 0),
                         ("mu", sv.mu, 0), ("x_next", sv.x, 1)):
        vals = [float(traj[s][j]) for s in SIGMAS]
        out[key] = (min(vals), max(vals))
    return out


@dataclass
class SimConfig:
    params: MgParams = field(default_factory=MgParams)
    mode: GainMode = ADAPTIVE
    duration_hours: float = 48.0
    x0: float = 0.3
    delta_f_prev: int = 1
    forecast_seed: int = 0
    realization_seed: int = 0
    world_seed: int = 0
    n_scenarios: int = 100
    realization: str = "uniform_in_bounds"
    pv_history: Optional[str] = None
    load_history: Optional[str] = None
    history_unit: str = "kW"
    base_kw: float = 10.0
    training_days: int = 3
    pairing: str = "surplus"
    curtailment_reference: str = "available"
    solver: SolveOptions = field(default_factory=lambda: SolveOptions(max_nodes=500,
                                                                      max_time=3600.0))
    record_timing: bool = False

    @property
    def steps(self) -> int:
        n = self.duration_hours / self.params.delta_t
        if abs(n - round(n)) > 1e-9 or n < 1:
            raise SimError("duration must be a positive multiple of the sample time")
        return int(round(n))

    def validate(self) -> "SimConfig":
        self.params.validate()
        InitialConditions(self.x0, self.delta_f_prev).validate(self.params)
        if self.realization not in POLICIES:
            raise SimError(f"unknown realization policy {self.realization!r}")
        P = self.params
        if not self.mode.adaptive and not (P.chi_f_min <= self.mode.chi_f <= P.chi_f_max
                                           and P.chi_b_min <= self.mode.chi_b <= P.chi_b_max):
            raise SimError("fixed gains outside the gain limits")
        if self.n_scenarios < 1:
            raise SimError("n_scenarios must be at least 1")
        if self.training_days < 3:
            raise SimError("need at least 3 training days")
        if (self.pv_history is None) != (self.load_history is None):
            raise SimError("give both history files or neither")
        if abs(self.params.delta_t * DAY_STEPS - 24.0) > 1e-9:
            raise SimError("the seasonal models assume 30-minute sampling")
        _ = self.steps
        return self


@dataclass
class SimLog:
    config: SimConfig
    steps: List[RealizedStep] = field(default_factory=list)
    aborted: bool = False
    abort_step: Optional[int] = None
    abort_reason: str = ""

    def to_csv(self, fh=None, record_timing: Optional[bool] = None) -> str:
        timing = self.config.record_timing if record_timing is None else record_timing
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for s in self.steps:
            c = s.control
            row = [str(s.k), _fmt(c.u_f), _fmt(c.u_b), _fmt(c.u_pv), str(c.delta_f),
                   _fmt(c.display_chi_f), _fmt(c.chi_b), _fmt(s.w_pv), _fmt(s.demand),
                   _fmt(s.p_f), _fmt(s.p_b), _fmt(s.p_pv), _fmt(s.mu), _fmt(s.x_next),
                   _fmt(1e3 * s.wall_time) if timing else "", str(s.node_count),
                   ";".join(s.limit_events)]
            buf.write(",".join(row) + "\n")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass(frozen=True)
class Metrics:
    cumulative_pv_energy: float
    cumulative_fc_energy: float
    mean_solve_time: float
    max_solve_time: float
    switch_count: int
    constraint_violation_count: int
    steps: int = 0
    out_of_bounds_count: int = 0

    def to_dict(self, record_timing: bool = True) -> dict:
        d = dict(self.__dict__)
        if not record_timing:
            d["mean_solve_time"] = None
            d["max_solve_time"] = None
        return d


def metrics(log: SimLog) -> Metrics:
    if not log.steps:
        raise SimError("metrics need a nonempty log")
    dt = log.config.params.delta_t
    times = np.array([s.wall_time for s in log.steps])
    prev = log.config.delta_f_prev
    switches = 0
    for s in log.steps:
        switches += abs(s.control.delta_f - prev)
        prev = s.control.delta_f
    limit = sum(1 for s in log.steps for e in s.limit_events if e in LIMIT_EVENTS)
    oob = sum(1 for s in log.steps if OUT_OF_BOUNDS in s.limit_events)
    return Metrics(
        cumulative_pv_energy=dt * float(sum(s.p_pv for s in log.steps)),
        cumulative_fc_energy=dt * float(sum(s.p_f for s in log.steps)),
        mean_solve_time=float(times.mean()), max_solve_time=float(times.max()),
        switch_count=int(switches), constraint_violation_count=int(limit),
        steps=len(log.steps), out_of_bounds_count=int(oob))


def build_world(config: SimConfig) -> Tuple[TimeSeries, TimeSeries, int]:
    """PV and load series covering training history, the run and one horizon; start index."""
    J = config.params.horizon_j
    start = config.training_days * DAY_STEPS
    need = start + config.steps + J
    if config.pv_history is None:
        days = -(-need // DAY_STEPS)
        pv, load = synthetic_profiles(days, config.world_seed, pv_peak=config.params.p_pv_max)
    else:
        pv = load_history_csv(config.pv_history, config.base_kw, config.history_unit, "pv")
        load = load_history_csv(config.load_history, config.base_kw, config.history_unit, "load")
        if pv.start_time != load.start_time or pv.step != load.step:
            raise SimError("PV and load histories must share start time and step")
    if min(len(pv), len(load)) < need:
        raise SimError(f"histories cover {min(len(pv), len(load))} samples, the run needs {need}"
                       " (training days + duration + one horizon)")
    return pv, load, start


def _step_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(k)]).generate_state(1)[0])


def _fit_models(pv: TimeSeries, load: TimeSeries, start: int):
    model_pv = fit_seasonal_model(pv.slice(0, start), DAY_STEPS, 1, nonnegative_floor=True)
    model_load = fit_seasonal_model(load.slice(0, start), DAY_STEPS, 0)
    return model_pv, model_load


def forecast_scenarios(config: SimConfig, horizon: Optional[int] = None, k: int = 0):
    """Scenarios the closed loop would see at step ``k`` (default horizon: the MPC's).

    Returns ``(scenarios, timestamps)``; with ``horizon`` equal to the MPC
    horizon the result matches the bounds used by the run at step ``k``.
    """
    config.validate()
    horizon = config.params.horizon_j if horizon is None else int(horizon)
    pv, load, start = build_world(config)
    a = start + k
    if a + horizon > len(pv):
        raise SimError("requested forecast reaches past the available history")
    model_pv, model_load = _fit_models(pv, load, start)
    window = DAY_STEPS + 1
    scen = sample_scenarios(model_pv.condition(pv.values[a - window:a]),
                            model_load.condition(load.values[a - window:a]),
                            config.n_scenarios, horizon, _step_seed(config.forecast_seed, k),
                            pv_max=config.params.p_pv_max)
    return scen, [pv.time_at(a + h) for h in range(horizon)]


def _realize(config: SimConfig, bounds: ForecastBounds, truth: Tuple[float, float],
             k: int) -> Tuple[float, float]:
    policy = config.realization
    if policy == "truth_trace":
        return truth
    if policy == "uniform_in_bounds":
        rng = np.random.default_rng(np.random.SeedSequence([int(config.realization_seed), int(k)]))
        u = rng.random(2)
        pv = bounds.pv_low[0] + u[0] * (bounds.pv_high[0] - bounds.pv_low[0])
        dem = bounds.demand_low[0] + u[1] * (bounds.demand_high[0] - bounds.demand_low[0])
        return float(pv), float(dem)
    sigma = "high" if policy == "worst_case_high" else "low"
    pv, dem = bounds.scenario(sigma, config.pairing)
    return float(pv[0]), float(dem[0])


def run_closed_loop(config: SimConfig, progress=None) -> SimLog:
    """Receding-horizon loop; a step without a usable solution aborts the run."""
    config.validate()
    P = config.params
    J = P.horizon_j
    pv, load, start = build_world(config)
    model_pv, model_load = _fit_models(pv, load, start)
    window = DAY_STEPS + 1
    log = SimLog(config)
    state = PlantState(config.x0, config.delta_f_prev, 0)
    for k in range(config.steps):
        a = start + k
        scen = sample_scenarios(model_pv.condition(pv.values[a - window:a]),
                                model_load.condition(load.values[a - window:a]),
                                config.n_scenarios, J, _step_seed(config.forecast_seed, k),
                                pv_max=P.p_pv_max)
        bounds = bounds_from_scenarios(scen)
        # the true state goes to the MPC so tolerance-level drift is corrected, not accumulated
        x_now = float(np.clip(state.x, P.x_min - STATE_SLACK, P.x_max + STATE_SLACK))
        init = InitialConditions(x_now, state.delta_f_prev)
        t0 = time.perf_counter()
        _, sol = solve_mpc(P, bounds, init, config.mode, config.solver, config.pairing,
                           config.curtailment_reference)
        wall = time.perf_counter() - t0
        if not sol.has_point:
            log.aborted, log.abort_step = True, k
            log.abort_reason = f"solver returned {sol.status} at step {k}"
            break
        control = extract_control(sol, 0)
        w = _realize(config, bounds, (float(pv.values[a]), float(load.values[a])), k)
        step = plant_step(state, control, w, P, bounds, k)
        step = replace(step, wall_time=wall, node_count=sol.node_count, status=sol.status,
                       objective=sol.objective)
        log.steps.append(step)
        state = PlantState(step.x_next, control.delta_f, k + 1)
        if progress is not None:
            progress(step)
    return log


def metrics_json(m: Metrics, record_timing: bool = False) -> str:
    return json.dumps(m.to_dict(record_timing), indent=2, sort_keys=True) + "\n"


def _pct(num: float, den: float) -> Optional[float]:
    return None if den == 0 else 100.0 * num / den


def compare_report(adaptive: SimLog, fixed: SimLog, record_timing: bool = False) -> dict:
    """Paired metrics with relative differences and the published reference values."""
    ma, mf = metrics(adaptive), metrics(fixed)
    report = {
        "adaptive": ma.to_dict(record_timing),
        "fixed": mf.to_dict(record_timing),
        "pv_gain_pct": _pct(ma.cumulative_pv_energy - mf.cumulative_pv_energy,
                            mf.cumulative_pv_energy),
        "fc_reduction_pct": _pct(mf.cumulative_fc_energy - ma.cumulative_fc_energy,
                                 mf.cumulative_fc_energy),
        "solve_time_ratio": (ma.mean_solve_time / mf.mean_solve_time
                             if record_timing and mf.mean_solve_time > 0 else None),
        "reference": {"pv_gain_pct": REFERENCE_PV_GAIN_PCT,
                      "fc_reduction_pct": REFERENCE_FC_REDUCTION_PCT,
                      "note": "published values for measured data; qualitative comparison only"},
        "adaptive_pv_at_least_fixed": ma.cumulative_pv_energy >= mf.cumulative_pv_energy,
        "aborted": {"adaptive": adaptive.aborted, "fixed": fixed.aborted},
    }
    return report


def run_compare(config: SimConfig, progress=None) -> Tuple[SimLog, SimLog, dict]:
    """Adaptive and fixed (gains 0.5 clamped to the limits) runs with identical seeds."""
    P = config.params
    fixed_mode = GainMode(False, float(np.clip(0.5, P.chi_f_min, P.chi_f_max)),
                          float(np.clip(0.5, P.chi_b_min, P.chi_b_max)))
    log_a = run_closed_loop(replace(config, mode=ADAPTIVE), progress)
    log_f = run_closed_loop(replace(config, mode=fixed_mode), progress)
    return log_a, log_f, compare_report(log_a, log_f, config.record_timing)


__all__ = [
    "CSV_COLUMNS", "LIMIT_EVENTS", "Metrics", "OUT_OF_BOUNDS", "POLICIES", "PlantState",
    "REFERENCE_FC_REDUCTION_PCT", "REFERENCE_PV_GAIN_PCT", "RealizedStep", "SimConfig",
    "SimError", "SimLog", "build_world", "compare_report", "forecast_scenarios", "metrics", "metrics_json",
    "mpc_envelope", "plant_step", "run_closed_loop", "run_compare",
]
