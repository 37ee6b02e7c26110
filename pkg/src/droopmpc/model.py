"""Minmax MPC problem for a standalone microgrid with droop-sharing units.

The grid has a fuel cell (FC) and a battery that both form the grid through
droop control, a curtailable PV unit and a load.  Uncertain inputs enter only
through their interval ends, so the problem carries two copies of every power
trajectory, one per extreme scenario ``"high"`` and ``"low"``, that share one
set of setpoints, on/off decisions and droop gains.

Load is handled as nonnegative demand throughout, so the power balance reads
``p_f + p_b + p_pv = demand``.
"""
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, Optional, Sequence

import numpy as np

from .solver.bnb import MiblpSolution, SolveOptions, solve
from .solver.problem import BINARY, MiblpProblem, ProblemError

SIGMAS = ("high", "low")
PAIRINGS = ("surplus", "componentwise")
CURTAILMENT_REFERENCES = ("available", "rating")
_MARGIN = 1.05


class ModelError(ValueError):
    """Inconsistent parameters, bounds or initial conditions."""


@dataclass(frozen=True)
class MgParams:
    """Unit limits, cost weights and MPC settings in per-unit.

    Defaults reproduce the case-study parameterization (10 kW base, 30 min
    sampling, six-step horizon).  Big-M constants left as ``None`` are derived
    from the box bounds with a 5 % margin.
    """

    p_pv_min: float = 0.0
    p_pv_max: float = 4.0
    p_b_min: float = -1.0
    p_b_max: float = 1.0
    p_f_min: float = 0.2
    p_f_max: float = 2.0
    x_min: float = 0.2
    x_max: float = 3.0
    chi_f_min: float = 0.314
    chi_f_max: float = 3.141
    chi_b_min: float = 0.314
    chi_b_max: float = 3.141
    mu_min: float = -0.314
    mu_max: float = 0.314
    delta_t: float = 0.5
    horizon_j: int = 6
    gamma: float = 0.2
    c_fru: float = 0.13
    c_fru_prime: float = 1.56
    c_fsw: float = 0.9
    c_pv_curt: float = 1.0
    c_b_loss: float = 0.1
    big_m_pv: Optional[float] = None
    small_m_pv: Optional[float] = None
    big_m_f: Optional[float] = None
    small_m_f: Optional[float] = None

    def __post_init__(self):
        pv_span = self.p_pv_max - self.p_pv_min
        f_span = (self.p_f_max - self.p_f_min) * self.chi_f_max
        if self.big_m_pv is None:
            object.__setattr__(self, "big_m_pv", _MARGIN * pv_span)
        if self.small_m_pv is None:
            object.__setattr__(self, "small_m_pv", -_MARGIN * pv_span)
        if self.big_m_f is None:
            object.__setattr__(self, "big_m_f", _MARGIN * max(self.mu_max, f_span))
        if self.small_m_f is None:
            object.__setattr__(self, "small_m_f", _MARGIN * min(self.mu_min, -f_span))

    def validate(self) -> "MgParams":
        errors = []
        for lo, hi in (("p_pv_min", "p_pv_max"), ("p_b_min", "p_b_max"), ("p_f_min", "p_f_max"),
                       ("x_min", "x_max"), ("chi_f_min", "chi_f_max"), ("chi_b_min", "chi_b_max"),
                       ("mu_min", "mu_max")):
            if getattr(self, lo) > getattr(self, hi):
                errors.append(f"{lo} > {hi}")
        if not self.p_b_min < 0 < self.p_b_max:
            errors.append("battery limits must straddle zero")
        if not 0 < self.p_f_min:
            errors.append("p_f_min must be positive")
        if self.p_pv_min < 0:
            errors.append("p_pv_min must be nonnegative")
        if not self.x_min > 0:
            errors.append("x_min must be positive")
        if not self.mu_min < 0 < self.mu_max:
            errors.append("frequency-offset limits must straddle zero")
        for name in ("chi_f_min", "chi_b_min", "c_fru", "c_fru_prime", "c_fsw", "c_pv_curt",
                     "c_b_loss", "delta_t"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be positive")
        if not 0 < self.gamma <= 1:
            errors.append("gamma must lie in (0, 1]")
        if int(self.horizon_j) != self.horizon_j or self.horizon_j < 1:
            errors.append("horizon_j must be a positive integer")
        pv_span = self.p_pv_max - self.p_pv_min
        f_span = (self.p_f_max - self.p_f_min) * self.chi_f_max
        if self.big_m_pv < pv_span or self.small_m_pv > -pv_span:
            errors.append("PV big-M constants too small for the PV range")
        if self.big_m_f < max(self.mu_max, f_span) or self.small_m_f > min(self.mu_min, -f_span):
            errors.append("FC big-M constants too small for the sharing range")
        if errors:
            raise ModelError("; ".join(errors))
        return self

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def with_(self, **changes) -> "MgParams":
        """Copy with changes; derived big-M constants are recomputed unless given."""
        base = self.to_dict()
        for key in ("big_m_pv", "small_m_pv", "big_m_f", "small_m_f"):
            if key not in changes:
                base[key] = None
        base.update(changes)
        return MgParams(**base)


@dataclass(frozen=True)
class GainMode:
    """Adaptive droop gains (decision variables) or fixed constants."""

    adaptive: bool = True
    chi_f: float = 0.5
    chi_b: float = 0.5

    @property
    def name(self) -> str:
        return "adaptive" if self.adaptive else "fixed"

    @classmethod
    def parse(cls, text: str, chi: float = 0.5) -> "GainMode":
        if text == "adaptive":
            return ADAPTIVE
        if text == "fixed":
            return cls(False, chi, chi)
        raise ModelError(f"unknown mode {text!r}")


ADAPTIVE = GainMode(True)
FIXED = GainMode(False, 0.5, 0.5)


@dataclass
class ForecastBounds:
    """Per-step intervals of available PV power and demand, pu."""

    pv_low: np.ndarray
    pv_high: np.ndarray
    demand_low: np.ndarray
    demand_high: np.ndarray

    def __post_init__(self):
        for name in ("pv_low", "pv_high", "demand_low", "demand_high"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        shapes = {a.shape for a in (self.pv_low, self.pv_high, self.demand_low, self.demand_high)}
        if len(shapes) != 1:
            raise ModelError("forecast bound arrays differ in length")
        if np.any(self.pv_low > self.pv_high) or np.any(self.demand_low > self.demand_high):
            raise ModelError("forecast bounds need low <= high")
        if np.any(self.pv_low < 0) or np.any(self.demand_low < 0):
            raise ModelError("forecast bounds must be nonnegative")
        if not all(np.all(np.isfinite(a)) for a in (self.pv_low, self.pv_high,
                                                     self.demand_low, self.demand_high)):
            raise ModelError("forecast bounds must be finite")

    def __len__(self):
        return self.pv_low.shape[0]

    @classmethod
    def constant(cls, horizon: int, pv: float, demand: float) -> "ForecastBounds":
        z = np.ones(horizon)
        return cls(pv * z, pv * z, demand * z, demand * z)

    def scenario(self, sigma: str, pairing: str = "surplus"):
        """``(pv, demand)`` arrays of one extreme scenario."""
        if sigma not in SIGMAS or pairing not in PAIRINGS:
            raise ModelError(f"unknown scenario {sigma!r} / pairing {pairing!r}")
        pv = self.pv_high if sigma == "high" else self.pv_low
        if pairing == "surplus":
            demand = self.demand_low if sigma == "high" else self.demand_high
        else:
            demand = self.demand_high if sigma == "high" else self.demand_low
        return pv, demand

    def slice(self, start: int, stop: int) -> "ForecastBounds":
        return ForecastBounds(self.pv_low[start:stop], self.pv_high[start:stop],
                              self.demand_low[start:stop], self.demand_high[start:stop])

    def contains(self, pv: float, demand: float, step: int = 0, tol: float = 1e-12) -> bool:
        return (self.pv_low[step] - tol <= pv <= self.pv_high[step] + tol
                and self.demand_low[step] - tol <= demand <= self.demand_high[step] + tol)


# a measured state may sit this far outside the storage box (solver feasibility
# tolerance carried over from the previous step); the MPC then plans the recovery
STATE_SLACK = 1e-6


@dataclass(frozen=True)
class InitialConditions:
    x0: float = 0.3
    delta_f_prev: int = 1

    def validate(self, params: MgParams) -> "InitialConditions":
        if not params.x_min - STATE_SLACK <= self.x0 <= params.x_max + STATE_SLACK:
            raise ModelError(f"x0 = {self.x0} outside [{params.x_min}, {params.x_max}]")
        if self.delta_f_prev not in (0, 1):
            raise ModelError("delta_f_prev must be 0 or 1")
        return self


@dataclass(frozen=True)
class ControlInput:
    """Setpoints, FC status and droop gains applied for one sampling interval."""

    u_f: float
    u_b: float
    u_pv: float
    delta_f: int
    chi_f: float
    chi_b: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.u_f, self.u_b, self.u_pv, self.delta_f, self.chi_f, self.chi_b])

    @property
    def display_chi_f(self) -> float:
        """FC gain as logged: zero while the FC is off."""
        return self.chi_f if self.delta_f else 0.0


@dataclass
class ScenarioVars:
    """Per-scenario trajectories of one MPC solution."""

    p_f: Dict[str, np.ndarray]
    p_b: Dict[str, np.ndarray]
    p_pv: Dict[str, np.ndarray]
    delta_pv: Dict[str, np.ndarray]
    mu: Dict[str, np.ndarray]
    x: Dict[str, np.ndarray]
    t: np.ndarray = field(default_factory=lambda: np.zeros(0))


def var_name(kind: str, j: int, sigma: Optional[str] = None) -> str:
    return f"{kind}[{j}]" if sigma is None else f"{kind}[{sigma},{j}]"


def build_mpc_problem(params: MgParams, bounds: ForecastBounds, init: InitialConditions,
                      mode: GainMode = ADAPTIVE, pairing: str = "surplus",
                      curtailment_reference: str = "available",
                      tighten: bool = True) -> MiblpProblem:
    """Assemble the minmax MPC as a mixed-integer bilinear program.

    Variables per step ``j``: setpoints ``u_f, u_b, u_pv``, FC status
    ``delta_f``, gains ``chi_f, chi_b`` (fixed boxes in fixed mode), switching
    indicator ``s_sw`` and worst-case stage cost ``t``.  Per step and scenario:
    unit powers, curtailment branch ``delta_pv``, frequency offset ``mu``,
    storage energy, cost epigraphs and (adaptive mode) the power deviations and
    FC sharing product that carry the bilinear links.

    ``tighten`` adds redundant rows on the difference between the two
    scenarios, which leave the feasible set unchanged but give much tighter
    relaxations (see ``_scenario_difference_rows``).
    """
    params.validate()
    init.validate(params)
    if pairing not in PAIRINGS:
        raise ModelError(f"unknown pairing {pairing!r}")
    if curtailment_reference not in CURTAILMENT_REFERENCES:
        raise ModelError(f"unknown curtailment reference {curtailment_reference!r}")
    J = int(params.horizon_j)
    if len(bounds) != J:
        raise ModelError(f"forecast bounds cover {len(bounds)} steps, horizon is {J}")
    if np.any(bounds.pv_low < params.p_pv_min):
        raise ModelError("available PV below the PV lower limit makes the box empty")
    if not mode.adaptive:
        if not (params.chi_f_min <= mode.chi_f <= params.chi_f_max
                and params.chi_b_min <= mode.chi_b <= params.chi_b_max):
            raise ModelError("fixed gains outside the gain limits")

    P = params
    prob = MiblpProblem()
    V = prob.add_var
    C = prob.add_constraint

    pb_abs = max(-P.p_b_min, P.p_b_max)
    pv_ref_max = P.p_pv_max - P.p_pv_min
    mu_abs = max(-P.mu_min, P.mu_max)
    e_b_max = min(P.p_b_max - P.p_b_min, mu_abs / P.chi_b_min)
    e_f_max = min(P.p_f_max, mu_abs / P.chi_f_min)
    l_b_max = P.c_b_loss * pb_abs ** 2
    t_max = P.c_fru + P.c_fru_prime * P.p_f_max + P.c_fsw + l_b_max
    x_idx = {}
    for s in SIGMAS:
        x_idx[s, 0] = V(var_name("x", 0, s), init.x0, init.x0)

    objective = {}
    prev_delta = None
    for j in range(J):
        u_f = V(var_name("u_f", j), 0.0, P.p_f_max)
        u_b = V(var_name("u_b", j), P.p_b_min, P.p_b_max)
        u_pv = V(var_name("u_pv", j), P.p_pv_min, P.p_pv_max)
        d_f = V(var_name("delta_f", j), 0, 1, BINARY)
        if mode.adaptive:
            chi_f = V(var_name("chi_f", j), P.chi_f_min, P.chi_f_max)
            chi_b = V(var_name("chi_b", j), P.chi_b_min, P.chi_b_max)
        else:
            chi_f = V(var_name("chi_f", j), mode.chi_f, mode.chi_f)
            chi_b = V(var_name("chi_b", j), mode.chi_b, mode.chi_b)
        s_sw = V(var_name("s_sw", j), 0.0, 1.0)
        pv_cap = []
        for s in SIGMAS:
            w_pv, _ = bounds.scenario(s, pairing)
            pv_cap.append(min(P.p_pv_max, float(w_pv[j])))
        ref_span = pv_ref_max if curtailment_reference == "rating" else max(pv_cap) - P.p_pv_min
        l_pv_max = P.c_pv_curt * max(ref_span, P.p_pv_max - P.p_pv_min) ** 2
        t = V(var_name("t", j), 0.0, t_max + l_pv_max)
        prob.epigraph_vars.append(t)
        objective[t] = P.gamma ** (j + 1)

        # FC setpoint limits and on/off switching |delta(j) - delta(j-1)|
        C({u_f: 1.0, d_f: -P.p_f_min}, ">=", 0.0, f"fc_u_min[{j}]")
        C({u_f: 1.0, d_f: -P.p_f_max}, "<=", 0.0, f"fc_u_max[{j}]")
        if prev_delta is None:
            C({s_sw: 1.0, d_f: -1.0}, ">=", -init.delta_f_prev, f"sw_up[{j}]")
            C({s_sw: 1.0, d_f: 1.0}, ">=", init.delta_f_prev, f"sw_down[{j}]")
        else:
            C({s_sw: 1.0, d_f: -1.0, prev_delta: 1.0}, ">=", 0.0, f"sw_up[{j}]")
            C({s_sw: 1.0, d_f: 1.0, prev_delta: -1.0}, ">=", 0.0, f"sw_down[{j}]")
        prev_delta = d_f

        for s in SIGMAS:
            w_pv_arr, dem_arr = bounds.scenario(s, pairing)
            w_pv = float(w_pv_arr[j])
            dem = float(dem_arr[j])
            tag = f"[{s},{j}]"
            p_f = V(var_name("p_f", j, s), 0.0, P.p_f_max)
            p_b = V(var_name("p_b", j, s), P.p_b_min, P.p_b_max)
            p_pv = V(var_name("p_pv", j, s), P.p_pv_min, min(P.p_pv_max, w_pv))
            d_pv = V(var_name("delta_pv", j, s), 0, 1, BINARY)
            mu = V(var_name("mu", j, s), P.mu_min, P.mu_max)
            x_next = V(var_name("x", j + 1, s), P.x_min, P.x_max)
            x_idx[s, j + 1] = x_next

            # curtailment p_pv = min(u_pv, w_pv) through two big-M pairs
            C({p_pv: 1.0, u_pv: -1.0, d_pv: P.big_m_pv}, ">=", 0.0, "pv_set_lo" + tag)
            C({p_pv: 1.0, u_pv: -1.0}, "<=", 0.0, "pv_set_hi" + tag)
            C({p_pv: 1.0, d_pv: P.small_m_pv}, ">=", w_pv + P.small_m_pv, "pv_avail_lo" + tag)
            # storage dynamics, FC power limits, balance
            C({x_next: 1.0, x_idx[s, j]: -1.0, p_b: P.delta_t}, "=", 0.0, "storage" + tag)
            C({p_f: 1.0, d_f: -P.p_f_min}, ">=", 0.0, "fc_p_min" + tag)
            C({p_f: 1.0, d_f: -P.p_f_max}, "<=", 0.0, "fc_p_max" + tag)
            C({p_f: 1.0, p_b: 1.0, p_pv: 1.0}, "=", dem, "balance" + tag)

            # droop sharing
            if mode.adaptive:
                e_b = V(var_name("e_b", j, s), -e_b_max, e_b_max)
                e_f = V(var_name("e_f", j, s), -e_f_max, e_f_max)
                q_f = V(var_name("q_f", j, s), P.mu_min, P.mu_max)
                C({e_b: 1.0, p_b: -1.0, u_b: 1.0}, "=", 0.0, "dev_b" + tag)
                C({e_f: 1.0, p_f: -1.0, u_f: 1.0}, "=", 0.0, "dev_f" + tag)
                prob.add_link(mu, e_b, chi_b)
                prob.add_link(q_f, e_f, chi_f)
                share = {q_f: 1.0}
            else:
                C({p_b: mode.chi_b, u_b: -mode.chi_b, mu: -1.0}, "=", 0.0, "share_b" + tag)
                share = {p_f: mode.chi_f, u_f: -mode.chi_f}
            C({**share, d_f: -P.big_m_f}, "<=", 0.0, "share_f_a" + tag)
            C({**share, d_f: -P.small_m_f}, ">=", 0.0, "share_f_b" + tag)
            C({**share, mu: -1.0, d_f: -P.small_m_f}, "<=", -P.small_m_f, "share_f_c" + tag)
            C({**share, mu: -1.0, d_f: -P.big_m_f}, ">=", -P.big_m_f, "share_f_d" + tag)

            # stage cost of this scenario under the worst-case epigraph t
            l_b = V(var_name("l_b", j, s), 0.0, l_b_max)
            ref = w_pv if curtailment_reference == "available" else P.p_pv_max
            l_pv = V(var_name("l_pv", j, s), 0.0, P.c_pv_curt * max(ref - P.p_pv_min, 0.0) ** 2)
            prob.add_quad(P.c_b_loss, {p_b: 1.0}, 0.0, l_b)
            prob.add_quad(P.c_pv_curt, {p_pv: -1.0}, ref, l_pv)
            C({t: 1.0, d_f: -P.c_fru, p_f: -P.c_fru_prime, s_sw: -P.c_fsw, l_b: -1.0, l_pv: -1.0},
              ">=", 0.0, "epigraph" + tag)

        if tighten:
            _scenario_difference_rows(prob, P, bounds, pairing, j, chi_f, chi_b, pv_cap,
                                      mode.adaptive, e_b_max, e_f_max)

    # branch on early steps first: their stage costs carry the largest weights
    for var in prob.variables:
        var.priority = P.gamma ** (_step_of(var.name) + 1)
    prob.set_objective(objective)
    prob.meta.update(params=params, bounds=bounds, init=init, mode=mode, pairing=pairing,
                     curtailment_reference=curtailment_reference, horizon=J)
    return prob


def _step_of(name: str) -> int:
    """Horizon step a variable belongs to (``x[s,j+1]`` ends step ``j``)."""
    j = int(name.rstrip("]").split(",")[-1].split("[")[-1])
    return max(j - 1, 0) if name.startswith("x[") else j


def _scenario_difference_rows(prob, P, bounds, pairing, j, chi_f, chi_b, pv_cap, adaptive,
                              e_b_max, e_f_max):
    """Valid rows on ``high - low`` differences of one step.

    Both scenarios share the setpoints and gains, so the differences obey
    ``dmu = chi_b * de_b`` and ``dq_f = chi_f * de_f`` with ``de`` bounded by
    the forecast spread instead of the full unit range.  Since
    ``p_pv = min(u_pv, w)`` is monotone with unit slope in ``w``, the PV
    difference lies in ``[0, w_high - w_low]``.
    """
    V = prob.add_var
    C = prob.add_constraint
    hi, lo = SIGMAS
    idx = prob.index
    dem = {s: float(bounds.scenario(s, pairing)[1][j]) for s in SIGMAS}
    spread = pv_cap[0] - pv_cap[1]
    d_pv = V(var_name("d_pv", j), min(0.0, spread), max(0.0, spread))
    C({d_pv: 1.0, idx(var_name("p_pv", j, hi)): -1.0, idx(var_name("p_pv", j, lo)): 1.0},
      "=", 0.0, f"diff_pv[{j}]")
    if not adaptive:
        return
    mu_span = P.mu_max - P.mu_min
    d_mu = V(var_name("d_mu", j), -mu_span, mu_span)
    d_q = V(var_name("d_q", j), -mu_span, mu_span)
    d_eb = V(var_name("d_eb", j), -2.0 * e_b_max, 2.0 * e_b_max)
    d_ef = V(var_name("d_ef", j), -2.0 * e_f_max, 2.0 * e_f_max)
    for diff, kind in ((d_mu, "mu"), (d_q, "q_f"), (d_eb, "e_b"), (d_ef, "e_f")):
        C({diff: 1.0, idx(var_name(kind, j, hi)): -1.0, idx(var_name(kind, j, lo)): 1.0},
          "=", 0.0, f"diff_{kind}[{j}]")
    C({d_ef: 1.0, d_eb: 1.0, d_pv: 1.0}, "=", dem[hi] - dem[lo], f"diff_balance[{j}]")
    # FC on: q_f equals mu in both scenarios, so d_q = d_mu; FC off: d_q = 0
    d_f = idx(var_name("delta_f", j))
    C({d_q: 1.0, d_mu: -1.0, d_f: mu_span}, "<=", mu_span, f"diff_share_a[{j}]")
    C({d_q: 1.0, d_mu: -1.0, d_f: -mu_span}, ">=", -mu_span, f"diff_share_b[{j}]")
    C({d_q: 1.0, d_f: -mu_span}, "<=", 0.0, f"diff_share_c[{j}]")
    C({d_q: 1.0, d_f: mu_span}, ">=", 0.0, f"diff_share_d[{j}]")
    prob.add_link(d_mu, d_eb, chi_b)
    prob.add_link(d_q, d_ef, chi_f)


def horizon_of(names: Sequence[str]) -> int:
    return sum(1 for nm in names if nm.startswith("delta_f["))


def extract_control(solution: MiblpSolution, step: int = 0) -> ControlInput:
    """Control input ``v(k + step | k)`` of a solved MPC problem."""
    J = horizon_of(solution.names)
    if not 0 <= step < J:
        raise IndexError(f"step {step} outside horizon {J}")
    if not solution.has_point:
        raise ModelError(f"solution has no point (status {solution.status})")
    g = solution.__getitem__
    delta = int(round(g(var_name("delta_f", step))))
    u_f = g(var_name("u_f", step)) if delta else 0.0
    return ControlInput(u_f=u_f, u_b=g(var_name("u_b", step)), u_pv=g(var_name("u_pv", step)),
                        delta_f=delta, chi_f=g(var_name("chi_f", step)),
                        chi_b=g(var_name("chi_b", step)))


def scenario_vars(solution: MiblpSolution) -> ScenarioVars:
    J = horizon_of(solution.names)
    g = solution.__getitem__

    def traj(kind, steps=range(J)):
        return {s: np.array([g(var_name(kind, j, s)) for j in steps]) for s in SIGMAS}

    return ScenarioVars(p_f=traj("p_f"), p_b=traj("p_b"), p_pv=traj("p_pv"),
                        delta_pv=traj("delta_pv"), mu=traj("mu"), x=traj("x", range(J + 1)),
                        t=np.array([g(var_name("t", j)) for j in range(J)]))


def solve_mpc(params: MgParams, bounds: ForecastBounds, init: InitialConditions,
              mode: GainMode = ADAPTIVE, opts: Optional[SolveOptions] = None,
              pairing: str = "surplus", curtailment_reference: str = "available",
              seed_fixed: bool = True, tighten: bool = True):
    """Build and solve one MPC step; returns ``(problem, solution)``.

    In adaptive mode the solve is seeded with the fixed-gain optimum (gains at
    0.5 clamped into their limits).  That point is feasible for the adaptive
    problem, so the adaptive objective can never end up above the fixed one even
    when the search stops at a node limit.
    """
    problem = build_mpc_problem(params, bounds, init, mode, pairing, curtailment_reference,
                                tighten)
    start = None
    if mode.adaptive and seed_fixed:
        fixed = GainMode(False, float(np.clip(0.5, params.chi_f_min, params.chi_f_max)),
                         float(np.clip(0.5, params.chi_b_min, params.chi_b_max)))
        fprob = build_mpc_problem(params, bounds, init, fixed, pairing, curtailment_reference,
                                  tighten)
        fsol = solve(fprob, opts)
        if fsol.has_point:
            start = fsol.as_dict()
    return problem, solve(problem, opts, start=start)


def validate_mpc_solution(problem: MiblpProblem, solution: MiblpSolution, tol: float = 1e-7):
    """Violation report of a solved MPC problem (thin wrapper kept next to the builder)."""
    from .solver.problem import validate_solution

    if solution.values.shape != (problem.n_vars,):
        raise ProblemError("solution does not match the problem dimensions")
    return validate_solution(problem, solution.values, tol)


__all__ = [
    "ADAPTIVE", "FIXED", "ControlInput", "ForecastBounds", "GainMode", "InitialConditions",
    "MgParams", "ModelError", "SIGMAS", "STATE_SLACK", "ScenarioVars", "build_mpc_problem",
    "extract_control", "scenario_vars", "solve_mpc", "validate_mpc_solution", "var_name",
]
