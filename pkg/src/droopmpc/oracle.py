"""Brute-force grid oracle for small MPC instances.

The oracle never touches the relaxation machinery.  It enumerates the FC
status and a uniform grid over every continuous control of every step, derives
all dependent quantities in closed form from the droop-sharing steady state,
checks the limits and evaluates the exact cost.  The best feasible grid point
is a feasible point of the MPC problem, so its objective is an upper bound on
the true optimum: a correct solver must never report anything worse.

``resolution`` is the number of grid intervals per control, i.e. every control
takes ``resolution + 1`` values.  Grids of resolution ``r`` and ``2 r`` nest,
which makes the oracle objective non-increasing along doubling sweeps.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ._accel import njit
from .model import SIGMAS, ControlInput, MgParams, var_name
from .solver.problem import MiblpProblem

_FEAS_TOL = 1e-10

# layout of the packed parameter vector handed to the kernels
_P_FIELDS = ("p_pv_min", "p_pv_max", "p_b_min", "p_b_max", "p_f_min", "p_f_max", "mu_min",
             "mu_max", "c_fru", "c_fru_prime", "c_b_loss", "c_pv_curt", "x_min", "x_max",
             "delta_t", "c_fsw")


class OracleError(RuntimeError):
    """No feasible grid point (the problem itself may still be feasible)."""


@dataclass
class OracleResult:
    objective: float
    values: np.ndarray
    controls: List[ControlInput]
    resolution: int
    evaluated: int
    feasible: int
    names: List[str] = field(default_factory=list, repr=False)

    def as_dict(self) -> Dict[str, float]:
        return {k: float(v) for k, v in zip(self.names, self.values)}


@njit
def _unit_response(delta, uf, ub, upv, cf, cb, wpv, dem, P):
    """Closed-form droop steady state of one scenario; returns (p_f, p_b, p_pv, mu)."""
    p_pv = min(upv, wpv)
    r = dem - uf * delta - ub - p_pv
    if delta == 1:
        mu = r / (1.0 / cf + 1.0 / cb)
        return uf + mu / cf, ub + mu / cb, p_pv, mu
    return 0.0, ub + r, p_pv, r * cb


@njit
def _stage(delta, uf, ub, upv, cf, cb, wpv, dem, ref, P):
    """Feasibility, per-scenario stage cost (no switching term) and battery power of one step."""
    c0 = 0.0
    c1 = 0.0
    b0 = 0.0
    b1 = 0.0
    for s in range(2):
        p_f, p_b, p_pv, mu = _unit_response(delta, uf, ub, upv, cf, cb, wpv[s], dem[s], P)
        if delta == 1 and (p_f < P[4] - _FEAS_TOL or p_f > P[5] + _FEAS_TOL):
            return False, 0.0, 0.0, 0.0, 0.0
        if p_b < P[2] - _FEAS_TOL or p_b > P[3] + _FEAS_TOL:
            return False, 0.0, 0.0, 0.0, 0.0
        if mu < P[6] - _FEAS_TOL or mu > P[7] + _FEAS_TOL:
            return False, 0.0, 0.0, 0.0, 0.0
        cost = P[8] * delta + P[9] * p_f + P[10] * p_b * p_b + P[11] * (ref[s] - p_pv) ** 2
        if s == 0:
            c0 = cost
            b0 = p_b
        else:
            c1 = cost
            b1 = p_b
    return True, c0, c1, b0, b1


@njit
def _pv_levels(g_pv, wmax):
    """Grid values of u_pv that lead to distinct curtailed power.

    ``p_pv = min(u_pv, w)``, so all values at or above the largest available
    power behave alike; only the first of them is kept.
    """
    keep = np.zeros(g_pv.shape[0], dtype=np.bool_)
    seen_top = False
    for i in range(g_pv.shape[0]):
        if g_pv[i] < wmax:
            keep[i] = True
        elif not seen_top:
            keep[i] = True
            seen_top = True
    return np.flatnonzero(keep)


@njit
def _collect(g_f, g_b, g_pv, g_cf, g_cb, wpv, dem, ref, P, fill, idx, base, pbs):
    """Feasible points of a last step, ignoring the storage box.

    Runs twice: with ``fill`` false it only counts, so the output arrays can be
    sized exactly; with ``fill`` true it writes rows ``(delta, i_f, i_b, i_pv,
    i_cf, i_cb)``, the worst-case stage cost and the battery power per scenario.
    Returns ``(count, evaluated)``.
    """
    levels = _pv_levels(g_pv, max(wpv[0], wpv[1]))
    n = 0
    evaluated = 0
    for delta in range(2):
        nf = g_f.shape[0] if delta == 1 else 1
        ncf = g_cf.shape[0] if delta == 1 else 1
        for i_f in range(nf):
            uf = g_f[i_f] if delta == 1 else 0.0
            for i_cf in range(ncf):
                for i_cb in range(g_cb.shape[0]):
                    for lv in range(levels.shape[0]):
                        i_pv = levels[lv]
                        for i_b in range(g_b.shape[0]):
                            evaluated += 1
                            ok, c0, c1, b0, b1 = _stage(delta, uf, g_b[i_b], g_pv[i_pv],
                                                        g_cf[i_cf], g_cb[i_cb], wpv, dem, ref, P)
                            if not ok:
                                continue
                            if fill:
                                idx[n, 0] = delta
                                idx[n, 1] = i_f
                                idx[n, 2] = i_b
                                idx[n, 3] = i_pv
                                idx[n, 4] = i_cf
                                idx[n, 5] = i_cb
                                base[n] = max(c0, c1)
                                pbs[n, 0] = b0
                                pbs[n, 1] = b1
                            n += 1
    return n, evaluated


@njit
def _tail_best(x1, delta0, t_base, t_delta, t_pb, P, limit):
    """Cheapest tail point reachable from the storage state ``x1`` (-1 if none)."""
    best = np.inf
    arg = -1
    for k in range(t_base.shape[0]):
        if t_base[k] >= best or t_base[k] >= limit:
            break
        c = t_base[k] + P[15] * abs(t_delta[k] - delta0)
        if c >= best:
            continue
        ok = True
        for s in range(2):
            xn = x1[s] - P[14] * t_pb[k, s]
            if xn < P[12] - _FEAS_TOL or xn > P[13] + _FEAS_TOL:
                ok = False
                break
        if ok:
            best = c
            arg = k
    return best, arg


@njit
def _search(g_f, g_b, g_pv, g_cf, g_cb, wpv, dem, ref, P, x0, dprev, g1, g2,
            has_tail, t_base, t_delta, t_pb):
    """Best first-step point, optionally paired with the best reachable tail point."""
    levels = _pv_levels(g_pv, max(wpv[0], wpv[1]))
    best = np.inf
    best_idx = np.full(6, -1, dtype=np.int64)
    best_tail = -1
    evaluated = 0
    feasible = 0
    tail_floor = np.inf
    if has_tail:
        for k in range(t_base.shape[0]):
            tail_floor = min(tail_floor, t_base[k])
    else:
        tail_floor = 0.0
    x1 = np.zeros(2)
    for delta in range(2):
        nf = g_f.shape[0] if delta == 1 else 1
        ncf = g_cf.shape[0] if delta == 1 else 1
        sw = P[15] * abs(delta - dprev)
        for i_f in range(nf):
            uf = g_f[i_f] if delta == 1 else 0.0
            for i_cf in range(ncf):
                for i_cb in range(g_cb.shape[0]):
                    for lv in range(levels.shape[0]):
                        i_pv = levels[lv]
                        for i_b in range(g_b.shape[0]):
                            evaluated += 1
                            ok, c0, c1, b0, b1 = _stage(delta, uf, g_b[i_b], g_pv[i_pv],
                                                        g_cf[i_cf], g_cb[i_cb], wpv, dem, ref, P)
                            if not ok:
                                continue
                            x1[0] = x0 - P[14] * b0
                            x1[1] = x0 - P[14] * b1
                            if min(x1[0], x1[1]) < P[12] - _FEAS_TOL or \
                                    max(x1[0], x1[1]) > P[13] + _FEAS_TOL:
                                continue
                            head = g1 * (max(c0, c1) + sw)
                            if head + g2 * tail_floor >= best:
                                feasible += 1
                                continue
                            tail = -1
                            total = head
                            if has_tail:
                                limit = (best - head) / g2
                                tcost, tail = _tail_best(x1, delta, t_base, t_delta, t_pb, P,
                                                         limit)
                                if tail < 0:
                                    continue
                                total = head + g2 * tcost
                            feasible += 1
                            if total < best:
                                best = total
                                best_idx[0] = delta
                                best_idx[1] = i_f
                                best_idx[2] = i_b
                                best_idx[3] = i_pv
                                best_idx[4] = i_cf
                                best_idx[5] = i_cb
                                best_tail = tail
    return best, best_idx, best_tail, evaluated, feasible


def _grid(lo: float, hi: float, resolution: int) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, resolution + 1)


def grid_oracle(problem: MiblpProblem, resolution: int = 32,
                controls: Optional[List[str]] = None) -> OracleResult:
    """Best feasible point on a uniform control grid of a problem from ``build_mpc_problem``.

    ``controls`` may restrict the enumeration to a subset of the per-step
    control kinds (``u_f``, ``u_b``, ``u_pv``, ``chi_f``, ``chi_b``); controls
    left out stay at their lower limit.  Intended for horizons of one or two
    steps; longer horizons raise ``ValueError``.
    """
    meta = problem.meta
    if "params" not in meta:
        raise ValueError("grid_oracle needs a problem built by build_mpc_problem")
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    params: MgParams = meta["params"]
    bounds = meta["bounds"]
    init = meta["init"]
    mode = meta["mode"]
    J = int(meta["horizon"])
    if J > 2:
        raise ValueError("the grid oracle supports horizons of at most two steps")
    kinds = {"u_f", "u_b", "u_pv", "chi_f", "chi_b"}
    chosen = set(kinds if controls is None else controls)
    if not chosen <= kinds:
        raise ValueError(f"unknown controls {sorted(chosen - kinds)}")

    P = np.array([getattr(params, f) for f in _P_FIELDS], dtype=float)
    res = int(resolution)

    def grid(kind, lo, hi):
        return _grid(lo, hi, res) if kind in chosen else np.array([lo])

    g_f = grid("u_f", params.p_f_min, params.p_f_max)
    g_b = grid("u_b", params.p_b_min, params.p_b_max)
    g_pv = grid("u_pv", params.p_pv_min, params.p_pv_max)
    if mode.adaptive:
        g_cf = grid("chi_f", params.chi_f_min, params.chi_f_max)
        g_cb = grid("chi_b", params.chi_b_min, params.chi_b_max)
    else:
        g_cf = np.array([mode.chi_f])
        g_cb = np.array([mode.chi_b])

    steps = []
    for j in range(J):
        wpv = np.empty(2)
        dem = np.empty(2)
        ref = np.empty(2)
        for s, sigma in enumerate(SIGMAS):
            w_arr, d_arr = bounds.scenario(sigma, meta["pairing"])
            wpv[s] = min(params.p_pv_max, float(w_arr[j]))
            dem[s] = float(d_arr[j])
            ref[s] = float(w_arr[j]) if meta["curtailment_reference"] == "available" \
                else params.p_pv_max
        steps.append((wpv, dem, ref))

    grids = (g_f, g_b, g_pv, g_cf, g_cb)
    g1 = params.gamma
    g2 = params.gamma ** 2
    if J == 2:
        count, tail_eval = _collect(*grids, *steps[1], P, False, np.zeros((0, 6), np.int32),
                                    np.zeros(0), np.zeros((0, 2)))
        t_idx = np.zeros((count, 6), np.int32)
        t_base = np.zeros(count)
        t_pb = np.zeros((count, 2))
        _collect(*grids, *steps[1], P, True, t_idx, t_base, t_pb)
        order = np.argsort(t_base, kind="stable")
        t_idx, t_base, t_pb = t_idx[order], t_base[order], t_pb[order]
        t_delta = t_idx[:, 0].astype(np.int64)
        best, idx0, tail, evaluated, feasible = _search(
            *grids, *steps[0], P, float(init.x0), int(init.delta_f_prev), g1, g2, True,
            t_base, t_delta, np.ascontiguousarray(t_pb))
        evaluated += tail_eval
        picks = [idx0, t_idx[tail] if tail >= 0 else None]
    else:
        empty = np.zeros(0)
        best, idx0, tail, evaluated, feasible = _search(
            *grids, *steps[0], P, float(init.x0), int(init.delta_f_prev), g1, g2, False,
            empty, np.zeros(0, dtype=np.int64), np.zeros((0, 2)))
        picks = [idx0]
    if not np.isfinite(best) or any(p is None or p[0] < 0 for p in picks):
        raise OracleError(f"no feasible point on the resolution-{res} grid")

    controls_out = []
    for pick in picks:
        delta = int(pick[0])
        controls_out.append(ControlInput(
            u_f=float(g_f[pick[1]]) if delta else 0.0, u_b=float(g_b[pick[2]]),
            u_pv=float(g_pv[pick[3]]), delta_f=delta, chi_f=float(g_cf[pick[4]]),
            chi_b=float(g_cb[pick[5]])))
    values = assemble_point(problem, controls_out)
    return OracleResult(float(problem.objective_value(values)), values, controls_out, res,
                        int(evaluated), int(feasible), problem.names())


def assemble_point(problem: MiblpProblem, controls: List[ControlInput]) -> np.ndarray:
    """Full variable assignment generated by applying ``controls`` step by step.

    Every dependent variable follows in closed form: curtailed PV, droop
    sharing, storage, deviations and products of the links, switching
    indicator, cost atoms and the worst-case epigraph.
    """
    meta = problem.meta
    params: MgParams = meta["params"]
    bounds = meta["bounds"]
    init = meta["init"]
    mode = meta["mode"]
    P = np.array([getattr(params, f) for f in _P_FIELDS], dtype=float)
    vals = np.zeros(problem.n_vars)
    names = set(problem.names())

    def put(name, v):
        if name in names:
            vals[problem.index(name)] = v

    x = {s: float(init.x0) for s in SIGMAS}
    for s in SIGMAS:
        put(var_name("x", 0, s), x[s])
    prev = int(init.delta_f_prev)
    for j, u in enumerate(controls):
        delta = int(u.delta_f)
        put(var_name("u_f", j), u.u_f)
        put(var_name("u_b", j), u.u_b)
        put(var_name("u_pv", j), u.u_pv)
        put(var_name("delta_f", j), delta)
        put(var_name("chi_f", j), u.chi_f)
        put(var_name("chi_b", j), u.chi_b)
        sw = abs(delta - prev)
        put(var_name("s_sw", j), sw)
        worst = 0.0
        per = {}
        for s in SIGMAS:
            w_arr, d_arr = bounds.scenario(s, meta["pairing"])
            w = min(params.p_pv_max, float(w_arr[j]))
            ref = float(w_arr[j]) if meta["curtailment_reference"] == "available" \
                else params.p_pv_max
            p_f, p_b, p_pv, mu = _unit_response(delta, u.u_f, u.u_b, u.u_pv, u.chi_f, u.chi_b,
                                                w, float(d_arr[j]), P)
            x[s] = x[s] - params.delta_t * p_b
            l_b = params.c_b_loss * p_b ** 2
            l_pv = params.c_pv_curt * (ref - p_pv) ** 2
            put(var_name("p_f", j, s), p_f)
            put(var_name("p_b", j, s), p_b)
            put(var_name("p_pv", j, s), p_pv)
            put(var_name("delta_pv", j, s), 1.0 if u.u_pv >= w else 0.0)
            put(var_name("mu", j, s), mu)
            put(var_name("x", j + 1, s), x[s])
            put(var_name("l_b", j, s), l_b)
            put(var_name("l_pv", j, s), l_pv)
            if mode.adaptive:
                e_f = p_f - u.u_f
                put(var_name("e_b", j, s), p_b - u.u_b)
                put(var_name("e_f", j, s), e_f)
                put(var_name("q_f", j, s), e_f * u.chi_f)
            per[s] = {"pv": p_pv, "mu": mu, "eb": p_b - u.u_b, "ef": p_f - u.u_f,
                      "q": (p_f - u.u_f) * u.chi_f}
            stage = params.c_fru * delta + params.c_fru_prime * p_f + params.c_fsw * sw + l_b + l_pv
            worst = max(worst, stage)
        put(var_name("t", j), worst)
        hi, lo = SIGMAS
        for kind, key in (("d_pv", "pv"), ("d_mu", "mu"), ("d_eb", "eb"), ("d_ef", "ef"),
                          ("d_q", "q")):
            put(var_name(kind, j), per[hi][key] - per[lo][key])
        prev = delta
    return vals


__all__ = ["OracleError", "OracleResult", "assemble_point", "grid_oracle"]
