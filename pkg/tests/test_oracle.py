import itertools

import numpy as np
import pytest

from droopmpc.model import (ADAPTIVE, FIXED, ForecastBounds, InitialConditions, MgParams,
                            build_mpc_problem, solve_mpc)
from droopmpc.oracle import OracleError, assemble_point, grid_oracle
from droopmpc.solver import MiblpProblem, validate_solution

from conftest import random_instance


def brute_force_one_step(P, bounds, init, mode, resolution):
    """Plain-loop enumeration written straight from the model equations."""
    def grid(lo, hi):
        return np.linspace(lo, hi, resolution + 1)

    chis = (itertools.product(grid(P.chi_f_min, P.chi_f_max), grid(P.chi_b_min, P.chi_b_max))
            if mode.adaptive else [(mode.chi_f, mode.chi_b)])
    best = np.inf
    for (cf, cb), delta, u_f, u_b, u_pv in itertools.product(
            list(chis), (0, 1), grid(P.p_f_min, P.p_f_max), grid(P.p_b_min, P.p_b_max),
            grid(P.p_pv_min, P.p_pv_max)):
        worst = -np.inf
        for sigma in ("high", "low"):
            w_arr, d_arr = bounds.scenario(sigma)
            w, d = w_arr[0], d_arr[0]
            p_pv = min(u_pv, w)
            r = d - delta * u_f - u_b - p_pv
            if delta:
                mu = r / (1 / cf + 1 / cb)
                p_f = u_f + mu / cf
            else:
                mu, p_f = r * cb, 0.0
            p_b = u_b + mu / cb
            x1 = init.x0 - P.delta_t * p_b
            ok = (P.mu_min <= mu <= P.mu_max and P.p_b_min <= p_b <= P.p_b_max
                  and P.x_min <= x1 <= P.x_max
                  and (not delta or P.p_f_min <= p_f <= P.p_f_max))
            if not ok:
                worst = np.inf
                break
            cost = (P.c_fru * delta + P.c_fru_prime * p_f + P.c_fsw * abs(delta - init.delta_f_prev)
                    + P.c_b_loss * p_b ** 2 + P.c_pv_curt * (w - p_pv) ** 2)
            worst = max(worst, cost)
        best = min(best, P.gamma * worst)
    return best


@pytest.mark.parametrize("mode", [FIXED, ADAPTIVE])
def test_matches_plain_enumeration(mode):
    rng = np.random.default_rng(21)
    for _ in range(3):
        P, b, init = random_instance(rng, 1)
        prob = build_mpc_problem(P, b, init, mode)
        ref = brute_force_one_step(P, b, init, mode, 4)
        assert grid_oracle(prob, 4).objective == pytest.approx(ref, rel=1e-12, abs=1e-14)


def test_idle_microgrid_costs_nothing():
    P = MgParams().with_(horizon_j=1)
    prob = build_mpc_problem(P, ForecastBounds.constant(1, 0.0, 0.0), InitialConditions(1.0, 0),
                             FIXED)
    orc = grid_oracle(prob, 8)
    assert orc.objective == 0.0
    assert orc.controls[0].delta_f == 0


@pytest.mark.parametrize("mode", [FIXED, ADAPTIVE])
def test_one_sided_bound_one_step(mode, rng):
    P, b, init = random_instance(rng, 1)
    prob, sol = solve_mpc(P, b, init, mode)
    orc = grid_oracle(prob, 32)
    assert sol.objective <= orc.objective + 1e-6 * (1 + abs(sol.objective))


@pytest.mark.parametrize("mode, sweep", [(FIXED, (2, 4, 8, 16, 32, 64)), (ADAPTIVE, (2, 4, 8, 16))])
def test_refinement_never_hurts(mode, sweep, rng):
    P, b, init = random_instance(rng, 1)
    prob = build_mpc_problem(P, b, init, mode)
    objs = [grid_oracle(prob, r).objective for r in sweep]
    assert all(b <= a for a, b in zip(objs, objs[1:]))


def test_grid_point_is_feasible(rng):
    for J, mode in ((1, ADAPTIVE), (2, FIXED), (2, ADAPTIVE)):
        P, b, init = random_instance(rng, J)
        prob = build_mpc_problem(P, b, init, mode)
        orc = grid_oracle(prob, 6)
        assert validate_solution(prob, orc.values).max_violation <= 1e-9
        assert np.array_equal(assemble_point(prob, orc.controls), orc.values)


def test_empty_grid_is_not_problem_infeasibility():
    P = MgParams().with_(horizon_j=1)
    bounds = ForecastBounds.constant(1, 0.0, 0.5)
    init = InitialConditions(0.2, 1)  # empty battery: the FC has to cover the load
    prob = build_mpc_problem(P, bounds, init, FIXED)
    with pytest.raises(OracleError):
        grid_oracle(prob, 1)
    _, sol = solve_mpc(P, bounds, init, FIXED)
    assert sol.status == "optimal"


def test_rejects_long_horizons_and_foreign_problems(rng):
    P, b, init = random_instance(rng, 3)
    with pytest.raises(ValueError):
        grid_oracle(build_mpc_problem(P, b, init, FIXED))
    with pytest.raises(ValueError):
        grid_oracle(MiblpProblem())
