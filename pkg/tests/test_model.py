import numpy as np
import pytest

from droopmpc.model import (ADAPTIVE, FIXED, ForecastBounds, GainMode, InitialConditions,
                            MgParams, ModelError, build_mpc_problem, extract_control,
                            scenario_vars, solve_mpc, var_name)
from droopmpc.oracle import grid_oracle
from droopmpc.solver import validate_solution

from conftest import random_instance


def test_defaults_are_the_case_study_parameters():
    P = MgParams()
    assert (P.p_b_min, P.p_b_max) == (-1.0, 1.0)
    assert (P.p_f_min, P.p_f_max) == (0.2, 2.0)
    assert (P.p_pv_min, P.p_pv_max) == (0.0, 4.0)
    assert (P.mu_min, P.mu_max) == (-0.314, 0.314)
    assert (P.chi_f_min, P.chi_f_max) == (0.314, 3.141)
    assert (P.chi_b_min, P.chi_b_max) == (0.314, 3.141)
    assert (P.x_min, P.x_max) == (0.2, 3.0)
    assert (P.c_pv_curt, P.c_b_loss) == (1.0, 0.1)
    assert (P.c_fru, P.c_fru_prime) == (0.13, 1.56)
    assert (P.c_fsw, P.gamma) == (0.9, 0.2)
    assert (P.horizon_j, P.delta_t) == (6, 0.5)
    init = InitialConditions()
    assert (init.delta_f_prev, init.x0) == (1, 0.3)


def test_big_m_derivation_satisfies_invariants():
    P = MgParams().validate()
    assert P.big_m_pv >= P.p_pv_max - P.p_pv_min
    assert P.small_m_pv <= -(P.p_pv_max - P.p_pv_min)
    span = (P.p_f_max - P.p_f_min) * P.chi_f_max
    assert P.big_m_f >= max(P.mu_max, span)
    assert P.small_m_f <= min(P.mu_min, -span)
    with pytest.raises(ModelError):
        MgParams(big_m_pv=1.0).validate()


@pytest.mark.parametrize("change", [dict(gamma=1.5), dict(gamma=0.0), dict(p_b_min=0.5),
                                    dict(x_min=4.0), dict(chi_f_min=-0.1), dict(horizon_j=0),
                                    dict(mu_max=-0.1)])
def test_invalid_parameters(change):
    with pytest.raises(ModelError):
        MgParams().with_(**change).validate()


def _count(prob, prefix):
    return sum(1 for v in prob.variables if v.name.startswith(prefix) and v.kind == "binary")


def test_six_step_adaptive_structure():
    rng = np.random.default_rng(0)
    P, b, init = random_instance(rng, 6)
    prob = build_mpc_problem(P, b, init, ADAPTIVE)
    assert _count(prob, "delta_f[") == 6
    assert _count(prob, "delta_pv[") == 12
    assert len(prob.binaries()) == 18
    names = prob.names()
    sharing = [ln for ln in prob.links if names[ln.product].startswith(("mu[", "q_f["))]
    assert len(sharing) == 24
    # the redundant scenario-difference rows add two links per step on top
    assert len(prob.links) == 24 + 12
    assert len(build_mpc_problem(P, b, init, ADAPTIVE, tighten=False).links) == 24
    assert len(build_mpc_problem(P, b, init, FIXED).links) == 0


def test_zero_pv_forces_zero_pv_power():
    P = MgParams().with_(horizon_j=1)
    bounds = ForecastBounds.constant(1, 0.0, 0.5)
    init = InitialConditions(0.3, 1)
    prob, sol = solve_mpc(P, bounds, init, FIXED)
    for s in ("high", "low"):
        assert prob.variables[prob.index(var_name("p_pv", 0, s))].upper == 0.0
        assert sol[var_name("p_pv", 0, s)] == 0.0


def test_table_parameters_two_steps_oracle_solvable():
    rng = np.random.default_rng(4)
    P, b, init = random_instance(rng, 2)
    prob = build_mpc_problem(P, b, init, ADAPTIVE)
    orc = grid_oracle(prob, 8)
    assert np.isfinite(orc.objective)
    assert validate_solution(prob, orc.values).max_violation <= 1e-9


def test_input_errors():
    P = MgParams().with_(horizon_j=2)
    with pytest.raises(ModelError):
        build_mpc_problem(P, ForecastBounds.constant(3, 1.0, 1.0), InitialConditions())
    with pytest.raises(ModelError):
        build_mpc_problem(P, ForecastBounds.constant(2, 1.0, 1.0), InitialConditions(x0=5.0))
    with pytest.raises(ModelError):
        build_mpc_problem(P, ForecastBounds.constant(2, 1.0, 1.0), InitialConditions(),
                          GainMode(False, 0.1, 0.5))
    with pytest.raises(ModelError):
        ForecastBounds([1.0], [0.5], [1.0], [1.0])
    with pytest.raises(ModelError):
        ForecastBounds([0.0], [0.5], [-1.0], [1.0])
    with pytest.raises(ModelError):
        GainMode.parse("sometimes")


@pytest.fixture(scope="module")
def solved():
    rng = np.random.default_rng(11)
    out = []
    for J, mode in ((1, ADAPTIVE), (2, ADAPTIVE), (2, FIXED), (3, FIXED)):
        P, b, init = random_instance(rng, J)
        prob, sol = solve_mpc(P, b, init, mode)
        out.append((P, b, init, mode, prob, sol))
    return out


def test_extract_control(solved):
    for P, b, init, mode, prob, sol in solved:
        c = extract_control(sol, 0)
        np.testing.assert_array_equal(
            c.as_vector()[[1, 2, 4, 5]],
            [sol["u_b[0]"], sol["u_pv[0]"], sol["chi_f[0]"], sol["chi_b[0]"]])
        if not mode.adaptive:
            assert c.chi_f == c.chi_b == 0.5
        if c.delta_f == 0:
            assert c.u_f == 0.0 and c.display_chi_f == 0.0
        with pytest.raises(IndexError):
            extract_control(sol, P.horizon_j)


def test_curtailment_is_a_minimum(solved):
    for P, b, init, mode, prob, sol in solved:
        for j in range(P.horizon_j):
            for s in ("high", "low"):
                w = b.scenario(s)[0][j]
                assert sol[var_name("p_pv", j, s)] == pytest.approx(
                    min(sol[var_name("u_pv", j)], w), abs=1e-7)


def test_storage_telescopes(solved):
    for P, b, init, mode, prob, sol in solved:
        sv = scenario_vars(sol)
        for s in ("high", "low"):
            assert sv.x[s][0] == init.x0
            assert sv.x[s][-1] == pytest.approx(init.x0 - P.delta_t * sv.p_b[s].sum(), abs=1e-9)


def test_switching_indicator_is_exact(solved):
    for P, b, init, mode, prob, sol in solved:
        prev = init.delta_f_prev
        for j in range(P.horizon_j):
            d = round(sol[var_name("delta_f", j)])
            assert sol[var_name("s_sw", j)] == pytest.approx(abs(d - prev), abs=1e-9)
            prev = d


def test_sharing_rows_hold(solved):
    for P, b, init, mode, prob, sol in solved:
        for j in range(P.horizon_j):
            c = extract_control(sol, j)
            for s in ("high", "low"):
                mu = sol[var_name("mu", j, s)]
                assert (sol[var_name("p_b", j, s)] - c.u_b) * c.chi_b == pytest.approx(mu, abs=1e-6)
                if c.delta_f:
                    dev = sol[var_name("p_f", j, s)] - c.u_f
                    assert dev * c.chi_f == pytest.approx(mu, abs=1e-6)


def test_fixed_feasible_set_nests_in_adaptive(rng):
    for J in (1, 2):
        P, b, init = random_instance(rng, J)
        _, fx = solve_mpc(P, b, init, FIXED)
        prob = build_mpc_problem(P, b, init, ADAPTIVE)
        # the fixed optimum completed with the auxiliary adaptive variables is feasible
        point = np.zeros(prob.n_vars)
        names = prob.names()
        vals = fx.as_dict()
        for k, nm in enumerate(names):
            if nm in vals:
                point[k] = vals[nm]
        for j in range(J):
            for s in ("high", "low"):
                e_b = vals[var_name("p_b", j, s)] - vals[var_name("u_b", j)]
                e_f = vals[var_name("p_f", j, s)] - vals[var_name("u_f", j)]
                point[prob.index(var_name("e_b", j, s))] = e_b
                point[prob.index(var_name("e_f", j, s))] = e_f
                point[prob.index(var_name("q_f", j, s))] = 0.5 * e_f
            for kind, sub in (("d_mu", "mu"), ("d_q", "q_f"), ("d_eb", "e_b"), ("d_ef", "e_f")):
                point[prob.index(var_name(kind, j))] = (
                    point[prob.index(var_name(sub, j, "high"))]
                    - point[prob.index(var_name(sub, j, "low"))])
        assert validate_solution(prob, point).max_violation <= 1e-7
        assert prob.objective_value(point) == pytest.approx(fx.objective, abs=1e-12)
