import numpy as np
import pytest

from droopmpc.model import ADAPTIVE, FIXED, build_mpc_problem
from droopmpc.solver import (BINARY, MiblpProblem, ProblemError, dumps_problem, loads_problem,
                             validate_solution)
from droopmpc.solver.problem import problem_signature

from conftest import random_instance


def small_problem():
    p = MiblpProblem()
    x = p.add_var("x", -1.0, 2.0)
    y = p.add_var("y", 0.1, 3.0, priority=0.25)
    b = p.add_var("b", 0, 1, BINARY)
    q = p.add_var("q", -3.0, 6.0)
    e = p.add_var("e", 0.0, 100.0)
    p.add_constraint({x: 1.0, y: 1.0 / 3.0, b: -0.7}, "<=", 1.1, "r0")
    p.add_constraint({x: 1.0, q: -2.0}, "=", 0.0)
    p.add_link(q, x, y)
    p.add_quad(0.3, {x: 1.0, y: -1.0}, 0.1, e)
    p.epigraph_vars.append(e)
    p.set_objective({e: 1.0, b: 0.2}, 0.5)
    return p


def test_text_round_trip_small():
    p = small_problem()
    text = dumps_problem(p)
    q = loads_problem(text)
    assert problem_signature(q) == problem_signature(p)
    assert dumps_problem(q) == text


@pytest.mark.parametrize("mode", [ADAPTIVE, FIXED])
def test_text_round_trip_mpc(mode, rng):
    P, b, init = random_instance(rng, 3)
    p = build_mpc_problem(P, b, init, mode)
    q = loads_problem(dumps_problem(p))
    assert problem_signature(q) == problem_signature(p)


def test_round_trip_is_bit_exact_for_awkward_floats():
    p = MiblpProblem()
    v = p.add_var("v", 0.1 + 0.2, 1.0 / 3.0 + 1e-300)
    p.add_constraint({v: np.nextafter(1.0, 2.0)}, ">=", 5e-324)
    p.set_objective({v: -1e308})
    q = loads_problem(dumps_problem(p))
    assert q.variables[0].lower == 0.1 + 0.2
    assert q.constraints[0].coefs[0] == np.nextafter(1.0, 2.0)
    assert q.constraints[0].rhs == 5e-324


@pytest.mark.parametrize("text", [
    "VARS\nx continuous 0 1\nLIN\nr0 <= 1 y:1\nEND\n",
    "x continuous 0 1\n",
    "VARS\nx continuous zero 1\n",
    "VARS\nx wobbly 0 1\n",
])
def test_malformed_text_rejected(text):
    with pytest.raises(ProblemError):
        loads_problem(text)


def test_structural_errors():
    p = MiblpProblem()
    p.add_var("x", 0, 1)
    with pytest.raises(ProblemError):
        p.add_var("x", 0, 1)
    with pytest.raises(ProblemError):
        p.add_constraint({3: 1.0}, "<=", 0.0)
    with pytest.raises(ProblemError):
        p.add_quad(-1.0, {0: 1.0}, 0.0, 0)
    with pytest.raises(ProblemError):
        p.add_constraint({0: 1.0}, "<>", 0.0)


def test_validate_reports_each_category():
    p = small_problem()
    x = np.array([1.0, 2.0, 0.0, 0.5, 0.3 * 0.9 ** 2])  # q != x*y, row 0 violated
    rep = validate_solution(p, x)
    assert rep.bilinear == pytest.approx(1.5)
    assert rep.linear == pytest.approx(1.0 + 2.0 / 3.0 - 1.1)
    assert rep.quadratic == pytest.approx(0.0, abs=1e-15)
    x2 = x.copy()
    x2[2] = 0.4
    assert validate_solution(p, x2).integrality == pytest.approx(0.4)


def test_validate_bound_violation_on_storage(rng):
    P, b, init = random_instance(rng, 2)
    p = build_mpc_problem(P, b, init, FIXED)
    vals = np.clip(np.zeros(p.n_vars), p.compiled().lower, p.compiled().upper)
    k = p.index("x[high,1]")
    vals[k] = P.x_max + 0.1
    rep = validate_solution(p, vals)
    assert rep.bounds == pytest.approx(0.1)
    assert rep.worst_bound == "x[high,1]"
