import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from droopmpc.solver import LinearProgram, lp_solve


def test_single_lower_bound_row():
    lp = LinearProgram([1.0], [[1.0]], [3.0], [np.inf], [-10.0], [10.0])
    sol = lp_solve(lp)
    assert sol.ok
    assert sol.x[0] == pytest.approx(3.0, abs=1e-12)


def test_textbook_corner():
    lp = LinearProgram([-1.0, -1.0], [[1.0, 1.0]], [-np.inf], [1.0], [0.0, 0.0], [1.0, 1.0])
    sol = lp_solve(lp)
    assert sol.ok
    assert sol.objective == pytest.approx(-1.0, abs=1e-12)


def test_infeasible_status():
    lp = LinearProgram([1.0, 1.0], [[1.0, 1.0]], [3.0], [np.inf], [0.0, 0.0], [1.0, 1.0])
    assert lp_solve(lp).status == "infeasible"


def test_crossed_bounds_are_infeasible():
    lp = LinearProgram([1.0], np.zeros((0, 1)), [], [], [2.0], [1.0])
    assert lp_solve(lp).status == "infeasible"


def test_equality_rows():
    # min x + 2y + 3z  s.t. x + y + z = 1, x - y = 0
    A = [[1.0, 1.0, 1.0], [1.0, -1.0, 0.0]]
    lp = LinearProgram([1.0, 2.0, 3.0], A, [1.0, 0.0], [1.0, 0.0], [0, 0, 0], [1, 1, 1])
    sol = lp_solve(lp)
    assert sol.objective == pytest.approx(1.5, abs=1e-12)
    np.testing.assert_allclose(sol.x, [0.5, 0.5, 0.0], atol=1e-12)


def test_repeat_solve_identical():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(12, 9))
    lp = LinearProgram(rng.normal(size=9), A, np.full(12, -np.inf), np.abs(A).sum(1),
                       -np.ones(9), np.ones(9))
    a, b = lp_solve(lp), lp_solve(lp)
    assert a.status == b.status == "optimal"
    assert np.array_equal(a.x, b.x)


@st.composite
def random_lp(draw):
    m = draw(st.integers(1, 8))
    n = draw(st.integers(1, 8))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    A = np.round(rng.normal(size=(m, n)), 3)
    A[rng.random((m, n)) < 0.3] = 0.0
    lo = -rng.uniform(0, 3, n)
    hi = rng.uniform(0, 3, n)
    x0 = rng.uniform(lo, hi)  # a point inside the box keeps some instances feasible
    act = A @ x0
    slack = rng.uniform(-0.5, 1.5, (2, m))
    rl = np.where(rng.random(m) < 0.5, act - slack[0], -np.inf)
    ru = np.where(rng.random(m) < 0.7, act + slack[1], np.inf)
    eq = rng.random(m) < 0.15
    rl[eq] = ru[eq] = act[eq]
    c = np.round(rng.normal(size=n), 3)
    return LinearProgram(c, A, rl, ru, lo, hi)


def _scipy(lp):
    A = lp.A
    ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
    for i in range(A.shape[0]):
        lo, hi = lp.row_lower[i], lp.row_upper[i]
        if lo == hi:
            eq_rows.append(A[i]), eq_rhs.append(hi)
            continue
        if np.isfinite(hi):
            ub_rows.append(A[i]), ub_rhs.append(hi)
        if np.isfinite(lo):
            ub_rows.append(-A[i]), ub_rhs.append(-lo)
    kw = {}
    if ub_rows:
        kw.update(A_ub=np.array(ub_rows), b_ub=np.array(ub_rhs))
    if eq_rows:
        kw.update(A_eq=np.array(eq_rows), b_eq=np.array(eq_rhs))
    return linprog(lp.c, bounds=list(zip(lp.lower, lp.upper)), method="highs", **kw)


@settings(max_examples=150, deadline=None)
@given(random_lp())
def test_matches_highs(lp):
    ref = _scipy(lp)
    sol = lp_solve(lp)
    if ref.status == 2:
        assert sol.status == "infeasible"
        return
    assert ref.status == 0
    assert sol.ok
    assert sol.objective == pytest.approx(ref.fun, abs=1e-7, rel=1e-7)
    act = lp.A @ sol.x
    assert np.all(act >= lp.row_lower - 1e-8) and np.all(act <= lp.row_upper + 1e-8)
    assert np.all(sol.x >= lp.lower - 1e-9) and np.all(sol.x <= lp.upper + 1e-9)
