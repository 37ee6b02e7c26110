"""Spatial branch and bound for :class:`~droopmpc.solver.problem.MiblpProblem`.

Every node solves an LP relaxation made of the problem rows, McCormick
envelopes of all links over the node box and the global pool of tangent cuts
for the quadratic atoms.  Nodes are explored best-bound first; equal bounds go
to the most recently created node, which keeps the order deterministic and
dives instead of sweeping a plateau breadth-first.

Binaries are branched first (most fractional, scaled by the variable
priority).  Once they are integral the link with the largest priority-scaled
residual is split: if its gain factor is one-signed while the other factor
straddles zero, that factor is cut at zero (the envelope of a sign-fixed
product is much tighter); otherwise the gain factor is split at the relaxation
value clamped to the middle 80% of its interval.

Incumbents come from a fix-and-solve heuristic: with binaries and one factor
of every link fixed the problem is an LP, so the resulting point satisfies the
links to LP precision.  Its quadratic epigraph values are then set exactly
before the objective is recorded.  A diving heuristic and an optional start
point help to find a first incumbent early.
"""
import heapq
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .lp import LinearProgram, LpSolution, WarmStart, lp_solve
from .problem import MiblpProblem, ProblemError, max_bilinear_residual, validate_solution
from .relax import csr_from_dense, expression_range, mccormick_rows, propagate_bounds, tangent_row

_INT_TOL = 1e-6
_CUT_VIOLATION = 1e-9
_KELLEY_ROUNDS = 30
_ALTERNATIONS = 4
_HEURISTIC_EVERY = 16
_ZERO_SPLIT = 1e-6
_DIVE_EVERY = 25
_MAX_DIVES = 8


@dataclass
class SolveOptions:
    abs_gap: float = 1e-7
    rel_gap: float = 1e-6
    bilinear_tol: float = 1e-6
    max_nodes: int = 100_000
    max_time: float = 600.0
    tangent_points: int = 9
    worker_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if min(self.abs_gap, self.rel_gap, self.bilinear_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.worker_count < 1:
            raise ValueError("worker_count must be at least 1")
        if self.tangent_points < 1:
            raise ValueError("need at least one initial tangent point")


@dataclass
class MiblpSolution:
    values: np.ndarray
    objective: float
    status: str
    node_count: int
    wall_time: float
    bound: float = -np.inf
    gap: float = np.inf
    names: List[str] = field(default_factory=list, repr=False)
    # tangent points per quad atom of the final cut pool (not part of the text form)
    cut_points: List[List[float]] = field(default_factory=list, repr=False)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> Dict[str, float]:
        return {k: float(v) for k, v in zip(self.names, self.values)}

    @property
    def has_point(self) -> bool:
        return self.status in ("optimal", "feasible", "node_limit", "time_limit") and \
            np.all(np.isfinite(self.values))


def dumps_solution(sol: MiblpSolution, timing: bool = True) -> str:
    """Line-oriented text form: header fields, then one ``name value`` line per variable.

    With ``timing`` false the wall time is left out, so the text only depends
    on the problem and the options.
    """
    lines = ["SOLUTION", f"status {sol.status}", f"objective {float(sol.objective)!r}",
             f"bound {float(sol.bound)!r}", f"gap {float(sol.gap)!r}", f"nodes {sol.node_count}"]
    if timing:
        lines.append(f"wall_time {float(sol.wall_time)!r}")
    lines.append("VALUES")
    lines += [f"{name} {float(v)!r}" for name, v in zip(sol.names, sol.values)]
    lines.append("END")
    return "\n".join(lines) + "\n"


def loads_solution(text: str) -> MiblpSolution:
    head: Dict[str, str] = {}
    names: List[str] = []
    vals: List[float] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line in ("SOLUTION", "VALUES", "END"):
            section = line
            continue
        tok = line.split()
        if len(tok) != 2 or section not in ("SOLUTION", "VALUES"):
            raise ProblemError(f"line {lineno}: malformed solution line {line!r}")
        if section == "SOLUTION":
            head[tok[0]] = tok[1]
        else:
            try:
                vals.append(float(tok[1]))
            except ValueError:
                raise ProblemError(f"line {lineno}: bad number {tok[1]!r}") from None
            names.append(tok[0])
    try:
        return MiblpSolution(np.array(vals), float(head["objective"]), head["status"],
                             int(head.get("nodes", 0)), float(head.get("wall_time", 0.0)),
                             float(head.get("bound", "-inf")), float(head.get("gap", "inf")),
                             names)
    except KeyError as exc:
        raise ProblemError(f"solution text lacks field {exc}") from None


@dataclass
class _NodeResult:
    feasible: bool
    lo: np.ndarray
    hi: np.ndarray
    sol: Optional[LpSolution]
    version: int


class _Search:
    def __init__(self, problem: MiblpProblem, opts: SolveOptions):
        problem.check()
        self.problem = problem
        self.opts = opts
        cp = problem.compiled()
        self.cp = cp
        self.n = problem.n_vars
        self.csr = csr_from_dense(cp.A)
        self.binary = cp.binary
        self.bin_idx = np.flatnonzero(cp.binary)
        self.branch_b = np.unique(cp.link_b)
        self.branch_a = np.unique(cp.link_a)
        epi = set(int(e) for e in cp.quad_epi) | set(problem.epigraph_vars)
        self.epi_idx = np.array(sorted(epi), dtype=np.int64)
        self.pool_rows: List[np.ndarray] = []
        self.pool_rhs: List[float] = []
        self.pool_points: List[List[float]] = [[] for _ in problem.quad_atoms]
        self.pool_version = 0
        self.incumbent: Optional[np.ndarray] = None
        self.incumbent_obj = np.inf
        self.nodes = 0
        self.counter = 0
        self.tried_patterns = set()
        self.dives = 0
        self.name_set = set(problem.names())

    # -- LP plumbing ------------------------------------------------------------
    def _lp(self, lo, hi, links=True, pool=True, relax_rows=0.0):
        cp = self.cp
        blocks = [cp.A]
        rls = [cp.row_lower - relax_rows]
        rus = [cp.row_upper + relax_rows]
        if links and cp.link_p.size:
            A, rl, ru = mccormick_rows(self.n, cp.link_p, cp.link_a, cp.link_b, lo, hi)
            blocks.append(A)
            rls.append(rl)
            rus.append(ru)
        if pool and self.pool_rows:
            blocks.append(np.array(self.pool_rows))
            rls.append(np.array(self.pool_rhs))
            rus.append(np.full(len(self.pool_rhs), np.inf))
        return LinearProgram(cp.c, np.vstack(blocks), np.concatenate(rls), np.concatenate(rus),
                             lo, hi)

    def _tighten(self, lo, hi):
        cp = self.cp
        lo = lo.copy()
        hi = hi.copy()
        ok = propagate_bounds(self.csr[0], self.csr[1], self.csr[2], cp.row_lower, cp.row_upper,
                              lo, hi, self.binary, cp.link_p, cp.link_a, cp.link_b, 8)
        return ok and bool(np.all(lo <= hi)), lo, hi

    def evaluate(self, lo, hi, warm) -> _NodeResult:
        """Side-effect free node solve against the current cut pool."""
        version = self.pool_version
        ok, lo, hi = self._tighten(lo, hi)
        if not ok:
            return _NodeResult(False, lo, hi, None, version)
        sol = lp_solve(self._lp(lo, hi), warm)
        return _NodeResult(sol.ok, lo, hi, sol, version)

    # -- tangent cuts -------------------------------------------------------------
    def _add_cut(self, k: int, z: float) -> bool:
        pts = self.pool_points[k]
        if any(abs(z - p) <= 1e-9 * (1.0 + abs(z)) for p in pts):
            return False
        cp = self.cp
        row, rhs = tangent_row(self.n, cp.quad_weight[k], cp.quad_G[k], cp.quad_const[k],
                               cp.quad_epi[k], z)
        self.pool_rows.append(row)
        self.pool_rhs.append(rhs)
        pts.append(float(z))
        self.pool_version += 1
        return True

    def initial_cuts(self, lo, hi):
        cp = self.cp
        for k in range(len(self.problem.quad_atoms)):
            emin, emax = expression_range(cp.quad_G[k], cp.quad_const[k], lo, hi)
            for z in np.linspace(emin, emax, self.opts.tangent_points):
                self._add_cut(k, float(z))

    def _separate(self, x) -> bool:
        cp = self.cp
        if not cp.quad_epi.size:
            return False
        expr = cp.quad_G @ x + cp.quad_const
        viol = cp.quad_weight * expr * expr - x[cp.quad_epi]
        added = False
        for k in np.flatnonzero(viol > _CUT_VIOLATION):
            added |= self._add_cut(int(k), float(expr[k]))
        return added

    def kelley(self, lo, hi, warm, sol=None) -> Optional[LpSolution]:
        """Re-solve with freshly separated tangent cuts until the atoms are tight."""
        if sol is None:
            sol = lp_solve(self._lp(lo, hi), warm)
        for _ in range(_KELLEY_ROUNDS):
            if not sol.ok or not self._separate(sol.x):
                break
            sol = lp_solve(self._lp(lo, hi), sol.warm)
        return sol

    # -- primal heuristic ----------------------------------------------------------
    def _fix(self, lo, hi, x, idx):
        v = np.clip(x[idx], lo[idx], hi[idx])
        lo[idx] = v
        hi[idx] = v

    def dive(self, lo, hi, sol: LpSolution):
        """Fix binaries one at a time (least fractional first) down to an integral LP."""
        lo, hi = lo.copy(), hi.copy()
        for _ in range(self.bin_idx.size + 1):
            if not sol.ok:
                return None
            xb = sol.x[self.bin_idx]
            frac = np.abs(xb - np.round(xb))
            open_ = (hi[self.bin_idx] - lo[self.bin_idx]) > 0.5
            if not np.any(open_ & (frac > _INT_TOL)):
                sol = self.kelley(lo, hi, sol.warm, sol)
                if not sol.ok:
                    return None
                if self.integral(sol.x):
                    return self.heuristic(lo, hi, sol)
            cand = np.flatnonzero(open_)
            k = int(cand[np.argmin(frac[cand])])
            j = int(self.bin_idx[k])
            nxt = None
            for v in (np.round(xb[k]), 1.0 - np.round(xb[k])):
                lo2, hi2 = lo.copy(), hi.copy()
                lo2[j] = hi2[j] = v
                ok, lo2, hi2 = self._tighten(lo2, hi2)
                if not ok:
                    continue
                trial = lp_solve(self._lp(lo2, hi2), sol.warm)
                if trial.ok:
                    nxt = (lo2, hi2, trial)
                    break
            if nxt is None:
                return None
            lo, hi, sol = nxt
        return None

    def consistent_factors(self, x, lo, hi):
        """Least-squares value of every b-factor given the relaxation's a and q.

        For a factor shared by several links ``q_k = a_k * b`` the value
        ``sum(a_k q_k) / sum(a_k^2)`` best reproduces the relaxed products, which is
        a far better fixing point than the envelope's arbitrary ``b``.
        """
        cp = self.cp
        out = x.copy()
        num = np.zeros(self.n)
        den = np.zeros(self.n)
        np.add.at(num, cp.link_b, x[cp.link_a] * x[cp.link_p])
        np.add.at(den, cp.link_b, x[cp.link_a] ** 2)
        b = self.branch_b
        ok = den[b] > 1e-12
        out[b[ok]] = np.clip(num[b[ok]] / den[b[ok]], lo[b[ok]], hi[b[ok]])
        return out

    def heuristic(self, lo, hi, sol: LpSolution):
        x = sol.x
        if self.branch_b.size:
            x = self.consistent_factors(x, lo, hi)
        lo_b = lo.copy()
        hi_b = hi.copy()
        self._fix(lo_b, hi_b, np.round(x), self.bin_idx)
        best = None
        fix_sets = [self.branch_b, self.branch_a] if self.branch_b.size else [self.branch_b]
        warm = sol.warm
        for step in range(1 + (_ALTERNATIONS if self.branch_b.size else 0)):
            lo2, hi2 = lo_b.copy(), hi_b.copy()
            self._fix(lo2, hi2, x, fix_sets[step % len(fix_sets)])
            ok, lo2, hi2 = self._tighten(lo2, hi2)
            if not ok:
                break
            cand = self.kelley(lo2, hi2, warm)
            if cand is None or not cand.ok:
                break
            warm = cand.warm
            if best is not None and cand.objective > best.objective - 1e-10:
                break
            best = cand
            x = cand.x
        if best is None:
            return None
        return self.repair(best.x)

    def repair(self, x):
        """Fix everything but the epigraph variables, lift atoms to exact values."""
        cp = self.cp
        lo = np.clip(x, cp.lower, cp.upper)
        hi = lo.copy()
        lo[self.epi_idx] = cp.lower[self.epi_idx]
        hi[self.epi_idx] = cp.upper[self.epi_idx]
        if cp.quad_epi.size:
            expr = cp.quad_G @ lo + cp.quad_const
            exact = cp.quad_weight * expr * expr
            lo[cp.quad_epi] = np.maximum(lo[cp.quad_epi], exact)
            if np.any(lo > hi):
                return None
        sol = lp_solve(self._lp(lo, hi, links=False, pool=False, relax_rows=1e-8))
        if not sol.ok:
            return None
        rep = validate_solution(self.problem, sol.x)
        if rep.bounds > 1e-9 or rep.linear > 1e-7 or rep.integrality > 1e-9 or \
                rep.bilinear > self.opts.bilinear_tol or rep.quadratic > 1e-9:
            return None
        return sol.x, self.problem.objective_value(sol.x)

    def complete(self, start: Dict[int, float]):
        """Turn a (partial) assignment into a feasible point, or None.

        Given values are fixed, the remaining variables and all epigraphs are
        filled in by an LP over the envelopes, which are exact whenever one factor
        of each link is among the fixed values.
        """
        cp = self.cp
        lo, hi = cp.lower.copy(), cp.upper.copy()
        epi = set(self.epi_idx.tolist())
        for j, v in start.items():
            if j not in epi:
                lo[j] = hi[j] = float(np.clip(v, cp.lower[j], cp.upper[j]))
        ok, lo, hi = self._tighten(lo, hi)
        if not ok:
            return None
        sol = self.kelley(lo, hi, None)
        if sol is None or not sol.ok:
            return None
        return self.repair(sol.x)

    def offer(self, cand) -> bool:
        if cand is None:
            return False
        x, obj = cand
        if obj < self.incumbent_obj - 1e-12:
            self.incumbent = x
            self.incumbent_obj = obj
            # incumbent tangent cuts refine the outer approximation where it matters
            cp = self.cp
            if cp.quad_epi.size:
                expr = cp.quad_G @ x + cp.quad_const
                for k in range(expr.shape[0]):
                    self._add_cut(k, float(expr[k]))
            return True
        return False

    # -- branching -------------------------------------------------------------------
    def integral(self, x) -> bool:
        if not self.bin_idx.size:
            return True
        xb = x[self.bin_idx]
        return bool(np.all(np.abs(xb - np.round(xb)) <= _INT_TOL))

    def gap_tol(self) -> float:
        if not np.isfinite(self.incumbent_obj):
            return 0.0
        return max(self.opts.abs_gap, self.opts.rel_gap * abs(self.incumbent_obj))

    def choose_branch(self, lo, hi, x) -> Optional[Tuple[int, float]]:
        """Return ``(variable, split)``; binaries split at 0.5."""
        cp = self.cp
        if self.bin_idx.size:
            frac = np.abs(x[self.bin_idx] - np.round(x[self.bin_idx]))
            if frac.max() > _INT_TOL:
                score = np.where(frac > _INT_TOL, frac * cp.priority[self.bin_idx], -1.0)
                # argmax returns the first maximum, i.e. the smallest index on ties
                return int(self.bin_idx[int(np.argmax(score))]), 0.5
        if not cp.link_p.size:
            return None
        res = np.abs(x[cp.link_p] - x[cp.link_a] * x[cp.link_b])
        if res.max() <= self.opts.bilinear_tol:
            return None
        weight = np.maximum(cp.priority[cp.link_a], cp.priority[cp.link_b])
        k = int(np.argmax(np.where(res > self.opts.bilinear_tol, res * weight, -1.0)))
        a, b = int(cp.link_a[k]), int(cp.link_b[k])
        w = hi[a] - lo[a]
        one_signed = lo[b] > 0.0 or hi[b] < 0.0
        if one_signed and lo[a] < -_ZERO_SPLIT * (1.0 + w) and hi[a] > _ZERO_SPLIT * (1.0 + w):
            # with a positive gain the product shares the sign of the other factor, so
            # the envelope is only a cone once that sign is fixed
            return a, 0.0
        for var in (b, a):
            w = hi[var] - lo[var]
            if w > 1e-9 * (1.0 + abs(lo[var])):
                return var, float(np.clip(x[var], lo[var] + 0.1 * w, hi[var] - 0.1 * w))
        return None


def solve(problem: MiblpProblem, opts: Optional[SolveOptions] = None,
          start: Optional[Union[np.ndarray, Dict[str, float]]] = None) -> MiblpSolution:
    """Branch and bound to a proven gap; see the module docstring for the scheme.

    ``start`` optionally seeds the incumbent with a full value vector or a
    partial ``{name: value}`` assignment (completed by :meth:`_Search.complete`).
    An infeasible start is ignored.
    """
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    search = _Search(problem, opts)
    names = problem.names()
    cp = search.cp
    n = search.n

    def finish(status, bound):
        wall = time.perf_counter() - t0
        cuts = [list(p) for p in search.pool_points]
        if search.incumbent is None:
            return MiblpSolution(np.full(n, np.nan), np.inf, status, search.nodes, wall,
                                 bound, np.inf, names, cuts)
        obj = search.incumbent_obj
        if status == "optimal":
            bound = min(bound, obj)
        return MiblpSolution(search.incumbent.copy(), obj, status, search.nodes, wall, bound,
                             obj - bound, names, cuts)

    ok, lo, hi = search._tighten(cp.lower.copy(), cp.upper.copy())
    if not ok:
        return finish("infeasible", np.inf)
    search.initial_cuts(lo, hi)
    if start is not None:
        if isinstance(start, dict):
            seed = {problem.index(k): float(v) for k, v in start.items() if k in search.name_set}
        else:
            seed = dict(enumerate(np.asarray(start, dtype=float)))
        search.offer(search.complete(seed))
    root = search.evaluate(lo, hi, None)
    search.nodes = 1
    if not root.feasible:
        status = "infeasible" if root.sol is None or root.sol.status == "infeasible" else "numerical"
        return finish(status, np.inf)

    heap: List[Tuple[float, int, np.ndarray, np.ndarray, Optional[WarmStart]]] = []
    pending: Dict[int, _NodeResult] = {}
    unresolved = np.inf
    executor = ThreadPoolExecutor(opts.worker_count - 1) if opts.worker_count > 1 else None
    futures = {}

    def process(result: _NodeResult):
        nonlocal unresolved
        lo, hi, sol = result.lo, result.hi, result.sol
        integral = search.integral(sol.x)
        if not integral and search.incumbent is None and search.dives < _MAX_DIVES and \
                search.nodes % _DIVE_EVERY == 1:
            search.dives += 1
            search.offer(search.dive(lo, hi, sol))
        if integral:
            sol = search.kelley(lo, hi, sol.warm, sol)
            if not sol.ok:
                return
        if sol.objective >= search.incumbent_obj - search.gap_tol():
            return
        branch = search.choose_branch(lo, hi, sol.x)
        if integral:
            # the heuristic is the expensive part of a node; run it for every new
            # on/off pattern and otherwise only periodically
            pattern = tuple(np.round(sol.x[search.bin_idx]).astype(int))
            if pattern not in search.tried_patterns or search.nodes % _HEURISTIC_EVERY == 0:
                search.tried_patterns.add(pattern)
                search.offer(search.heuristic(lo, hi, sol))
            if branch is None:
                search.offer(search.repair(sol.x))
        if sol.objective >= search.incumbent_obj - search.gap_tol():
            return
        if branch is None:
            # relaxation point is feasible up to tolerances but the gap stays open
            unresolved = min(unresolved, sol.objective)
            return
        var, split = branch
        for side in (0, 1):
            clo, chi = lo.copy(), hi.copy()
            if search.binary[var]:
                if side == 0:
                    chi[var] = 0.0
                else:
                    clo[var] = 1.0
            elif side == 0:
                chi[var] = split
            else:
                clo[var] = split
            search.counter += 1
            heapq.heappush(heap, (sol.objective, -search.counter, clo, chi, sol.warm))

    try:
        process(root)
        status = "optimal"
        while heap:
            if heap[0][0] >= search.incumbent_obj - search.gap_tol():
                heap.clear()
                break
            if search.nodes >= opts.max_nodes:
                status = "node_limit"
                break
            if time.perf_counter() - t0 > opts.max_time:
                status = "time_limit"
                break
            bound, idx, lo, hi, warm = heapq.heappop(heap)
            if executor is not None:
                # speculative solves of the next nodes in heap order; a result is only used
                # when the cut pool did not change in between, so the search is identical
                # to the single-worker one
                for _, jdx, jlo, jhi, jwarm in heapq.nsmallest(opts.worker_count - 1, heap):
                    if jdx not in futures:
                        futures[jdx] = executor.submit(search.evaluate, jlo, jhi, jwarm)
            fut = futures.pop(idx, None)
            result = fut.result() if fut is not None else None
            if result is None or result.version != search.pool_version:
                result = search.evaluate(lo, hi, warm)
            search.nodes += 1
            if not result.feasible:
                continue
            process(result)
        best_open = min((h[0] for h in heap), default=np.inf)
        bound = min(best_open, unresolved)
        if search.incumbent is None:
            return finish("infeasible" if status == "optimal" else status, bound)
        if status == "optimal":
            gap = search.incumbent_obj - bound
            if np.isfinite(bound) and gap > search.gap_tol() + 1e-12:
                status = "feasible"
        return finish(status, bound)
    finally:
        if executor is not None:
            executor.shutdown(wait=True, cancel_futures=True)


def solve_lp_relaxation(problem: MiblpProblem) -> LpSolution:
    """Root LP: rows, envelopes over the global box, and the initial tangent cuts."""
    search = _Search(problem, SolveOptions())
    cp = search.cp
    ok, lo, hi = search._tighten(cp.lower.copy(), cp.upper.copy())
    if not ok:
        raise ProblemError("bound propagation proves the problem infeasible")
    search.initial_cuts(lo, hi)
    return lp_solve(search._lp(lo, hi))


__all__ = ["MiblpSolution", "SolveOptions", "dumps_solution", "loads_solution",
           "max_bilinear_residual", "solve", "solve_lp_relaxation"]
