"""Bounded-variable dual simplex.

The LP is ``min c'x  s.t.  row_lower <= A x <= row_upper,  lower <= x <= upper``
with finite column bounds.  Internally every row gets a logical variable
``s = -A x`` so the system reads ``[A I] (x, s) = 0``; row bounds become bounds
on ``s``.  Because every structural column is boxed, the all-logical basis with
each structural parked at the bound matching the sign of its cost is dual
feasible, so no phase 1 is ever needed and warm starts after bound changes or
appended rows stay dual feasible.

Pricing is largest-infeasibility with a Harris two-pass ratio test.  After a
run of dual-degenerate pivots the rule switches to smallest-index selection on
both sides (Bland), which rules out cycling.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .._accel import njit

OPTIMAL = 0
INFEASIBLE = 1
ITERATION_LIMIT = 2
NUMERICAL = 3

STATUS_NAMES = {OPTIMAL: "optimal", INFEASIBLE: "infeasible",
                ITERATION_LIMIT: "iteration_limit", NUMERICAL: "numerical"}

_REFACTOR_EVERY = 64
_DEGENERATE_SWITCH = 40


@njit
def _column_structure(A):
    m, n = A.shape
    counts = np.zeros(n + 1, dtype=np.int64)
    for j in range(n):
        c = 0
        for i in range(m):
            if A[i, j] != 0.0:
                c += 1
        counts[j + 1] = counts[j] + c
    rows = np.empty(counts[n], dtype=np.int64)
    vals = np.empty(counts[n], dtype=np.float64)
    for j in range(n):
        p = counts[j]
        for i in range(m):
            if A[i, j] != 0.0:
                rows[p] = i
                vals[p] = A[i, j]
                p += 1
    return counts, rows, vals


@njit
def _nonbasic_values(L, U, at_upper, is_basic):
    N = L.shape[0]
    x = np.zeros(N)
    for j in range(N):
        if not is_basic[j]:
            x[j] = U[j] if at_upper[j] else L[j]
    return x


@njit
def _try_inverse(M, k):
    """Explicit inverse checked on a probe vector; returns (Minv, ok)."""
    if k == 0:
        return np.zeros((0, 0)), True
    try:
        Minv = np.ascontiguousarray(np.linalg.inv(M))
    except Exception:
        return np.zeros((k, k)), False
    probe = np.empty(k)
    for a in range(k):
        probe[a] = 1.0 + (a % 7) * 0.125
    z = Minv @ probe
    r = M @ z
    scale = 1.0
    for a in range(k):
        if abs(z[a]) > scale:
            scale = abs(z[a])
    if scale > 1e12:
        return Minv, False
    for a in range(k):
        if abs(r[a] - probe[a]) > 1e-9 * scale:
            return Minv, False
    return Minv, True


@njit
def _working_inverse(A, S, R, k, tol):
    """Invert ``A[R, S]``; on rank deficiency return the independent subsets.

    Returns ``(Minv, rank, keep_rows, keep_cols)``.  When ``rank < k`` the
    inverse is not computed and the caller drops the unpivoted rows/columns.
    """
    M = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            M[a, b] = A[R[a], S[b]]
    Minv, ok = _try_inverse(M, k)
    if ok:
        return Minv, k, np.arange(k), np.arange(k)
    W = M.copy()
    rperm = np.arange(k)
    cperm = np.arange(k)
    scale = 0.0
    for a in range(k):
        for b in range(k):
            if abs(W[a, b]) > scale:
                scale = abs(W[a, b])
    rank = 0
    for t in range(k):
        bi = t
        bj = t
        best = 0.0
        for a in range(t, k):
            for b in range(t, k):
                if abs(W[a, b]) > best:
                    best = abs(W[a, b])
                    bi = a
                    bj = b
        if best <= tol * max(scale, 1.0):
            break
        if bi != t:
            for b in range(k):
                tmp = W[t, b]
                W[t, b] = W[bi, b]
                W[bi, b] = tmp
            tmp2 = rperm[t]
            rperm[t] = rperm[bi]
            rperm[bi] = tmp2
        if bj != t:
            for a in range(k):
                tmp = W[a, t]
                W[a, t] = W[a, bj]
                W[a, bj] = tmp
            tmp2 = cperm[t]
            cperm[t] = cperm[bj]
            cperm[bj] = tmp2
        piv = W[t, t]
        for a in range(t + 1, k):
            f = W[a, t] / piv
            if f != 0.0:
                for b in range(t, k):
                    W[a, b] -= f * W[t, b]
        rank += 1
    if rank < k:
        return np.zeros((k, k)), rank, rperm[:rank].copy(), cperm[:rank].copy()
    # numerically full rank but the inverse is unusable: drop the weakest pivot
    return np.zeros((k, k)), k - 1, rperm[:k - 1].copy(), cperm[:k - 1].copy()


@njit
def _values_and_duals(colptr, rowidx, vals, n, m, S, R, k, Minv, x, is_basic, cost, d):
    """Basic primal values and all reduced costs for the current partition."""
    r = np.zeros(m)
    for j in range(n):
        if not is_basic[j] and x[j] != 0.0:
            for p in range(colptr[j], colptr[j + 1]):
                r[rowidx[p]] += vals[p] * x[j]
    rhs = np.empty(k)
    for t in range(k):
        i = R[t]
        rhs[t] = -(r[i] + x[n + i])
    xs = np.zeros(k)
    for a in range(k):
        acc = 0.0
        for b in range(k):
            acc += Minv[a, b] * rhs[b]
        xs[a] = acc
    for t in range(k):
        j = S[t]
        x[j] = xs[t]
        for p in range(colptr[j], colptr[j + 1]):
            r[rowidx[p]] += vals[p] * xs[t]
    for i in range(m):
        if is_basic[n + i]:
            x[n + i] = -r[i]
    cs = np.empty(k)
    for t in range(k):
        cs[t] = cost[S[t]]
    yr = np.zeros(k)
    for a in range(k):
        if cs[a] != 0.0:
            for b in range(k):
                yr[b] += cs[a] * Minv[a, b]
    y = np.zeros(m)
    for t in range(k):
        y[R[t]] = yr[t]
    for j in range(n):
        if is_basic[j]:
            d[j] = 0.0
            continue
        s = cost[j]
        for p in range(colptr[j], colptr[j + 1]):
            s -= y[rowidx[p]] * vals[p]
        d[j] = s
    for i in range(m):
        d[n + i] = 0.0 if is_basic[n + i] else -y[i]


@njit
def _refactor(A, n, m, S, R, k, pos_S, pos_R, is_basic, at_upper, Minv):
    """Rebuild the working inverse, dropping dependent columns when singular.

    Returns the new working size, or -1 on numerical failure.
    """
    for _ in range(3):
        Wk, rank, keep_r, keep_c = _working_inverse(A, S, R, k, 1e-10)
        if rank == k:
            Minv[:k, :k] = Wk
            return k
        if rank < 0:
            return -1
        # structural columns outside the pivot set leave at a bound; rows outside it
        # get their logical back into the basis
        keep_col = np.zeros(k, dtype=np.bool_)
        keep_row = np.zeros(k, dtype=np.bool_)
        for t in range(rank):
            keep_col[keep_c[t]] = True
            keep_row[keep_r[t]] = True
        S2 = np.empty(rank, dtype=np.int64)
        R2 = np.empty(rank, dtype=np.int64)
        a = 0
        for t in range(k):
            if keep_col[t]:
                S2[a] = S[t]
                a += 1
            else:
                is_basic[S[t]] = False
                at_upper[S[t]] = False
                pos_S[S[t]] = -1
        a = 0
        for t in range(k):
            if keep_row[t]:
                R2[a] = R[t]
                a += 1
            else:
                is_basic[n + R[t]] = True
                pos_R[R[t]] = -1
        k = rank
        for t in range(k):
            S[t] = S2[t]
            R[t] = R2[t]
            pos_S[S[t]] = t
            pos_R[R[t]] = t
    return -1


@njit
def dual_simplex_kernel(A, row_lo, row_hi, c, lo, hi, basis, at_upper,
                        max_iter, tol_p, tol_d):
    """Run the dual simplex from the given basis.

    The basis inverse is kept in factored form: with ``S`` the basic structural
    columns and ``R`` the rows whose logical is nonbasic, only the square block
    ``A[R, S]`` needs an explicit inverse.  ``basis`` (length m) and
    ``at_upper`` (length n + m) are updated in place.  Returns
    ``(status, x_full, iterations)``.
    """
    m, n = A.shape
    N = n + m
    L = np.empty(N)
    U = np.empty(N)
    cost = np.zeros(N)
    for j in range(n):
        L[j] = lo[j]
        U[j] = hi[j]
        cost[j] = c[j]
    for i in range(m):
        L[n + i] = -row_hi[i]
        U[n + i] = -row_lo[i]
    colptr, rowidx, vals = _column_structure(A)

    cap = min(n, m)
    is_basic = np.zeros(N, dtype=np.bool_)
    for t in range(m):
        is_basic[basis[t]] = True
    S = np.empty(max(cap, 1), dtype=np.int64)
    R = np.empty(max(cap, 1), dtype=np.int64)
    pos_S = -np.ones(n, dtype=np.int64)
    pos_R = -np.ones(m, dtype=np.int64)
    k = 0
    for j in range(n):
        if is_basic[j]:
            if k >= cap:
                return NUMERICAL, np.zeros(N), 0
            S[k] = j
            pos_S[j] = k
            k += 1
    kr = 0
    for i in range(m):
        if not is_basic[n + i]:
            if kr >= cap:
                return NUMERICAL, np.zeros(N), 0
            R[kr] = i
            pos_R[i] = kr
            kr += 1
    if kr != k:
        return NUMERICAL, np.zeros(N), 0
    Minv = np.zeros((max(cap, 1), max(cap, 1)))
    k = _refactor(A, n, m, S, R, k, pos_S, pos_R, is_basic, at_upper, Minv)
    if k < 0:
        return NUMERICAL, np.zeros(N), 0

    for j in range(N):
        if not is_basic[j]:
            if at_upper[j] and not np.isfinite(U[j]):
                at_upper[j] = False
            if not at_upper[j] and not np.isfinite(L[j]):
                at_upper[j] = True
            if not np.isfinite(U[j]) and not np.isfinite(L[j]):
                return NUMERICAL, np.zeros(N), 0
    x = _nonbasic_values(L, U, at_upper, is_basic)
    d = np.zeros(N)
    _values_and_duals(colptr, rowidx, vals, n, m, S, R, k, Minv, x, is_basic, cost, d)

    # restore dual feasibility by bound flips; fails only for half-free columns
    flipped = False
    for j in range(N):
        if is_basic[j] or L[j] == U[j]:
            continue
        if (not at_upper[j]) and d[j] < -tol_d:
            if not np.isfinite(U[j]):
                return NUMERICAL, x, 0
            at_upper[j] = True
            x[j] = U[j]
            flipped = True
        elif at_upper[j] and d[j] > tol_d:
            if not np.isfinite(L[j]):
                return NUMERICAL, x, 0
            at_upper[j] = False
            x[j] = L[j]
            flipped = True
    if flipped:
        _values_and_duals(colptr, rowidx, vals, n, m, S, R, k, Minv, x, is_basic, cost, d)

    bland = False
    degenerate_run = 0
    since_refactor = 0
    alpha = np.zeros(N)
    rho = np.zeros(m)
    v = np.zeros(max(cap, 1))
    wS = np.zeros(max(cap, 1))
    wL = np.zeros(m)
    acc = np.zeros(m)
    it = 0
    while it < max_iter:
        # leaving variable: basic structurals and basic logicals
        p = -1
        best = 0.0
        for j in range(N):
            if not is_basic[j]:
                continue
            xv = x[j]
            if xv < L[j] - tol_p:
                inf = L[j] - xv
            elif xv > U[j] + tol_p:
                inf = xv - U[j]
            else:
                continue
            if bland:
                if p < 0:
                    p = j
            elif inf > best:
                best = inf
                p = j
        if p < 0:
            if since_refactor > 0:
                # confirm optimality on a fresh factorization
                k = _refactor(A, n, m, S, R, k, pos_S, pos_R, is_basic, at_upper, Minv)
                if k < 0:
                    return NUMERICAL, x, it
                x = _nonbasic_values(L, U, at_upper, is_basic)
                _values_and_duals(colptr, rowidx, vals, n, m, S, R, k, Minv, x, is_basic,
                                  cost, d)
                since_refactor = 0
                continue
            break

        to_lower = x[p] < L[p]
        sgn = 1.0 if to_lower else -1.0
        # row of the basis inverse belonging to p, scattered over constraint rows
        rho[:] = 0.0
        if p < n:
            t = pos_S[p]
            for b in range(k):
                rho[R[b]] = Minv[t, b]
        else:
            i0 = p - n
            for b in range(k):
                v[b] = A[i0, S[b]]
            for b in range(k):
                s = 0.0
                for a in range(k):
                    s += v[a] * Minv[a, b]
                rho[R[b]] = -s
            rho[i0] = 1.0
        for j in range(n):
            if is_basic[j]:
                alpha[j] = 0.0
                continue
            s = 0.0
            for q2 in range(colptr[j], colptr[j + 1]):
                s += rho[rowidx[q2]] * vals[q2]
            alpha[j] = s
        for i in range(m):
            alpha[n + i] = 0.0 if is_basic[n + i] else rho[i]

        # ratio test
        q = -1
        if bland:
            tmin = np.inf
            for j in range(N):
                if is_basic[j] or L[j] == U[j]:
                    continue
                a = sgn * alpha[j]
                if (not at_upper[j] and a < -1e-9) or (at_upper[j] and a > 1e-9):
                    tr = abs(d[j]) / abs(a)
                    if tr < tmin - 1e-12:
                        tmin = tr
                        q = j
        else:
            tmax = np.inf
            for j in range(N):
                if is_basic[j] or L[j] == U[j]:
                    continue
                a = sgn * alpha[j]
                if (not at_upper[j] and a < -1e-9) or (at_upper[j] and a > 1e-9):
                    tr = (abs(d[j]) + tol_d) / abs(a)
                    if tr < tmax:
                        tmax = tr
            amax = 0.0
            for j in range(N):
                if is_basic[j] or L[j] == U[j]:
                    continue
                a = sgn * alpha[j]
                if (not at_upper[j] and a < -1e-9) or (at_upper[j] and a > 1e-9):
                    if abs(d[j]) / abs(a) <= tmax and abs(a) > amax:
                        amax = abs(a)
                        q = j
        if q < 0:
            return INFEASIBLE, x, it

        # FTRAN of the entering column: wS over S, wL over basic logical rows
        if q < n:
            for a in range(k):
                s = 0.0
                for b in range(k):
                    s += Minv[a, b] * A[R[b], q]
                wS[a] = s
        else:
            r1 = pos_R[q - n]
            for a in range(k):
                wS[a] = Minv[a, r1]
        acc[:] = 0.0
        for a in range(k):
            j = S[a]
            f = wS[a]
            if f != 0.0:
                for q2 in range(colptr[j], colptr[j + 1]):
                    acc[rowidx[q2]] += vals[q2] * f
        for i in range(m):
            if is_basic[n + i]:
                wL[i] = (A[i, q] if q < n else 0.0) - acc[i]
            else:
                wL[i] = 0.0
        piv = wS[pos_S[p]] if p < n else wL[p - n]
        if abs(piv) < 1e-11 or abs(piv - alpha[q]) > 1e-6 * (1.0 + abs(piv)):
            if since_refactor == 0:
                return NUMERICAL, x, it
            k = _refactor(A, n, m, S, R, k, pos_S, pos_R, is_basic, at_upper, Minv)
            if k < 0:
                return NUMERICAL, x, it
            x = _nonbasic_values(L, U, at_upper, is_basic)
            _values_and_duals(colptr, rowidx, vals, n, m, S, R, k, Minv, x, is_basic, cost, d)
            since_refactor = 0
            continue

        theta_d = d[q] / alpha[q]
        if abs(theta_d) < 1e-12:
            degenerate_run += 1
            if degenerate_run > _DEGENERATE_SWITCH:
                bland = True
        else:
            degenerate_run = 0
            bland = False
        for j in range(N):
            if not is_basic[j]:
                d[j] -= theta_d * alpha[j]
        d[q] = 0.0
        d[p] = -theta_d

        target = L[p] if to_lower else U[p]
        delta = (x[p] - target) / piv
        for a in range(k):
            x[S[a]] -= wS[a] * delta
        for i in range(m):
            if is_basic[n + i]:
                x[n + i] -= wL[i] * delta
        x[q] += delta
        x[p] = target

        # update the working inverse
        if q < n and p < n:
            t = pos_S[p]
            ut = wS[t]
            for b in range(k):
                Minv[t, b] /= ut
            for a in range(k):
                if a != t and wS[a] != 0.0:
                    f = wS[a]
                    for b in range(k):
                        Minv[a, b] -= f * Minv[t, b]
            S[t] = q
            pos_S[q] = t
            pos_S[p] = -1
        elif q < n:
            # logical row i0 leaves the basis: border the working block
            i0 = p - n
            sig = piv
            for b in range(k):
                v[b] = -rho[R[b]]
            for a in range(k):
                for b in range(k):
                    Minv[a, b] += wS[a] * v[b] / sig
            for a in range(k):
                Minv[a, k] = -wS[a] / sig
                Minv[k, a] = -v[a] / sig
            Minv[k, k] = 1.0 / sig
            S[k] = q
            R[k] = i0
            pos_S[q] = k
            pos_R[i0] = k
            k += 1
        elif p < n:
            # logical of row i1 enters, structural p leaves: shrink the block
            t = pos_S[p]
            r1 = pos_R[q - n]
            pv = Minv[t, r1]
            for a in range(k):
                if a == t:
                    continue
                f = Minv[a, r1] / pv
                if f != 0.0:
                    for b in range(k):
                        if b != r1:
                            Minv[a, b] -= f * Minv[t, b]
            last = k - 1
            if t != last:
                for b in range(k):
                    Minv[t, b] = Minv[last, b]
                S[t] = S[last]
                pos_S[S[t]] = t
            if r1 != last:
                for a in range(k):
                    Minv[a, r1] = Minv[a, last]
                R[r1] = R[last]
                pos_R[R[r1]] = r1
            pos_S[p] = -1
            pos_R[q - n] = -1
            k -= 1
        else:
            # one logical replaces another: row swap in the working block
            i0 = p - n
            r1 = pos_R[q - n]
            for b in range(k):
                v[b] = -rho[R[b]]
            den = v[r1]
            v[r1] -= 1.0
            for a in range(k):
                f = wS[a] / den
                if f != 0.0:
                    for b in range(k):
                        Minv[a, b] -= f * v[b]
            R[r1] = i0
            pos_R[i0] = r1
            pos_R[q - n] = -1

        is_basic[q] = True
        is_basic[p] = False
        at_upper[p] = not to_lower
        it += 1
        since_refactor += 1
        if since_refactor >= _REFACTOR_EVERY:
            k = _refactor(A, n, m, S, R, k, pos_S, pos_R, is_basic, at_upper, Minv)
            if k < 0:
                return NUMERICAL, x, it
            x = _nonbasic_values(L, U, at_upper, is_basic)
            _values_and_duals(colptr, rowidx, vals, n, m, S, R, k, Minv, x, is_basic, cost, d)
            since_refactor = 0
    status = OPTIMAL if it < max_iter else ITERATION_LIMIT
    t = 0
    for j in range(N):
        if is_basic[j]:
            basis[t] = j
            t += 1
    return status, x, it


@dataclass
class LinearProgram:
    """``min c'x`` over ``row_lower <= A x <= row_upper`` and finite column bounds."""

    c: np.ndarray
    A: np.ndarray
    row_lower: np.ndarray
    row_upper: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.c = np.ascontiguousarray(self.c, dtype=np.float64)
        n = self.c.shape[0]
        self.A = np.ascontiguousarray(np.asarray(self.A, dtype=np.float64).reshape(-1, n))
        self.row_lower = np.ascontiguousarray(self.row_lower, dtype=np.float64)
        self.row_upper = np.ascontiguousarray(self.row_upper, dtype=np.float64)
        self.lower = np.ascontiguousarray(self.lower, dtype=np.float64)
        self.upper = np.ascontiguousarray(self.upper, dtype=np.float64)
        m = self.A.shape[0]
        if self.row_lower.shape != (m,) or self.row_upper.shape != (m,):
            raise ValueError("row bound arrays must have one entry per row")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("column bound arrays must have one entry per column")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("column bounds must be finite")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class WarmStart:
    """Basis description reusable across LPs that only differ by bounds or appended rows."""

    basis: np.ndarray
    at_upper: np.ndarray
    n: int

    def extended(self, m_new: int) -> "WarmStart":
        """Adapt to an LP with ``m_new >= m`` rows; new logicals enter the basis."""
        m = self.basis.shape[0]
        if m_new == m:
            return WarmStart(self.basis.copy(), self.at_upper.copy(), self.n)
        basis = np.concatenate([self.basis, self.n + np.arange(m, m_new)])
        at_upper = np.concatenate([self.at_upper, np.zeros(m_new - m, dtype=np.bool_)])
        return WarmStart(basis.astype(np.int64), at_upper, self.n)


@dataclass
class LpSolution:
    status: str
    x: np.ndarray
    objective: float
    iterations: int
    warm: Optional[WarmStart] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def cold_start(lp: LinearProgram) -> WarmStart:
    m, n = lp.shape
    basis = np.arange(n, n + m, dtype=np.int64)
    at_upper = np.zeros(n + m, dtype=np.bool_)
    at_upper[:n] = lp.c < 0.0
    return WarmStart(basis, at_upper, n)


def lp_solve(lp: LinearProgram, warm: Optional[WarmStart] = None, max_iter: Optional[int] = None,
             tol_primal: float = 1e-9, tol_dual: float = 1e-9) -> LpSolution:
    """Solve ``lp``; returns an optimal basic solution or an explicit failure status.

    A warm start that turns out singular or not dual feasible is silently
    replaced by the cold start, so the answer never depends on the hint's
    quality beyond ties between alternative optima.
    """
    m, n = lp.shape
    if np.any(lp.lower > lp.upper) or np.any(lp.row_lower > lp.row_upper):
        return LpSolution("infeasible", np.full(n, np.nan), np.inf, 0)
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    starts = []
    if warm is not None and warm.n == n and warm.basis.shape[0] <= m:
        starts.append(warm.extended(m))
    starts.append(cold_start(lp))
    status, x, it = NUMERICAL, np.zeros(n + m), 0
    total = 0
    for start in starts:
        basis = start.basis.copy()
        at_upper = start.at_upper.copy()
        status, x, it = dual_simplex_kernel(lp.A, lp.row_lower, lp.row_upper, lp.c, lp.lower,
                                            lp.upper, basis, at_upper, max_iter, tol_primal,
                                            tol_dual)
        total += it
        if status != NUMERICAL:
            break
    name = STATUS_NAMES[status]
    xs = x[:n].copy()
    if status != OPTIMAL:
        return LpSolution(name, xs, np.inf if status == INFEASIBLE else np.nan, total)
    # basic structurals may sit a hair outside their box
    np.clip(xs, lp.lower, lp.upper, out=xs)
    return LpSolution(name, xs, float(lp.c @ xs), total, WarmStart(basis, at_upper, n))
