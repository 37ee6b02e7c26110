"""Convex relaxation pieces: McCormick envelopes, tangent cuts, bound propagation."""
from typing import List, Tuple

import numpy as np

from .._accel import njit
from .problem import BilinearLink, LinearConstraint


def mccormick_cuts(link: BilinearLink, a_bounds: Tuple[float, float],
                   b_bounds: Tuple[float, float]) -> List[LinearConstraint]:
    """The four envelope inequalities of ``q = a * b`` over the given factor box.

    Rows are returned in the order under-estimator (lower corner), under-estimator
    (upper corner), over-estimator (a high, b low), over-estimator (a low, b high).
    """
    al, au = map(float, a_bounds)
    bl, bu = map(float, b_bounds)
    if not all(np.isfinite([al, au, bl, bu])):
        raise ValueError("McCormick envelope needs finite factor bounds")
    q, a, b = link.product, link.factor_a, link.factor_b

    def row(ca, cb, sense, rhs):
        coefs = {q: 1.0}
        coefs[a] = coefs.get(a, 0.0) - ca
        coefs[b] = coefs.get(b, 0.0) - cb
        return LinearConstraint(coefs, sense, rhs, "")

    return [
        row(bl, al, ">=", -al * bl),
        row(bu, au, ">=", -au * bu),
        row(bl, au, "<=", -au * bl),
        row(bu, al, "<=", -al * bu),
    ]


def mccormick_rows(n, link_p, link_a, link_b, lo, hi):
    """Envelope rows for every link, stacked as ``(A, row_lower, row_upper)``."""
    k = link_p.shape[0]
    A = np.zeros((4 * k, n))
    rl = np.full(4 * k, -np.inf)
    ru = np.full(4 * k, np.inf)
    if k == 0:
        return A, rl, ru
    al, au = lo[link_a], hi[link_a]
    bl, bu = lo[link_b], hi[link_b]
    idx = np.arange(k)
    for r, (ca, cb, rhs, lower) in enumerate((
            (bl, al, -al * bl, True),
            (bu, au, -au * bu, True),
            (bl, au, -au * bl, False),
            (bu, al, -al * bu, False))):
        rows = 4 * idx + r
        A[rows, link_p] += 1.0
        np.add.at(A, (rows, link_a), -ca)
        np.add.at(A, (rows, link_b), -cb)
        if lower:
            rl[rows] = rhs
        else:
            ru[rows] = rhs
    return A, rl, ru


def tangent_row(n, weight, G_row, const, epi, z):
    """Cut ``epi >= w z^2 + 2 w z (e - z)`` with ``e = const + G x``; returns (row, rhs)."""
    row = -2.0 * weight * z * G_row
    row[epi] += 1.0
    return row, 2.0 * weight * z * const - weight * z * z


def expression_range(G_row, const, lo, hi):
    pos = np.maximum(G_row, 0.0)
    neg = np.minimum(G_row, 0.0)
    return const + pos @ lo + neg @ hi, const + pos @ hi + neg @ lo


@njit
def propagate_bounds(rowptr, cols, vals, row_lo, row_hi, lo, hi, binary,
                     link_p, link_a, link_b, max_passes):
    """Feasibility-based bound tightening on single rows and bilinear links.

    ``lo`` and ``hi`` are tightened in place.  Each derived bound is relaxed by a
    small safety margin so round-off never cuts off a feasible point.  Returns
    False when some box or row becomes empty.
    """
    m = row_lo.shape[0]
    for _ in range(max_passes):
        changed = False
        for i in range(m):
            mn = 0.0
            mx = 0.0
            for p in range(rowptr[i], rowptr[i + 1]):
                a = vals[p]
                j = cols[p]
                if a > 0:
                    mn += a * lo[j]
                    mx += a * hi[j]
                else:
                    mn += a * hi[j]
                    mx += a * lo[j]
            scale = 1e-9 * (1.0 + abs(mn) + abs(mx))
            if mn > row_hi[i] + 1e-7 + scale or mx < row_lo[i] - 1e-7 - scale:
                return False
            for p in range(rowptr[i], rowptr[i + 1]):
                a = vals[p]
                j = cols[p]
                if a > 0:
                    rest_mn = mn - a * lo[j]
                    rest_mx = mx - a * hi[j]
                else:
                    rest_mn = mn - a * hi[j]
                    rest_mx = mx - a * lo[j]
                new_lo = lo[j]
                new_hi = hi[j]
                if np.isfinite(row_hi[i]):
                    lim = (row_hi[i] - rest_mn) / a
                    if a > 0:
                        new_hi = min(new_hi, lim)
                    else:
                        new_lo = max(new_lo, lim)
                if np.isfinite(row_lo[i]):
                    lim = (row_lo[i] - rest_mx) / a
                    if a > 0:
                        new_lo = max(new_lo, lim)
                    else:
                        new_hi = min(new_hi, lim)
                changed |= _apply(j, new_lo, new_hi, lo, hi, binary)
                if lo[j] > hi[j]:
                    return False
        for k in range(link_p.shape[0]):
            q = link_p[k]
            a = link_a[k]
            b = link_b[k]
            c1 = lo[a] * lo[b]
            c2 = lo[a] * hi[b]
            c3 = hi[a] * lo[b]
            c4 = hi[a] * hi[b]
            changed |= _apply(q, min(min(c1, c2), min(c3, c4)), max(max(c1, c2), max(c3, c4)),
                              lo, hi, binary)
            if lo[q] > hi[q]:
                return False
            if lo[b] > 0.0:
                d1 = lo[q] / lo[b]
                d2 = lo[q] / hi[b]
                d3 = hi[q] / lo[b]
                d4 = hi[q] / hi[b]
                changed |= _apply(a, min(min(d1, d2), min(d3, d4)), max(max(d1, d2), max(d3, d4)),
                                  lo, hi, binary)
                if lo[a] > hi[a]:
                    return False
            if lo[a] > 0.0:
                d1 = lo[q] / lo[a]
                d2 = lo[q] / hi[a]
                d3 = hi[q] / lo[a]
                d4 = hi[q] / hi[a]
                changed |= _apply(b, min(min(d1, d2), min(d3, d4)), max(max(d1, d2), max(d3, d4)),
                                  lo, hi, binary)
                if lo[b] > hi[b]:
                    return False
        if not changed:
            break
    return True


@njit
def _apply(j, new_lo, new_hi, lo, hi, binary):
    changed = False
    width = hi[j] - lo[j]
    if binary[j]:
        new_lo = np.ceil(new_lo - 1e-6)
        new_hi = np.floor(new_hi + 1e-6)
    else:
        new_lo -= 1e-9 * (1.0 + abs(new_lo))
        new_hi += 1e-9 * (1.0 + abs(new_hi))
    # only count real progress so the outer loop terminates
    if new_lo > lo[j] + 1e-7 * (1.0 + width) or (binary[j] and new_lo > lo[j]):
        lo[j] = new_lo
        changed = True
    if new_hi < hi[j] - 1e-7 * (1.0 + width) or (binary[j] and new_hi < hi[j]):
        hi[j] = new_hi
        changed = True
    if lo[j] > hi[j] and lo[j] <= hi[j] + 1e-7 and not binary[j]:
        mid = 0.5 * (lo[j] + hi[j])
        lo[j] = mid
        hi[j] = mid
    return changed


def csr_from_dense(A):
    rowptr = np.zeros(A.shape[0] + 1, dtype=np.int64)
    rows, cols = np.nonzero(A)
    np.add.at(rowptr, rows + 1, 1)
    rowptr = np.cumsum(rowptr)
    return rowptr, cols.astype(np.int64), A[rows, cols].astype(np.float64)
