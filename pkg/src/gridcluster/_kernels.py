"""Compiled inner loops for the optimizer (value insertion and reassignment)."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True, inline="always")
def _group_term(lf, total, size):
    if total <= 0:
        return 0.0
    return lf[total + size - 1] - lf[total - 1] - lf[size]


@njit(cache=True, nogil=True)
def _profile(indptr, indices, data, other_assign, v, prof, touched):
    nt = 0
    t = 0
    for e in range(indptr[v], indptr[v + 1]):
        g = other_assign[indices[e]]
        if prof[g] == 0:
            touched[nt] = g
            nt += 1
        prof[g] += data[e]
        t += data[e]
    return nt, t


@njit(cache=True, nogil=True)
def _insert_cost(lf, cells, totals, sizes, b, prof, touched, nt, t):
    d = lf[totals[b] + t] - lf[totals[b]]
    d += _group_term(lf, totals[b] + t, sizes[b] + 1) - _group_term(lf, totals[b], sizes[b])
    for q in range(nt):
        j = touched[q]
        d += lf[cells[b, j]] - lf[cells[b, j] + prof[j]]
    return d


@njit(cache=True, nogil=True)
def seed_groups(indptr, indices, data, other_assign, n_other_groups, order, n_seeds,
                assign, cells, totals, sizes, lf):
    """Place values one by one in ``order``.

    The first ``n_seeds`` values open one group each; every later value joins
    the group whose cost increases least.  ``cells``/``totals``/``sizes`` must
    be zero on entry.
    """
    prof = np.zeros(n_other_groups, np.int64)
    touched = np.empty(n_other_groups, np.int64)
    for idx in range(order.shape[0]):
        v = order[idx]
        nt, t = _profile(indptr, indices, data, other_assign, v, prof, touched)
        if idx < n_seeds:
            best_b = idx
        else:
            best_b = 0
            best = np.inf
            for b in range(n_seeds):
                d = _insert_cost(lf, cells, totals, sizes, b, prof, touched, nt, t)
                if d < best:
                    best = d
                    best_b = b
        for q in range(nt):
            j = touched[q]
            cells[best_b, j] += prof[j]
            prof[j] = 0
        totals[best_b] += t
        sizes[best_b] += 1
        assign[v] = best_b


@njit(cache=True, nogil=True)
def reassign_sweep(indptr, indices, data, other_assign, n_other_groups, order,
                   assign, cells, totals, sizes, lf, tol):
    """Move each value to the group giving the largest cost decrease, if any.

    Values alone in their group stay put.  Returns (moves, total delta).
    """
    K = cells.shape[0]
    prof = np.zeros(n_other_groups, np.int64)
    touched = np.empty(n_other_groups, np.int64)
    moves = 0
    gain = 0.0
    for idx in range(order.shape[0]):
        v = order[idx]
        a = assign[v]
        if sizes[a] <= 1:
            continue
        nt, t = _profile(indptr, indices, data, other_assign, v, prof, touched)
        da = lf[totals[a] - t] - lf[totals[a]]
        da += _group_term(lf, totals[a] - t, sizes[a] - 1) - _group_term(lf, totals[a], sizes[a])
        for q in range(nt):
            j = touched[q]
            da += lf[cells[a, j]] - lf[cells[a, j] - prof[j]]
        best = -tol
        best_b = -1
        for b in range(K):
            if b == a:
                continue
            d = da + _insert_cost(lf, cells, totals, sizes, b, prof, touched, nt, t)
            if d < best:
                best = d
                best_b = b
        if best_b >= 0:
            for q in range(nt):
                j = touched[q]
                cells[a, j] -= prof[j]
                cells[best_b, j] += prof[j]
            totals[a] -= t
            totals[best_b] += t
            sizes[a] -= 1
            sizes[best_b] += 1
            assign[v] = best_b
            moves += 1
            gain += best
        for q in range(nt):
            prof[touched[q]] = 0
    return moves, gain
