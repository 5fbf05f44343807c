"""Dense tableau simplex used as an internal cross-check (n <= 2000).

Independent of the revised solver: full tableau, Bland's rule throughout,
no bounded variables.  Slow but simple; used by tests to validate the
sparse engine on small instances.
"""
from __future__ import annotations

import numpy as np

from .errors import LPError
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, StandardFormLP

_EPS = 1e-9


def _dense_matrix(lp: StandardFormLP):
    A = np.zeros((lp.m, lp.n))
    indptr, indices, data = lp.csc()
    for j in range(lp.n):
        A[indices[indptr[j] : indptr[j + 1]], j] = data[indptr[j] : indptr[j + 1]]
    return A


def _pivot(T, basis, r, j):
    T[r] /= T[r, j]
    for i in range(T.shape[0]):
        if i != r and T[i, j] != 0.0:
            T[i] -= T[i, j] * T[r]
    basis[r] = j


def _run(T, basis, ncols):
    """Bland simplex on tableau T (last row = objective, last col = rhs)."""
    m = T.shape[0] - 1
    for _ in range(200000):
        obj = T[-1]
        j = -1
        for cand in range(ncols):
            if obj[cand] < -_EPS:
                j = cand
                break
        if j < 0:
            return OPTIMAL
        best_r, best_ratio, best_var = -1, np.inf, None
        for r in range(m):
            if T[r, j] > _EPS:
                ratio = T[r, -1] / T[r, j]
                if ratio < best_ratio - 1e-12 or (
                    abs(ratio - best_ratio) <= 1e-12 and basis[r] < best_var
                ):
                    best_r, best_ratio, best_var = r, ratio, basis[r]
        if best_r < 0:
            return UNBOUNDED
        _pivot(T, basis, best_r, j)
    raise LPError("dense simplex did not terminate")


def solve_dense(lp: StandardFormLP):
    """Returns (status, objective, x) by an independent tableau method."""
    if lp.n > 2000:
        raise LPError("dense cross-check is limited to n <= 2000")
    if np.any(np.isfinite(lp.ub)):
        raise LPError("dense cross-check does not support upper bounds")
    A = _dense_matrix(lp)
    b = lp.b.copy()
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    m, n = lp.m, lp.n
    # phase 1 tableau: [A | I | b]
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n, n + m))
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    status = _run(T, basis, n)  # artificials may not re-enter
    if status != OPTIMAL or -T[-1, -1] > 1e-7 * (1.0 + abs(b).max() if m else 1.0):
        return INFEASIBLE, None, None
    # drive artificials out where possible
    for r in range(m):
        if basis[r] >= n:
            for j in range(n):
                if abs(T[r, j]) > 1e-7:
                    _pivot(T, basis, r, j)
                    break
    # phase 2 objective row
    T[-1, :] = 0.0
    T[-1, :n] = lp.c
    for r in range(m):
        if basis[r] < n and T[-1, basis[r]] != 0.0:
            T[-1] -= T[-1, basis[r]] * T[r]
    # forbid artificials
    T[-1, n : n + m] = np.inf
    status = _run(T, basis, n)
    if status == UNBOUNDED:
        return UNBOUNDED, None, None
    x = np.zeros(n)
    for r in range(m):
        if basis[r] < n:
            x[basis[r]] = T[r, -1]
    return OPTIMAL, float(lp.c @ x), x
