"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Sized for least-core problems: at most ``2**n`` constraints and a handful of
variables, so a dense tableau is fine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LPError

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    iterations: int


def _pivot(T: np.ndarray, basis: list[int], row: int, col: int) -> None:
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])
    basis[row] = col


def _iterate(T: np.ndarray, basis: list[int], ncols: int, max_iter: int, phase: int) -> int:
    """Run Bland pivots on tableau ``T`` (objective in the last row) until optimal."""
    it = 0
    m = T.shape[0] - 1
    while True:
        red = T[-1, :ncols]
        entering = np.flatnonzero(red < -PIVOT_TOL)
        if entering.size == 0:
            return it
        col = int(entering[0])
        column = T[:m, col]
        rows = np.flatnonzero(column > PIVOT_TOL)
        if rows.size == 0:
            raise LPError("linear program is unbounded", {"phase": phase, "column": col})
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, basis, row, col)
        it += 1
        if it > max_iter:
            raise LPError("simplex iteration limit reached", {"phase": phase, "iterations": it, "basis": list(basis)})


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, free=None, max_iter: int | None = None) -> LPResult:
    """Minimise ``c @ x`` s.t. ``A_ub x <= b_ub``, ``A_eq x = b_eq``.

    Variables are nonnegative unless flagged in the boolean mask ``free``.
    Raises :class:`LPError` when the problem is infeasible or unbounded.
    """
    c = np.asarray(c, dtype=float)
    nv = c.size
    free = np.zeros(nv, bool) if free is None else np.asarray(free, bool)
    A_ub = np.zeros((0, nv)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    A_eq = np.zeros((0, nv)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)

    # split free variables x = x+ - x-
    split = np.flatnonzero(free)
    expand = np.hstack([np.eye(nv), -np.eye(nv)[:, split]])
    cc = c @ expand
    Aub = A_ub @ expand
    Aeq = A_eq @ expand
    nx = cc.size
    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq

    A = np.zeros((m, nx + m_ub))
    A[:m_ub, :nx] = Aub
    A[:m_ub, nx:] = np.eye(m_ub)
    A[m_ub:, :nx] = Aeq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b = np.where(neg, -b, b)
    ncols = nx + m_ub

    # phase 1 tableau: [A | I_art | b]
    T = np.zeros((m + 1, ncols + m + 1))
    T[:m, :ncols] = A
    T[:m, ncols : ncols + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :ncols] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(ncols, ncols + m))
    limit = max_iter or 50 * (m + ncols + 10)
    iters = _iterate(T, basis, ncols + m, limit, phase=1)
    if -T[-1, -1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
        raise LPError("linear program is infeasible", {"phase1_objective": float(-T[-1, -1])})

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= ncols:
            cols = np.flatnonzero(np.abs(T[r, :ncols]) > PIVOT_TOL)
            if cols.size == 0:
                continue
            _pivot(T, basis, r, int(cols[0]))
        keep.append(r)
    T = np.vstack([T[keep][:, list(range(ncols)) + [T.shape[1] - 1]], np.zeros((1, ncols + 1))])
    basis = [basis[r] for r in keep]

    cost = np.concatenate([cc, np.zeros(m_ub)])
    T[-1, :ncols] = cost
    for r, j in enumerate(basis):
        T[-1] -= cost[j] * T[r]
    iters += _iterate(T, basis, ncols, limit, phase=2)

    sol = np.zeros(ncols)
    sol[basis] = T[:-1, -1]
    x = expand @ sol[:nx]
    return LPResult(x, float(c @ x), iters)
