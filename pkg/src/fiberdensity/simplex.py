"""Dense two-phase tableau simplex.

Solves::

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                x[j] >= 0 unless free[j]

Instances here are tiny (a few hundred rows at most), so a dense tableau is
fine.  Pricing is deterministic (Dantzig, with Bland's rule during degenerate
stretches), so the returned vertex is reproducible.  Optimal solves report dual multipliers; infeasible solves
report a Farkas ray from phase one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_PIVOTS = 200_000
DEGENERATE_SWITCH = 20
HARRIS_TOL = 1e-11


class SimplexError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str                      # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    objective: float | None = None
    # c - A_ub.T @ y_ub - A_eq.T @ y_eq >= 0 on nonneg vars, == 0 on free vars;
    # y_ub <= 0.  Then b_ub @ y_ub + b_eq @ y_eq is a lower bound on the optimum.
    y_ub: np.ndarray | None = None
    y_eq: np.ndarray | None = None
    # infeasible: A_ub.T @ f_ub + A_eq.T @ f_eq "<= 0" (== 0 on free vars),
    # f_ub <= 0 and b_ub @ f_ub + b_eq @ f_eq > 0
    farkas_ub: np.ndarray | None = None
    farkas_eq: np.ndarray | None = None
    pivots: int = 0

    @property
    def success(self) -> bool:
        return self.status == "optimal"


def _pivot(T: np.ndarray, r: int, s: int) -> None:
    T[r] /= T[r, s]
    col = T[:, s].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run(T: np.ndarray, basis: list[int], ncols: int, pivots: int) -> tuple[str, int]:
    """Simplex iterations on tableau ``T`` (last row = reduced costs).

    Dantzig pricing, switching to Bland's rule while pivots are degenerate so
    the method cannot cycle.  Only the first ``ncols`` columns may enter.
    Returns (status, pivots).
    """
    m = T.shape[0] - 1
    degenerate_run = 0
    while True:
        red = T[-1, :ncols]
        scale = max(1.0, float(np.max(np.abs(red))))
        cand = np.nonzero(red < -PIVOT_TOL * scale)[0]
        if cand.size == 0:
            return "optimal", pivots
        if degenerate_run >= DEGENERATE_SWITCH:
            s = int(cand[0])
        else:
            s = int(cand[np.argmin(red[cand])])
        colv = T[:m, s]
        rows = np.nonzero(colv > PIVOT_TOL)[0]
        if rows.size == 0:
            return "unbounded", pivots
        rhs = np.maximum(T[rows, -1], 0.0)
        # Harris two-pass ratio test: among rows whose ratio is within the
        # feasibility tolerance of the minimum, take the largest pivot
        bound = ((rhs + HARRIS_TOL) / colv[rows]).min()
        ratios = rhs / colv[rows]
        near = np.nonzero(ratios <= bound)[0]
        piv = colv[rows[near]]
        top = piv.max()
        tied = rows[near[piv >= top * (1 - 1e-9)]]
        r = int(min(tied, key=lambda i: basis[i]))
        best = float(ratios[np.searchsorted(rows, r)])
        degenerate_run = degenerate_run + 1 if best <= 1e-12 else 0
        _pivot(T, r, s)
        np.maximum(T[:m, -1], 0.0, out=T[:m, -1])
        basis[r] = s
        pivots += 1
        if pivots > MAX_PIVOTS:
            raise SimplexError("pivot limit exceeded")


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, free=None) -> LPResult:
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    if A_ub.size == 0:
        A_ub = A_ub.reshape(0, n)
    if A_eq.size == 0:
        A_eq = A_eq.reshape(0, n)
    free = np.zeros(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # standard form columns: x (nonneg part), x^- for free vars, ub slacks
    free_idx = np.nonzero(free)[0]
    nf = free_idx.size
    A = np.zeros((m, n + nf + m_ub))
    A[:m_ub, :n] = A_ub
    A[m_ub:, :n] = A_eq
    A[:m_ub, n:n + nf] = -A_ub[:, free_idx]
    A[m_ub:, n:n + nf] = -A_eq[:, free_idx]
    A[:m_ub, n + nf:] = np.eye(m_ub)
    b = np.concatenate([b_ub, b_eq])
    cost = np.concatenate([c, -c[free_idx], np.zeros(m_ub)])
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b = b * sign
    N = A.shape[1]

    # initial basis: slack where usable, artificial otherwise
    needs_art = [i for i in range(m) if i >= m_ub or sign[i] < 0]
    art_col = {i: N + k for k, i in enumerate(needs_art)}
    na = len(needs_art)
    T = np.zeros((m + 1, N + na + 1))
    T[:m, :N] = A
    for i, j in art_col.items():
        T[i, j] = 1.0
    T[:m, -1] = b
    basis = [art_col.get(i, n + nf + i) for i in range(m)]

    pivots = 0
    if na:
        # phase 1: minimize the sum of artificials
        for i in needs_art:
            T[-1] -= T[i]
        for i in needs_art:
            T[-1, art_col[i]] = 0.0
        status, pivots = _run(T, basis, N + na, pivots)
        infeas = -T[-1, -1]
        if infeas > FEAS_TOL * max(1.0, float(np.max(np.abs(b))) if m else 1.0):
            y = _phase1_duals(T, art_col, m, m_ub, n + nf)
            y = y * sign
            res = LPResult("infeasible", pivots=pivots)
            res.farkas_ub, res.farkas_eq = y[:m_ub], y[m_ub:]
            return res
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= N:
                nz = np.nonzero(np.abs(T[r, :N]) > PIVOT_TOL)[0]
                if nz.size:
                    _pivot(T, r, int(nz[0]))
                    basis[r] = int(nz[0])
                    pivots += 1
                else:
                    keep[r] = False
        rows = np.nonzero(keep)[0]
        T = np.vstack([T[rows][:, list(range(N)) + [T.shape[1] - 1]], np.zeros((1, N + 1))])
        basis = [basis[r] for r in rows]
    else:
        rows = np.arange(m)
        T = np.hstack([T[:, :N], T[:, -1:]])

    # phase 2 reduced costs for the current basis
    T[-1, :] = 0.0
    T[-1, :N] = cost
    for r, j in enumerate(basis):
        if cost[j] != 0.0:
            T[-1] -= cost[j] * T[r]
    status, pivots = _run(T, basis, N, pivots)
    if status == "unbounded":
        return LPResult("unbounded", pivots=pivots)

    # polish: recompute the basic solution from the original data
    B = A[rows][:, basis]
    try:
        xB = np.linalg.solve(B, b[rows])
        yr = np.linalg.solve(B.T, cost[basis])
    except np.linalg.LinAlgError:
        xB = T[:-1, -1].copy()
        yr = None
    z = np.zeros(N)
    z[basis] = xB
    z = np.maximum(z, 0.0)
    x = z[:n].copy()
    x[free_idx] -= z[n:n + nf]
    y = np.zeros(m)
    if yr is not None:
        y[rows] = yr
    y *= sign
    return LPResult("optimal", x=x, objective=float(c @ x),
                    y_ub=y[:m_ub], y_eq=y[m_ub:], pivots=pivots)


def _phase1_duals(T, art_col, m, m_ub, slack0) -> np.ndarray:
    # phase-one costs: 1 on artificials, 0 elsewhere.  Reduced cost of the
    # artificial in row i is 1 - y_i; of the slack in ub row i it is -y_i.
    y = np.zeros(m)
    red = T[-1]
    for i in range(m):
        if i in art_col:
            y[i] = 1.0 - red[art_col[i]]
        elif i < m_ub:
            y[i] = -red[slack0 + i]
    return y


def dual_bound(res: LPResult, b_ub=None, b_eq=None) -> float:
    """Lower bound ``b_ub @ y_ub + b_eq @ y_eq`` implied by the reported duals."""
    total = 0.0
    if b_ub is not None and res.y_ub is not None and len(res.y_ub):
        total += float(np.asarray(b_ub) @ res.y_ub)
    if b_eq is not None and res.y_eq is not None and len(res.y_eq):
        total += float(np.asarray(b_eq) @ res.y_eq)
    return total


def linprog_ineq(c, A_ub, b_ub, free=None) -> LPResult:
    """Inequality-form LP, solved through its dual when rows outnumber columns.

    For ``min c@z, A z <= b`` the dual in nonnegative ``u = -y`` reads
    ``min b@u`` subject to ``-A_F.T u == c_F``, ``-A_N.T u <= c_N``; its basis
    is only as large as the number of primal columns.  The primal point is
    read off the dual's multipliers.  Anything but an optimal dual falls back
    to the primal solve so that infeasibility comes with a Farkas ray.
    """
    c = np.asarray(c, dtype=float).ravel()
    A = np.atleast_2d(np.asarray(A_ub, dtype=float))
    b = np.asarray(b_ub, dtype=float).ravel()
    n = c.size
    free = np.zeros(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    if A.shape[0] <= 2 * n:
        return linprog(c, A, b, free=free)
    F = np.nonzero(free)[0]
    Nn = np.nonzero(~free)[0]
    dual = linprog(b, -A[:, Nn].T if Nn.size else None, c[Nn] if Nn.size else None,
                   -A[:, F].T if F.size else None, c[F] if F.size else None)
    if dual.status != "optimal":
        return linprog(c, A, b, free=free)
    z = np.zeros(n)
    if F.size:
        z[F] = -dual.y_eq
    if Nn.size:
        z[Nn] = np.maximum(-dual.y_ub, 0.0)
    return LPResult("optimal", x=z, objective=float(c @ z), y_ub=-dual.x,
                    y_eq=np.zeros(0), pivots=dual.pivots)
