"""Self-contained dense two-phase simplex for small linear programs.

The equilibrium computations only ever need LPs with a handful of variables
(at most two per road), so a dense tableau with Bland's anti-cycling rule is
plenty.  Problems are stated over nonnegative variables with equality and
upper-bound rows:

    min/max  c @ x   s.t.   a_eq @ x == b_eq,   a_ub @ x <= b_ub,   x >= 0
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LPResult:
    status: str
    x: np.ndarray | None
    objective: float | None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    for r in range(tableau.shape[0]):
        if r != row and tableau[r, col] != 0.0:
            tableau[r] -= tableau[r, col] * tableau[row]
    basis[row] = col


def _run_simplex(tableau: np.ndarray, basis: np.ndarray, cost: np.ndarray,
                 num_cols: int, tol: float) -> str:
    """Minimize cost over the current tableau in place; returns a status.

    Pivots by steepest reduced cost; after a run of degenerate pivots the
    rule switches to Bland's (smallest indices), which cannot cycle.
    """
    degenerate_run = 0
    bland = False
    max_iters = 1000 + 40 * (tableau.shape[0] + num_cols)
    for _ in range(max_iters):
        # Basic variables beyond num_cols are artificials stuck in redundant
        # rows; they carry no cost in either phase.
        cost_basis = np.where(basis < cost.size,
                              cost[np.minimum(basis, cost.size - 1)], 0.0)
        reduced = cost[:num_cols] - cost_basis @ tableau[:, :num_cols]
        eligible = np.nonzero(reduced < -tol)[0]
        if eligible.size == 0:
            return OPTIMAL
        entering = int(eligible[0]) if bland else int(eligible[np.argmin(reduced[eligible])])
        column = tableau[:, entering]
        positive = column > tol
        if not positive.any():
            return UNBOUNDED
        ratios = np.where(positive, tableau[:, -1] / np.where(positive, column, 1.0),
                          np.inf)
        best_ratio = float(ratios.min())
        ties = np.nonzero(ratios <= best_ratio + tol)[0]
        leaving = int(ties[np.argmin(basis[ties])])
        _pivot(tableau, basis, leaving, entering)
        if best_ratio <= tol:
            degenerate_run += 1
            if degenerate_run >= 40:
                bland = True
        else:
            degenerate_run = 0
    raise RuntimeError("simplex iteration cap exceeded")


def solve_lp(c, a_eq=None, b_eq=None, a_ub=None, b_ub=None,
             maximize: bool = False, tol: float = 1e-9) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    a_eq = np.zeros((0, n)) if a_eq is None else np.atleast_2d(np.asarray(a_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))
    a_ub = np.zeros((0, n)) if a_ub is None else np.atleast_2d(np.asarray(a_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, dtype=float))
    m_eq, m_ub = a_eq.shape[0], a_ub.shape[0]
    m = m_eq + m_ub

    # Columns: x (n) | slacks (m_ub) | artificials (added as needed) | rhs.
    rows = np.zeros((m, n + m_ub))
    rhs = np.zeros(m)
    rows[:m_eq, :n] = a_eq
    rhs[:m_eq] = b_eq
    rows[m_eq:, :n] = a_ub
    rows[np.arange(m_eq, m), n + np.arange(m_ub)] = 1.0
    rhs[m_eq:] = b_ub
    neg = rhs < 0
    rows[neg] *= -1.0
    rhs[neg] *= -1.0

    # Slack columns with +1 coefficient and nonnegative rhs can start basic;
    # everything else gets an artificial.
    basis = np.full(m, -1, dtype=int)
    needs_art = []
    for r in range(m):
        if r >= m_eq and not neg[r]:
            basis[r] = n + (r - m_eq)
        else:
            needs_art.append(r)
    n_art = len(needs_art)
    tableau = np.zeros((m, n + m_ub + n_art + 1))
    tableau[:, :n + m_ub] = rows
    tableau[:, -1] = rhs
    for k, r in enumerate(needs_art):
        tableau[r, n + m_ub + k] = 1.0
        basis[r] = n + m_ub + k
    num_cols = n + m_ub + n_art

    if n_art:
        phase1 = np.zeros(num_cols)
        phase1[n + m_ub:] = 1.0
        status = _run_simplex(tableau, basis, phase1, num_cols, tol)
        objective1 = phase1[basis] @ tableau[:, -1]
        if status != OPTIMAL or objective1 > 1e-7:
            return LPResult(INFEASIBLE, None, None)
        # Remove artificials still basic at zero level.
        for r in range(m):
            if basis[r] >= n + m_ub:
                pivot_col = -1
                for j in range(n + m_ub):
                    if abs(tableau[r, j]) > tol:
                        pivot_col = j
                        break
                if pivot_col >= 0:
                    _pivot(tableau, basis, r, pivot_col)
                # else: redundant row, harmless to leave in place
        tableau[:, n + m_ub:num_cols] = 0.0

    cost = np.zeros(num_cols)
    cost[:n] = -c if maximize else c
    status = _run_simplex(tableau, basis, cost, n + m_ub, tol)
    if status != OPTIMAL:
        return LPResult(status, None, None)
    x = np.zeros(num_cols)
    x[basis] = tableau[:, -1]
    x = x[:n]
    obj = float(c @ x)
    return LPResult(OPTIMAL, x, obj)
