"""Bound-constrained augmented-Lagrangian method for small nonconvex programs.

Solves   min f(x)   s.t.  c_eq(x) = 0,  c_ineq(x) >= 0,  lb <= x <= ub
with the classic Powell-Hestenes-Rockafellar update: the bound constraints go
straight to an L-BFGS-B inner loop, equality and inequality residuals are
absorbed into quadratic penalty terms with running multiplier estimates, and
the penalty weight grows whenever feasibility stalls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

Array = np.ndarray


@dataclass
class AuglagResult:
    x: Array
    objective: float
    max_violation: float
    iterations: int
    converged: bool


def _violation(eq: Array, ineq: Array) -> float:
    worst = 0.0
    if eq.size:
        worst = max(worst, float(np.abs(eq).max()))
    if ineq.size:
        worst = max(worst, float(np.maximum(0.0, -ineq).max()))
    return worst


def minimize_auglag(
    objective: Callable[[Array], float],
    x0: Array,
    bounds: list[tuple[float, float]],
    eq_constraints: Callable[[Array], Array] | None = None,
    ineq_constraints: Callable[[Array], Array] | None = None,
    *,
    constraint_tol: float = 1e-6,
    optimality_tol: float = 1e-6,
    max_outer: int = 25,
    max_inner_iterations: int = 500,
    initial_penalty: float = 10.0,
) -> AuglagResult:
    """Run the augmented-Lagrangian loop from a single starting point.

    ``max_inner_iterations`` caps the total L-BFGS-B iterations spent across
    all outer rounds, making one call comparable to one solver restart.
    Returns the best point seen, preferring feasibility first and objective
    second.
    """
    x = np.asarray(x0, dtype=float).copy()
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    x = np.clip(x, lo, hi)

    def eval_eq(z: Array) -> Array:
        return (np.atleast_1d(np.asarray(eq_constraints(z), dtype=float))
                if eq_constraints is not None else np.zeros(0))

    def eval_ineq(z: Array) -> Array:
        return (np.atleast_1d(np.asarray(ineq_constraints(z), dtype=float))
                if ineq_constraints is not None else np.zeros(0))

    lam = np.zeros(eval_eq(x).size)
    mu = np.zeros(eval_ineq(x).size)
    rho = initial_penalty

    def auglag_value(z: Array) -> float:
        value = objective(z)
        ceq = eval_eq(z)
        if ceq.size:
            value += float(-lam @ ceq + 0.5 * rho * (ceq @ ceq))
        cin = eval_ineq(z)
        if cin.size:
            shifted = np.maximum(0.0, mu - rho * cin)
            value += float(((shifted ** 2).sum() - (mu ** 2).sum()) / (2.0 * rho))
        return value

    best_x = x.copy()
    best_obj = float(objective(x))
    best_viol = _violation(eval_eq(x), eval_ineq(x))
    iterations_left = max_inner_iterations
    prev_viol = np.inf

    for outer in range(max_outer):
        if iterations_left <= 0:
            break
        inner_budget = max(10, min(iterations_left, 120))
        res = minimize(auglag_value, x, method="L-BFGS-B",
                       bounds=list(zip(lo, hi)),
                       options={"maxiter": inner_budget, "ftol": 1e-12,
                                "gtol": optimality_tol * 1e-2})
        iterations_left -= max(1, res.nit)
        x = np.clip(res.x, lo, hi)
        ceq = eval_eq(x)
        cin = eval_ineq(x)
        viol = _violation(ceq, cin)
        obj = float(objective(x))
        if viol < best_viol - 1e-12 or (viol <= max(best_viol, constraint_tol)
                                        and obj < best_obj):
            best_x, best_obj, best_viol = x.copy(), obj, viol
        if viol <= constraint_tol and outer > 0:
            return AuglagResult(best_x, best_obj, best_viol,
                                max_inner_iterations - iterations_left, True)
        lam = lam - rho * ceq
        mu = np.maximum(0.0, mu - rho * cin)
        if viol > 0.25 * prev_viol:
            rho = min(rho * 10.0, 1e10)
        prev_viol = viol

    return AuglagResult(best_x, best_obj, best_viol,
                        max_inner_iterations - iterations_left,
                        best_viol <= constraint_tol)
