import numpy as np
import pytest
from scipy.optimize import linprog

from mixedroads.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, solve_lp


def test_basic_maximization():
    # max x + y s.t. x + 2y <= 4, 3x + y <= 6 -> x=1.6, y=1.2
    res = solve_lp([1, 1], a_ub=[[1, 2], [3, 1]], b_ub=[4, 6], maximize=True)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(2.8)
    assert res.x == pytest.approx([1.6, 1.2])


def test_equality_constraints():
    # min x + 2y s.t. x + y = 3 -> (3, 0)
    res = solve_lp([1, 2], a_eq=[[1, 1]], b_eq=[3])
    assert res.status == OPTIMAL
    assert res.x == pytest.approx([3, 0])


def test_infeasible():
    res = solve_lp([1], a_eq=[[1]], b_eq=[2], a_ub=[[1]], b_ub=[1])
    assert res.status == INFEASIBLE


def test_unbounded():
    res = solve_lp([1, 0], a_ub=[[0, 1]], b_ub=[1], maximize=True)
    assert res.status == UNBOUNDED


def test_negative_rhs_handled():
    # -x <= -2  <=>  x >= 2; min x -> 2
    res = solve_lp([1], a_ub=[[-1]], b_ub=[-2])
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(2)


def test_degenerate_feasibility_only():
    res = solve_lp([0, 0], a_eq=[[1, 1], [1, -1]], b_eq=[2, 0])
    assert res.status == OPTIMAL
    assert res.x == pytest.approx([1, 1])


def test_matches_scipy_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(150):
        n = int(rng.integers(2, 7))
        m_eq = int(rng.integers(0, 3))
        m_ub = int(rng.integers(0, 4))
        c = rng.normal(size=n)
        a_eq = rng.normal(size=(m_eq, n)) if m_eq else None
        a_ub = rng.normal(size=(m_ub, n)) if m_ub else None
        x0 = rng.uniform(0, 2, size=n)
        b_eq = a_eq @ x0 if m_eq else None
        b_ub = (a_ub @ x0 + rng.uniform(0, 1, size=m_ub)) if m_ub else None
        res = solve_lp(c, a_eq, b_eq, a_ub, b_ub)
        ref = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                      bounds=(0, None), method="highs")
        if ref.status == 0:
            assert res.status == OPTIMAL
            assert res.objective == pytest.approx(ref.fun, abs=1e-6, rel=1e-6)
        elif ref.status == 2:
            assert res.status == INFEASIBLE
        elif ref.status == 3:
            assert res.status == UNBOUNDED
