import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from humidmpc.exceptions import InfeasibleError, UnboundedError, UsageError
from humidmpc.lp import LinearProgram, solve_lp
from oracles import random_bounded_lp, vertex_minimum


def lp(c, A_ub=(), b_ub=(), A_eq=(), b_eq=(), lb=0.0, ub=np.inf):
    return LinearProgram(c=c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, lb=lb, ub=ub)


def test_single_variable_lower_bound():
    sol = solve_lp(lp([1.0], A_ub=[[-1.0]], b_ub=[-3.0]))
    assert sol.x[0] == pytest.approx(3.0)
    assert sol.objective == pytest.approx(3.0)


def test_textbook_problem():
    # max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), value 36
    sol = solve_lp(lp([-3.0, -5.0], A_ub=[[1, 0], [0, 2], [3, 2]], b_ub=[4, 12, 18]))
    np.testing.assert_allclose(sol.x, [2.0, 6.0], atol=1e-9)
    assert sol.objective == pytest.approx(-36.0)
    assert sol.duality_gap < 1e-7


def test_free_variables_and_equalities():
    # min x - y  s.t. x + y == 1, -2 <= x <= 2, y free below 5
    sol = solve_lp(lp([1.0, -1.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], lb=[-2.0, -np.inf], ub=[2.0, 5.0]))
    np.testing.assert_allclose(sol.x, [-2.0, 3.0], atol=1e-9)


def test_infeasible_instance():
    with pytest.raises(InfeasibleError):
        solve_lp(lp([1.0, 1.0], A_ub=[[1.0, 1.0], [-1.0, -1.0]], b_ub=[1.0, -2.0]))


def test_unbounded_instance():
    with pytest.raises(UnboundedError):
        solve_lp(lp([-1.0, 0.0], A_ub=[[1.0, -1.0]], b_ub=[1.0]))


def test_inconsistent_bounds_rejected():
    with pytest.raises(UsageError):
        lp([1.0], lb=2.0, ub=1.0)


def test_degenerate_vertex():
    # three constraints meet at the optimum (1, 1)
    sol = solve_lp(lp([-1.0, -1.0], A_ub=[[1, 0], [0, 1], [1, 1]], b_ub=[1, 1, 2]))
    assert sol.objective == pytest.approx(-2.0)


@pytest.mark.parametrize("seed", range(20))
def test_matches_vertex_enumeration(seed):
    problem = random_bounded_lp(np.random.default_rng(seed))
    sol = solve_lp(problem)
    ref = vertex_minimum(problem)
    assert sol.objective == pytest.approx(ref, rel=1e-6, abs=1e-9)
    assert max(problem.residuals(sol.x)) <= 1e-7


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_solution_is_certified(seed):
    problem = random_bounded_lp(np.random.default_rng(seed))
    sol = solve_lp(problem)
    assert sol.primal_residual <= 1e-7
    assert sol.dual_infeasibility <= 1e-7
    assert abs(sol.duality_gap) <= 1e-6 * max(1.0, abs(sol.objective))
