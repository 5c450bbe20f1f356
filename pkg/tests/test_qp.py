"""Diagonal quadratic programming: active-set solve vs. exhaustive reference."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from icxtest import (
    FeasibilityError,
    QpProblem,
    brute_force_qp,
    kkt_residuals,
    solve_qp,
)

from oracles import slsqp_qp_value


def _problem(w, E=None, e=None, F=None, f=None):
    n = len(w)
    E = np.zeros((0, n)) if E is None else np.asarray(E, dtype=float)
    e = np.zeros(0) if e is None else np.asarray(e, dtype=float)
    F = np.zeros((0, n)) if F is None else np.asarray(F, dtype=float)
    f = np.zeros(0) if f is None else np.asarray(f, dtype=float)
    return QpProblem(np.asarray(w, dtype=float), E, e, F, f)


def test_problem_validation():
    with pytest.raises(ValueError):
        _problem([1.0, 0.0])                       # weight must be positive
    with pytest.raises(ValueError):
        _problem([])
    with pytest.raises(ValueError):
        _problem([1.0, 2.0], E=[[1.0, 0.0, 0.0]], e=[1.0])
    with pytest.raises(ValueError):
        _problem([1.0, 2.0], E=[[1.0, 0.0]], e=[1.0, 2.0])


def test_unconstrained_minimum_is_origin():
    sol = solve_qp(_problem([2.0, 3.0, 0.5]), [1.0, -2.0, 4.0])
    assert_allclose(sol.minimizer, np.zeros(3), atol=1e-12)
    assert sol.objective_value == pytest.approx(0.0, abs=1e-20)


def test_single_equality_has_closed_form():
    # min 2u1^2 + u2^2 subject to u1 + u2 = 3: u = (1, 2), objective 6
    sol = solve_qp(_problem([2.0, 1.0], E=[[1.0, 1.0]], e=[3.0]), [3.0, 0.0])
    assert_allclose(sol.minimizer, [1.0, 2.0], rtol=1e-12)
    assert sol.objective_value == pytest.approx(6.0, rel=1e-12)


def test_inactive_inequality_leaves_solution_alone():
    prob = _problem([1.0, 1.0], E=[[1.0, 1.0]], e=[2.0], F=[[1.0, -1.0]], f=[-5.0])
    sol = solve_qp(prob, [2.0, 0.0])
    assert_allclose(sol.minimizer, [1.0, 1.0], rtol=1e-12)
    assert sol.active_set == ()
    assert_allclose(sol.ineq_multipliers, [0.0], atol=1e-12)


def test_active_inequality_binds_with_positive_multiplier():
    # min u1^2 + u2^2 with u1 + u2 = 2 and u1 - u2 >= 1: u = (1.5, 0.5)
    prob = _problem([1.0, 1.0], E=[[1.0, 1.0]], e=[2.0], F=[[1.0, -1.0]], f=[1.0])
    sol = solve_qp(prob, [2.0, 0.0])
    assert_allclose(sol.minimizer, [1.5, 0.5], rtol=1e-12)
    assert sol.active_set == (0,)
    assert sol.ineq_multipliers[0] > 0.0
    res = kkt_residuals(prob, sol.minimizer, sol.eq_multipliers,
                        sol.ineq_multipliers)
    assert max(res["stationarity"], res["primal_eq"], res["primal_ineq"],
               res["comp_slack"]) <= 1e-10


def test_redundant_equality_rows_are_tolerated():
    prob = _problem([1.0, 2.0, 1.0],
                    E=[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]], e=[3.0, 6.0])
    sol = solve_qp(prob, [1.0, 1.0, 1.0])
    ref = brute_force_qp(prob)
    assert_allclose(sol.objective_value, ref.objective_value, rtol=1e-12)


def test_infeasible_start_is_rejected():
    prob = _problem([1.0, 1.0], E=[[1.0, 1.0]], e=[2.0])
    with pytest.raises(FeasibilityError):
        solve_qp(prob, [0.0, 0.0])
    prob2 = _problem([1.0, 1.0], F=[[1.0, 0.0]], f=[1.0])
    with pytest.raises(FeasibilityError):
        solve_qp(prob2, [0.0, 0.0])
    with pytest.raises(ValueError):
        solve_qp(prob, [2.0, 0.0, 0.0])


def test_contradictory_equalities_cannot_be_started():
    # the two rows demand different sums, so no start can be feasible
    prob = _problem([1.0, 1.0],
                    E=[[1.0, 1.0], [1.0, 1.0]], e=[2.0, 3.0])
    for start in ([1.0, 1.0], [1.5, 1.5]):
        with pytest.raises(FeasibilityError):
            solve_qp(prob, start)


def _random_problem(rng):
    """A solvable random instance plus a feasible starting point."""
    n = int(rng.integers(2, 9))
    w = rng.uniform(0.2, 3.0, size=n)
    z0 = rng.normal(0.0, 1.5, size=n)
    me = int(rng.integers(0, 3))
    mi = int(rng.integers(1, 5))
    E = rng.normal(size=(me, n))
    e = E @ z0
    F = rng.normal(size=(mi, n))
    slack = np.where(rng.random(mi) < 0.3, 0.0, rng.uniform(0.0, 1.0, size=mi))
    f = F @ z0 - slack
    return QpProblem(w, E, e, F, f), z0


def test_random_problems_match_brute_force_and_kkt():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        prob, z0 = _random_problem(rng)
        sol = solve_qp(prob, z0)
        ref = brute_force_qp(prob)
        scale = max(1.0, abs(ref.objective_value))
        assert abs(sol.objective_value - ref.objective_value) <= 1e-8 * scale
        res = kkt_residuals(prob, sol.minimizer, sol.eq_multipliers,
                            sol.ineq_multipliers)
        tol = 1e-8 * max(1.0, float(np.abs(sol.minimizer).max()))
        assert res["stationarity"] <= tol
        assert res["primal_eq"] <= tol
        assert res["primal_ineq"] <= tol
        assert res["min_multiplier"] >= -1e-9


def test_random_problems_match_independent_solver():
    rng = np.random.default_rng(99)
    for _ in range(20):
        prob, z0 = _random_problem(rng)
        sol = solve_qp(prob, z0)
        ref = slsqp_qp_value(prob.diag_weights, prob.eq_matrix, prob.eq_rhs,
                             prob.ineq_matrix, prob.ineq_rhs, z0)
        assert abs(sol.objective_value - ref) <= 1e-6 * max(1.0, abs(ref))


def test_solver_is_deterministic():
    rng = np.random.default_rng(7)
    prob, z0 = _random_problem(rng)
    a = solve_qp(prob, z0)
    b = solve_qp(prob, z0)
    assert np.array_equal(a.minimizer, b.minimizer)
    assert a.objective_value == b.objective_value
    assert a.active_set == b.active_set


def test_brute_force_refuses_large_inequality_sets():
    n = 25
    prob = QpProblem(np.ones(n), np.zeros((0, n)), np.zeros(0),
                     np.eye(n), -np.ones(n))
    with pytest.raises(ValueError):
        brute_force_qp(prob)
