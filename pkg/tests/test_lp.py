"""
Test the two-phase simplex solver against hand-solved problems, vertex
enumeration and scipy's HiGHS solver.
"""
import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import itertools
import pytest
import numpy as np
from scipy.optimize import linprog

import lp_utils
from errors import InternalError, IterationLimitError, ParameterError


def _lp(c, A, relations, b, sense="max", lower=None):
    return lp_utils.LinearProgram(c=c, A=A, relations=relations, b=b, sense=sense, lower=lower)


def test_textbook_maximization():
    """max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)."""
    lp = _lp([3, 5], [[1, 0], [0, 2], [3, 2]], ("<=",) * 3, [4, 12, 18])
    solution = lp_utils.solve(lp)
    assert solution.optimal
    assert solution.objective == pytest.approx(36.0)
    np.testing.assert_allclose(solution.x, [2.0, 6.0], atol=1e-9)


def test_minimization_with_surplus_rows():
    """min 2x + 3y, x + y >= 4, x + 3y >= 6 -> 9 at (3, 1)."""
    lp = _lp([2, 3], [[1, 1], [1, 3]], (">=", ">="), [4, 6], sense="min")
    solution = lp_utils.solve(lp)
    assert solution.optimal
    assert solution.objective == pytest.approx(9.0)
    np.testing.assert_allclose(solution.x, [3.0, 1.0], atol=1e-9)


def test_equality_row():
    lp = _lp([1, 2], [[1, 1]], ("=",), [1])
    solution = lp_utils.solve(lp)
    assert solution.objective == pytest.approx(2.0)
    assert lp.max_violation(solution.x) < 1e-9


def test_negative_right_hand_side():
    """-x <= -2 is x >= 2."""
    lp = _lp([1], [[-1]], ("<=",), [-2], sense="min")
    assert lp_utils.solve(lp).objective == pytest.approx(2.0)


def test_infeasible_problem():
    lp = _lp([1], [[1], [1]], ("<=", ">="), [1, 2])
    assert lp_utils.solve(lp).status == lp_utils.INFEASIBLE


def test_unbounded_problem():
    lp = _lp([1, 0], [[1, -1]], ("<=",), [1])
    assert lp_utils.solve(lp).status == lp_utils.UNBOUNDED


def test_free_variable():
    """min x with x >= -3 and x free reaches -3."""
    lp = _lp([1], [[1]], (">=",), [-3], sense="min", lower=[-np.inf])
    solution = lp_utils.solve(lp)
    assert solution.optimal
    assert solution.objective == pytest.approx(-3.0)


def test_shifted_lower_bounds():
    """max -x - y with x >= 1, y >= 2 sits on the bounds."""
    lp = _lp([-1, -1], [[1, 1]], ("<=",), [10], lower=[1, 2])
    solution = lp_utils.solve(lp)
    assert solution.objective == pytest.approx(-3.0)
    np.testing.assert_allclose(solution.x, [1.0, 2.0], atol=1e-9)


def test_redundant_equalities():
    lp = _lp([1, 1], [[1, 1], [2, 2]], ("=", "="), [2, 4])
    solution = lp_utils.solve(lp)
    assert solution.optimal
    assert solution.objective == pytest.approx(2.0)


def test_cycling_example_terminates():
    """Beale's degenerate problem cycles under naive pivoting; optimum 1.25."""
    c = [0.75, -20, 0.5, -6]
    A = [[0.25, -8, -1, 9], [0.5, -12, -0.5, 3], [0, 0, 1, 0]]
    solution = lp_utils.solve(_lp(c, A, ("<=",) * 3, [0, 0, 1]))
    assert solution.optimal
    assert solution.objective == pytest.approx(1.25)


def test_iteration_cap():
    lp = _lp([3, 5], [[1, 0], [0, 2], [3, 2]], ("<=",) * 3, [4, 12, 18])
    with pytest.raises(IterationLimitError):
        lp_utils.solve(lp, lp_utils.LpTolerances(max_iterations=1))


def test_invalid_program_shapes():
    with pytest.raises(ParameterError):
        _lp([1, 2], [[1, 2, 3]], ("<=",), [1])
    with pytest.raises(ParameterError):
        _lp([1], [[1]], ("<",), [1])
    with pytest.raises(ParameterError):
        _lp([1], [[1]], ("<=",), [1], sense="maximize")


def _vertex_optimum(c, A, b):
    """max c.x over A x <= b, x >= 0 in two variables by enumerating vertices."""
    rows = np.vstack([A, -np.eye(2)])
    rhs = np.concatenate([b, np.zeros(2)])
    best = None
    for i, j in itertools.combinations(range(len(rows)), 2):
        M = rows[[i, j]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, rhs[[i, j]])
        if np.all(rows @ x <= rhs + 1e-9):
            value = float(c @ x)
            best = value if best is None else max(best, value)
    return best


def test_against_vertex_enumeration():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        c = rng.uniform(-1, 1, 2)
        A = rng.uniform(0.1, 1.0, (4, 2))
        b = rng.uniform(1, 10, 4)
        solution = lp_utils.solve(_lp(c, A, ("<=",) * 4, b))
        assert solution.optimal
        assert solution.objective == pytest.approx(_vertex_optimum(c, A, b), abs=1e-7)


def _vertices(G, h):
    """Every basic feasible point of G x <= h."""
    n = G.shape[1]
    for rows in itertools.combinations(range(len(G)), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            yield x


def test_integer_programs_match_vertex_enumeration():
    """200 feasible programs with integer data in [-5, 5], up to 6 variables and 6 rows."""
    rng = np.random.default_rng(11)
    feasible = infeasible = 0
    while feasible < 200:
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        A = rng.integers(-5, 6, (m, n)).astype(float)
        b = rng.integers(-5, 6, m).astype(float)
        c = rng.integers(-5, 6, n).astype(float)
        relations = tuple(str(r) for r in rng.choice(["<=", ">="], m)) + ("<=",)
        # sum(x) <= cap keeps every program bounded
        A_full = np.vstack([A, np.ones((1, n))])
        b_full = np.append(b, float(rng.integers(1, 6)))
        sense = "max" if (feasible + infeasible) % 2 == 0 else "min"

        flip = np.array([1.0 if r == "<=" else -1.0 for r in relations])
        G = np.vstack([A_full * flip[:, None], -np.eye(n)])
        h = np.concatenate([b_full * flip, np.zeros(n)])
        values = [float(c @ x) for x in _vertices(G, h)]

        solution = lp_utils.solve(_lp(c, A_full, relations, b_full, sense=sense))
        if not values:
            assert solution.status == lp_utils.INFEASIBLE, f"empty region solved as {solution.status}"
            infeasible += 1
            continue
        expected = max(values) if sense == "max" else min(values)
        assert solution.optimal, f"feasible program reported {solution.status}"
        assert solution.objective == pytest.approx(expected, abs=1e-7)
        feasible += 1
    assert infeasible > 0, "The generator should also produce empty regions"


def test_reported_optimum_must_satisfy_constraints(monkeypatch):
    lp = _lp([1], [[1]], ("<=",), [1])
    monkeypatch.setattr(lp_utils.LinearProgram, "max_violation", lambda self, x: 1.0)
    with pytest.raises(InternalError):
        lp_utils.solve(lp)


def test_against_scipy_on_random_programs():
    """200 bounded feasible programs with mixed row types and both senses."""
    rng = np.random.default_rng(7)
    for case in range(200):
        m, n = rng.integers(2, 7), rng.integers(2, 7)
        A = rng.uniform(0.1, 1.0, (m, n))
        b = rng.uniform(1, 10, m)
        c = rng.uniform(-1, 1, n)
        # a covering row that x = 0 violates keeps phase 1 busy
        A_full = np.vstack([A, np.ones((1, n))])
        b_full = np.concatenate([b, [0.1]])
        relations = ("<=",) * m + (">=",)
        sense = "max" if case % 2 == 0 else "min"

        solution = lp_utils.solve(_lp(c, A_full, relations, b_full, sense=sense))
        sign = -1.0 if sense == "max" else 1.0
        reference = linprog(sign * c, A_ub=np.vstack([A, -np.ones((1, n))]),
                            b_ub=np.concatenate([b, [-0.1]]), bounds=[(0, None)] * n, method="highs")
        assert reference.status == 0
        assert solution.optimal, f"case {case}: {solution.status}"
        assert solution.objective == pytest.approx(sign * reference.fun, abs=1e-7), f"case {case}"
        assert _lp(c, A_full, relations, b_full, sense=sense).max_violation(solution.x) < 1e-7


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
