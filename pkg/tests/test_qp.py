import numpy as np
import pytest

from vrbform.chance import ScaleConstraintSet
from vrbform.qp import (STATUS_INFEASIBLE_FALLBACK, STATUS_OPTIMAL,
                        ProjectionProblem, project_scale_derivative)


def brute_force(A, bt, target):
    """Enumerate all active subsets, solve the equality-constrained least
    squares for each, and return the feasible candidate with the smallest
    objective.  Independent of the active-set implementation."""
    m = A.shape[0]
    candidates = [np.asarray(target, dtype=float)]
    subsets = [[i] for i in range(m)] + [[i, j] for i in range(m)
                                         for j in range(i + 1, m)]
    for sub in subsets:
        Aw, bw = A[sub], bt[sub]
        gram = Aw @ Aw.T
        rhs = Aw @ target - bw
        nu, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
        d = target - Aw.T @ nu
        if np.max(np.abs(Aw @ d - bw)) < 1e-8:
            candidates.append(d)
    best, best_obj = None, np.inf
    for cand in candidates:
        if m and np.min(A @ cand - bt) < -1e-9:
            continue
        obj = 0.5 * float(np.sum((np.asarray(target) - cand) ** 2))
        if obj < best_obj:
            best, best_obj = cand, obj
    return best, best_obj


def make_problem(A, b, s, target):
    rows = ScaleConstraintSet(np.asarray(A, dtype=float),
                              np.asarray(b, dtype=float), s)
    return ProjectionProblem(target=target, current_scale=s, rows=rows)


class TestExamples:
    def test_interior_target_unchanged(self):
        prob = make_problem([[1.0, 0.0]], [0.2], [1.0, 1.0], [0.1, -0.3])
        sol = project_scale_derivative(prob)
        np.testing.assert_allclose(sol.delta, [0.1, -0.3])
        assert sol.active_rows == []
        assert sol.status == STATUS_OPTIMAL

    def test_single_halfspace_projection(self):
        prob = make_problem([[1.0, 0.0]], [0.45], [1.0, 1.0], [-1.0, 0.0])
        sol = project_scale_derivative(prob)
        np.testing.assert_allclose(sol.delta, [-0.55, 0.0], atol=1e-12)
        assert sol.active_rows == [0]

    def test_vertex_solution_matches_enumeration(self):
        A = np.array([[1.0, 0.0], [0.0, 1.0]])
        s = np.array([1.0, 1.0])
        b = np.array([0.5, 0.4])
        target = np.array([-2.0, -3.0])
        prob = make_problem(A, b, s, target)
        sol = project_scale_derivative(prob)
        np.testing.assert_allclose(sol.delta, [-0.5, -0.6], atol=1e-12)
        ref, ref_obj = brute_force(A, b - A @ s, target)
        assert abs(0.5 * np.sum((target - sol.delta) ** 2) - ref_obj) < 1e-12

    def test_no_rows(self):
        rows = ScaleConstraintSet(np.zeros((0, 2)), np.zeros(0), [1.0, 1.0])
        sol = project_scale_derivative(ProjectionProblem([0.3, 0.4], [1.0, 1.0], rows))
        np.testing.assert_allclose(sol.delta, [0.3, 0.4])


class TestOracleEquivalence:
    def test_random_problems_match_brute_force(self):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            m = int(rng.integers(1, 7))
            s = rng.uniform(0.2, 2.0, size=2)
            A = rng.normal(size=(m, 2))
            norms = np.linalg.norm(A, axis=1)
            A = A[norms > 1e-6]
            if A.shape[0] == 0:
                continue
            b = A @ s - rng.uniform(0.0, 1.0, size=A.shape[0])
            target = rng.normal(scale=1.5, size=2)
            sol = project_scale_derivative(make_problem(A, b, s, target))
            assert sol.status == STATUS_OPTIMAL
            bt = b - A @ s
            assert np.min(A @ (s + sol.delta) - b) >= -1e-9
            _, ref_obj = brute_force(A, bt, target)
            obj = 0.5 * float(np.sum((target - sol.delta) ** 2))
            assert abs(obj - ref_obj) < 1e-8

    def test_duplicate_rows(self):
        A = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        s = np.array([1.0, 1.0])
        b = np.array([0.5, 0.5, 0.3])
        target = np.array([-3.0, -3.0])
        sol = project_scale_derivative(make_problem(A, b, s, target))
        np.testing.assert_allclose(sol.delta, [-0.5, -0.7], atol=1e-10)


class TestProperties:
    def test_idempotent(self):
        rng = np.random.default_rng(78)
        for _ in range(100):
            m = int(rng.integers(1, 6))
            s = rng.uniform(0.2, 2.0, size=2)
            A = rng.normal(size=(m, 2))
            b = A @ s - rng.uniform(0.0, 1.0, size=m)
            target = rng.normal(scale=1.5, size=2)
            first = project_scale_derivative(make_problem(A, b, s, target))
            second = project_scale_derivative(make_problem(A, b, s, first.delta))
            np.testing.assert_allclose(second.delta, first.delta, atol=1e-9)

    def test_non_expansive(self):
        rng = np.random.default_rng(79)
        for _ in range(200):
            m = int(rng.integers(1, 6))
            s = rng.uniform(0.2, 2.0, size=2)
            A = rng.normal(size=(m, 2))
            b = A @ s - rng.uniform(0.0, 1.0, size=m)
            t1 = rng.normal(scale=1.5, size=2)
            t2 = rng.normal(scale=1.5, size=2)
            d1 = project_scale_derivative(make_problem(A, b, s, t1)).delta
            d2 = project_scale_derivative(make_problem(A, b, s, t2)).delta
            assert np.linalg.norm(d1 - d2) <= np.linalg.norm(t1 - t2) + 1e-9

    def test_kkt_certificate(self):
        rng = np.random.default_rng(80)
        for _ in range(200):
            m = int(rng.integers(1, 6))
            s = rng.uniform(0.2, 2.0, size=2)
            A = rng.normal(size=(m, 2))
            b = A @ s - rng.uniform(0.0, 1.0, size=m)
            target = rng.normal(scale=1.5, size=2)
            sol = project_scale_derivative(make_problem(A, b, s, target))
            grad = sol.delta - target
            if not sol.active_rows:
                assert np.linalg.norm(grad) < 1e-8
            else:
                Aw = A[sol.active_rows]
                lam, *_ = np.linalg.lstsq(Aw.T, grad, rcond=None)
                assert np.min(lam) >= -1e-8
                assert np.linalg.norm(Aw.T @ lam - grad) < 1e-8


class TestInfeasible:
    def test_mutually_infeasible_freezes(self):
        # x >= 1 and -x >= 1 cannot both hold.
        A = np.array([[1.0, 0.0], [-1.0, 0.0]])
        s = np.array([1.0, 1.0])
        b = np.array([s[0] + 1.0, -s[0] + 1.0])
        sol = project_scale_derivative(make_problem(A, b, s, [0.5, 0.5]))
        assert sol.status == STATUS_INFEASIBLE_FALLBACK
        np.testing.assert_array_equal(sol.delta, [0.0, 0.0])

    def test_infeasible_start_feasible_set(self):
        # Current point violates a row but the set is nonempty: the solver
        # must still find the true projection.
        A = np.array([[1.0, 0.0]])
        s = np.array([0.2, 1.0])
        b = np.array([0.5])  # requires s_x + dx >= 0.5, violated at dx=0
        target = np.array([0.0, 0.0])
        sol = project_scale_derivative(make_problem(A, b, s, target))
        assert sol.status == STATUS_OPTIMAL
        np.testing.assert_allclose(sol.delta, [0.3, 0.0], atol=1e-12)
