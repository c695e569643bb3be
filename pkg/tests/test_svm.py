import numpy as np
import pytest

from clmkl import svm
from conftest import balanced_labels, random_psd
from oracles import brute_force_hinge, brute_force_svr


class TestSolveHinge:
    def test_two_point_hand_solution(self):
        K = np.array([[1.0, -1.0], [-1.0, 1.0]])
        sol = svm.solve_hinge(K, np.array([1.0, -1.0]), 10.0)
        assert np.allclose(sol.alpha, [0.5, 0.5], atol=1e-9)
        assert sol.bias == pytest.approx(0.0, abs=1e-9)
        assert sol.objective == pytest.approx(0.5, abs=1e-9)
        # the decision function is f(x) = x for the 1-d points +-1
        assert svm.decision_values(np.array([[0.3, -0.3]]), sol.alpha * [1, -1], sol.bias)[
            0
        ] == pytest.approx(0.3, abs=1e-8)

    def test_duplicated_points_keep_decisions(self, rng):
        x = np.array([[1.0, 0.2], [-0.5, 1.0], [0.3, -1.0], [-1.0, -0.4]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        K = x @ x.T
        sol = svm.solve_hinge(K, y, 2.0, tol=1e-9)
        x4 = np.vstack([x, x])
        y4 = np.concatenate([y, y])
        K4 = x4 @ x4.T
        sol4 = svm.solve_hinge(K4, y4, 2.0, tol=1e-9)
        _, ref4 = brute_force_hinge(K4, y4, 2.0)
        assert sol4.objective == pytest.approx(ref4, rel=1e-6, abs=1e-9)
        f1 = svm.decision_values(K, sol.alpha * y, sol.bias)
        f4 = svm.decision_values(K4[:4], sol4.alpha * y4, sol4.bias)
        assert np.allclose(f1, f4, atol=1e-6)

    def test_small_C_clips_all(self):
        K = np.eye(4)
        y = np.array([1.0, -1.0, 1.0, -1.0])
        C = 1e-4
        sol = svm.solve_hinge(K, y, C)
        assert np.allclose(sol.alpha, C)

    def test_kkt_on_free_vectors(self, rng):
        for _ in range(5):
            n = 20
            K = random_psd(n, rng)
            y = balanced_labels(n, rng)
            tol = 1e-8
            sol = svm.solve_hinge(K, y, 1.0, tol=tol)
            f = K @ (sol.alpha * y) + sol.bias
            free = (sol.alpha > 1e-12) & (sol.alpha < 1.0 - 1e-12)
            if free.any():
                assert np.max(np.abs(y[free] * f[free] - 1.0)) <= 10 * tol

    def test_objective_monotone_over_iterations(self, rng):
        K = random_psd(16, rng)
        y = balanced_labels(16, rng)
        trace = []
        svm.solve_hinge(K, y, 1.0, trace=trace)
        assert all(b >= a - 1e-12 for a, b in zip(trace, trace[1:]))

    def test_permutation_equivariance(self, rng):
        n = 14
        K = random_psd(n, rng)
        y = balanced_labels(n, rng)
        sol = svm.solve_hinge(K, y, 1.5, tol=1e-10)
        perm = rng.permutation(n)
        sol_p = svm.solve_hinge(K[np.ix_(perm, perm)], y[perm], 1.5, tol=1e-10)
        assert sol_p.objective == pytest.approx(sol.objective, rel=1e-8)
        assert sol_p.bias == pytest.approx(sol.bias, abs=1e-7)
        assert np.allclose(sol_p.alpha, sol.alpha[perm], atol=1e-7)

    def test_input_validation(self):
        K = np.eye(2)
        with pytest.raises(ValueError, match="classes"):
            svm.solve_hinge(K, np.array([1.0, 1.0]), 1.0)
        with pytest.raises(ValueError, match="positive"):
            svm.solve_hinge(K, np.array([1.0, -1.0]), 0.0)
        with pytest.raises(ValueError, match="\\+1/-1"):
            svm.solve_hinge(K, np.array([1.0, 2.0]), 1.0)
        with pytest.raises(ValueError, match="finite"):
            svm.solve_hinge(np.array([[np.inf, 0], [0, 1.0]]), np.array([1.0, -1.0]), 1.0)

    def test_budget_exhaustion_raises(self, rng):
        K = random_psd(10, rng)
        y = balanced_labels(10, rng)
        with pytest.raises(svm.SolverError, match="pair updates"):
            svm.solve_hinge(K, y, 1.0, tol=1e-12, max_pairs=2)


class TestSolveEpsInsensitive:
    def test_constant_target_inside_tube(self):
        K = np.eye(3)
        sol = svm.solve_eps_insensitive(K, np.full(3, 2.5), 1.0, eps=0.5)
        assert np.allclose(sol.alpha, 0.0, atol=1e-9)
        assert sol.bias == pytest.approx(2.5, abs=0.5 + 1e-9)
        # zero training error: every prediction within eps of the target
        f = svm.decision_values(K, sol.alpha, sol.bias)
        assert np.max(np.abs(f - 2.5)) <= 0.5 + 1e-9

    def test_two_point_interpolation(self):
        sol = svm.solve_eps_insensitive(np.eye(2), np.array([1.0, -1.0]), 100.0, 0.0)
        assert np.allclose(sol.alpha, [1.0, -1.0], atol=1e-7)
        f = svm.decision_values(np.eye(2), sol.alpha, sol.bias)
        assert np.allclose(f, [1.0, -1.0], atol=1e-7)

    def test_zero_targets(self, rng):
        K = random_psd(5, rng)
        sol = svm.solve_eps_insensitive(K, np.zeros(5), 1.0, 0.1)
        assert np.allclose(sol.alpha, 0.0, atol=1e-9)

    def test_complementarity(self, rng):
        # returned alpha is a plain difference; reconstructing the parts from
        # it must reproduce the objective (no overlapping mass)
        n = 12
        K = random_psd(n, rng)
        y = rng.standard_normal(n)
        sol = svm.solve_eps_insensitive(K, y, 0.7, 0.05, tol=1e-9)
        assert svm.dual_objective_eps(K, y, sol.alpha, 0.05) == pytest.approx(
            sol.objective
        )
        assert np.all(np.abs(sol.alpha) <= 0.7 + 1e-9)

    def test_negative_eps_rejected(self):
        with pytest.raises(ValueError, match="eps"):
            svm.solve_eps_insensitive(np.eye(2), np.zeros(2), 1.0, -0.1)

    def test_matches_oracle_small(self, rng):
        for _ in range(4):
            n = int(rng.integers(2, 6))
            K = random_psd(n, rng)
            y = rng.standard_normal(n)
            C = float(10 ** rng.uniform(-1, 1))
            eps = float(rng.uniform(0, 0.4))
            sol = svm.solve_eps_insensitive(K, y, C, eps, tol=1e-9)
            _, ref = brute_force_svr(K, y, C, eps)
            assert sol.objective == pytest.approx(ref, rel=1e-6, abs=1e-8)


class TestDualObjectives:
    def test_zero_alpha(self, rng):
        K = random_psd(4, rng)
        y = balanced_labels(4, rng)
        assert svm.dual_objective_hinge(K, y, np.zeros(4)) == 0.0
        assert svm.dual_objective_eps(K, rng.standard_normal(4), np.zeros(4), 0.1) == 0.0

    def test_hand_value(self):
        K = np.array([[1.0, -1.0], [-1.0, 1.0]])
        y = np.array([1.0, -1.0])
        assert svm.dual_objective_hinge(K, y, np.array([0.5, 0.5])) == pytest.approx(0.5)

    def test_solver_output_beats_zero(self, rng):
        K = random_psd(10, rng)
        y = balanced_labels(10, rng)
        sol = svm.solve_hinge(K, y, 1.0)
        assert sol.objective >= 0.0

    def test_infeasible_rejected(self):
        K = np.eye(2)
        y = np.array([1.0, -1.0])
        with pytest.raises(ValueError, match="infeasible"):
            svm.dual_objective_hinge(K, y, np.array([1.0, 0.0]))  # equality broken
        with pytest.raises(ValueError, match="infeasible"):
            svm.dual_objective_eps(K, y, np.array([0.5, 0.2]), 0.1)
