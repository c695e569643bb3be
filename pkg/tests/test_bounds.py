import math

import numpy as np
import pytest

from clmkl import bounds
from conftest import random_likelihoods


def make_inputs(c, D=1.0, p=2.0, B=1.0, diag=None, **kw):
    return bounds.BoundInputs(likelihoods=c, D=D, p=p, B=B, kernel_diagonals=diag, **kw)


class TestOptimalT:
    def test_single_kernel(self):
        assert bounds.optimal_t(1, 2.0) == 2.0

    def test_interior_point(self):
        # p = 1 caps the upper end far away; M = e^2 gives t* = 4
        M = int(round(math.e**2))
        t = bounds.optimal_t(M, 1.0)
        assert t == pytest.approx(2.0 * math.log(M))

    def test_clamped_to_upper(self):
        # p = 2 -> upper end 4; with 2 ln M > 4 the endpoint wins
        assert bounds.optimal_t(16, 2.0) == 4.0

    def test_clamped_to_lower(self):
        assert bounds.optimal_t(2, 2.0) == 2.0  # 2 ln 2 < 2

    def test_dense_grid_agreement(self):
        for M in (2, 3, 8, 32):
            for p in (1.0, 1.33, 2.0, 4.0):
                t_star = bounds.optimal_t(M, p)
                ts = np.linspace(2.0, min(bounds.t_upper(p), 200.0), 20001)
                vals = ts * M ** (2.0 / ts)
                assert t_star * M ** (2.0 / t_star) <= vals.min() + 1e-9


class TestRegime:
    def test_log_regime_for_p1(self):
        assert bounds.regime(100, 1.0) == bounds.REGIME_LOG

    def test_polynomial_regime(self):
        assert bounds.regime(16, 2.0) == bounds.REGIME_POLY

    def test_threshold_matches_exponent_rule(self):
        # p <= log M / (log M - 1) is the log regime
        M = 20
        threshold = math.log(M) / (math.log(M) - 1.0)
        assert bounds.regime(M, threshold * 0.999) == bounds.REGIME_LOG
        assert bounds.regime(M, threshold * 1.001) == bounds.REGIME_POLY


class TestRademacherBounds:
    def test_single_kernel_exact_formula(self, rng):
        n, l = 10, 2
        c = random_likelihoods(n, l, rng)
        diag = rng.uniform(0.5, 1.0, (1, n))
        inputs = make_inputs(c, D=2.0, p=2.0, diag=diag)
        val, t = bounds.rademacher_bound_exact(inputs)
        assert t == 2.0
        expected = math.sqrt(2.0) / n * math.sqrt(2.0 * float((c**2 * diag[0][:, None]).sum()))
        assert val == pytest.approx(expected)

    def test_hard_vs_uniform_sqrt_l(self, rng):
        n, l, M = 40, 4, 5
        hard = np.zeros((n, l))
        hard[np.arange(n), np.arange(n) % l] = 1.0
        uniform = np.full((n, l), 1.0 / l)
        b_hard, _ = bounds.rademacher_bound_simplified(make_inputs(hard), M)
        b_unif, _ = bounds.rademacher_bound_simplified(make_inputs(uniform), M)
        assert b_hard / b_unif == pytest.approx(math.sqrt(l), rel=1e-12)

    def test_exact_below_simplified_under_B(self, rng):
        for _ in range(10):
            n, l, M = 15, 3, 4
            c = random_likelihoods(n, l, rng)
            diag = rng.uniform(0.2, 1.0, (M, n))
            inputs = make_inputs(c, D=1.5, p=1.33, B=1.0, diag=diag)
            exact, _ = bounds.rademacher_bound_exact(inputs)
            simplified, _ = bounds.rademacher_bound_simplified(inputs)
            assert exact <= simplified + 1e-12

    def test_diagonal_above_B_reported(self, rng):
        c = random_likelihoods(5, 2, rng)
        diag = np.full((2, 5), 1.5)
        with pytest.raises(ValueError, match="exceeds"):
            bounds.rademacher_bound_simplified(make_inputs(c, B=1.0, diag=diag))

    def test_doubling_n_scales_inverse_sqrt2(self, rng):
        c = random_likelihoods(12, 3, rng)
        c2 = np.vstack([c, c])
        b1, _ = bounds.rademacher_bound_simplified(make_inputs(c), M=4)
        b2, _ = bounds.rademacher_bound_simplified(make_inputs(c2), M=4)
        assert b2 == pytest.approx(b1 / math.sqrt(2.0))

    def test_p1_log_regime_value(self):
        # M = e^2, uniform single cluster: t* = 4 and t* M^(2/t*) = 4e
        M = int(round(math.e**2))
        n = 50
        c = np.ones((n, 1))
        inputs = make_inputs(c, D=1.0, p=1.0, B=1.0)
        val, t = bounds.rademacher_bound_simplified(inputs, M)
        assert t == pytest.approx(2.0 * math.log(M))
        assert val == pytest.approx(math.sqrt(t * M ** (2.0 / t) * n) / n)

    def test_permutation_invariance(self, rng):
        n, l, M = 12, 3, 4
        c = random_likelihoods(n, l, rng)
        diag = rng.uniform(0.2, 1.0, (M, n))
        base, _ = bounds.rademacher_bound_exact(make_inputs(c, diag=diag))
        pp = rng.permutation(n)
        pk = rng.permutation(M)
        permuted, _ = bounds.rademacher_bound_exact(
            make_inputs(c[pp], diag=diag[np.ix_(pk, pp)])
        )
        assert permuted == pytest.approx(base, rel=1e-12)

    def test_exact_needs_diagonals(self, rng):
        with pytest.raises(ValueError, match="diagonals"):
            bounds.rademacher_bound_exact(make_inputs(random_likelihoods(4, 2, rng)))


class TestGeneralizationBound:
    def test_middle_term_arithmetic(self, rng):
        c = np.ones((50, 1))
        inputs = make_inputs(c, delta=0.5, loss_bound=1.0)
        val = bounds.generalization_bound(inputs, 0.0, M=1)
        rad, _ = bounds.rademacher_bound_simplified(inputs, 1)
        assert val == pytest.approx(math.sqrt(math.log(4.0) / 100.0) + 2 * rad)

    def test_zero_risk_is_two_terms(self, rng):
        c = random_likelihoods(30, 2, rng)
        inputs = make_inputs(c, delta=0.1)
        rad, _ = bounds.rademacher_bound_simplified(inputs, 3)
        conf = 1.0 * math.sqrt(math.log(20.0) / 60.0)
        assert bounds.generalization_bound(inputs, 0.0, 3) == pytest.approx(conf + 2 * rad)

    def test_monotone_in_n(self, rng):
        vals = []
        for n in (20, 40, 80):
            c = np.full((n, 2), 0.5)
            vals.append(bounds.generalization_bound(make_inputs(c), 0.3, M=4))
        assert vals[0] > vals[1] > vals[2]

    def test_invalid_inputs(self, rng):
        c = random_likelihoods(5, 2, rng)
        with pytest.raises(ValueError, match="delta"):
            make_inputs(c, delta=2.0)
        with pytest.raises(ValueError, match="positive"):
            make_inputs(c, D=0.0)
        with pytest.raises(ValueError, match="nonnegative"):
            bounds.generalization_bound(make_inputs(c), -0.1, M=2)

    def test_report_fields(self, rng):
        c = random_likelihoods(25, 2, rng)
        report = bounds.bound_report(make_inputs(c, p=1.0), 0.2, M=10)
        assert report.rademacher_bound > 0
        assert 2.0 <= report.optimal_t <= bounds.t_upper(1.0)
        assert report.gen_bound > report.rademacher_bound
        assert report.regime == bounds.REGIME_LOG


class TestHypothesisRadius:
    def test_matches_block_norm_regularizer(self, rng):
        from clmkl.train import block_norm_regularizer

        nsq = rng.uniform(0.1, 2.0, (3, 4))
        for p in (1.0, 1.33, 2.0):
            assert bounds.hypothesis_radius(nsq, p) == pytest.approx(
                2.0 * block_norm_regularizer(nsq, p)
            )
