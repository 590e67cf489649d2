import math

import numpy as np
import pytest

from coxscale.errors import DomainError, PreconditionError
from coxscale.model import HistogramHazard, TruthSpec
from coxscale.multiscale import (
    HaarCoefficients,
    cutoff,
    default_weights,
    haar_basis_on_bins,
    haar_forward,
    haar_inverse,
    haar_matrix,
    hellinger_rate,
    multiscale_norm,
    sup_norm_distance,
)


class TestHaarTransform:
    def test_constant_heights(self):
        c = haar_forward(np.full(16, 2.5))
        assert c.scaling == pytest.approx(2.5)
        for d in c.details:
            np.testing.assert_allclose(d, 0.0, atol=1e-15)

    def test_shapes(self):
        c = haar_forward(np.arange(8.0))
        assert c.L == 2 and c.size == 8
        assert [len(d) for d in c.details] == [1, 2, 4]

    @pytest.mark.parametrize("K", [2, 4, 16, 64, 1024])
    def test_round_trip(self, K):
        x = np.random.default_rng(K).standard_normal(K)
        np.testing.assert_allclose(haar_inverse(haar_forward(x)), x, atol=1e-12)

    @pytest.mark.parametrize("L", [0, 1, 3, 5])
    def test_pyramid_matches_dense_matrix(self, L):
        x = np.random.default_rng(L).random(2 ** (L + 1))
        np.testing.assert_allclose(haar_forward(x).to_vector(), haar_matrix(L) @ x, atol=1e-14)

    @pytest.mark.parametrize("L", [0, 2, 4])
    def test_scaled_matrix_is_orthogonal(self, L):
        K = 2 ** (L + 1)
        Q = 2.0 ** ((L + 1) / 2) * haar_matrix(L)
        np.testing.assert_allclose(Q @ Q.T, np.eye(K), atol=1e-13)

    def test_basis_on_bins_inverts(self):
        L = 3
        v = np.random.default_rng(1).standard_normal(16)
        np.testing.assert_allclose(haar_basis_on_bins(L) @ v, haar_inverse(HaarCoefficients.from_vector(v)),
                                   atol=1e-13)

    def test_coefficients_are_inner_products(self):
        # <h, psi_{0,0}> with psi_{0,0} = 1 on [0, 1/2) and -1 after
        h = np.array([1.0, 3.0, 2.0, 6.0])
        c = haar_forward(h)
        assert c.scaling == pytest.approx(h.mean())
        assert c.details[0][0] == pytest.approx((1.0 + 3.0) / 4 - (2.0 + 6.0) / 4)

    def test_linearity(self):
        rng = np.random.default_rng(5)
        x, y = rng.standard_normal(32), rng.standard_normal(32)
        lhs = haar_forward(2.0 * x - 0.5 * y).to_vector()
        rhs = (2.0 * haar_forward(x) + haar_forward(y) * -0.5).to_vector()
        np.testing.assert_allclose(lhs, rhs, atol=1e-13)

    def test_vector_round_trip(self):
        v = np.arange(16.0)
        np.testing.assert_array_equal(HaarCoefficients.from_vector(v).to_vector(), v)

    @pytest.mark.parametrize("K", [0, 1, 3, 12])
    def test_rejects_non_dyadic_length(self, K):
        with pytest.raises(DomainError):
            haar_forward(np.ones(K))


class TestCutoff:
    def test_n_200(self):
        assert cutoff(200, 0.5) == 3

    def test_exact_power_of_two(self):
        # (e^2 / 2)^(1 / (2 beta + 1)) = 2 when 2 beta + 1 = log2(e^2 / 2)
        beta = (math.log2(math.e ** 2 / 2) - 1) / 2
        assert cutoff(math.e ** 2, beta) == 1

    def test_half_way_goes_down(self):
        # log2(target) = 2.5 exactly: 2^2 and 2^3 straddle, smaller level wins
        n = 1000.0
        beta = (math.log2(n / math.log(n)) / 2.5 - 1) / 2
        assert cutoff(n, beta) == 2

    def test_monotone_in_n(self):
        ns = np.unique(np.logspace(2, 6, 400).astype(int))
        levels = [cutoff(int(n), 0.5) for n in ns]
        assert np.all(np.diff(levels) >= 0)

    def test_closest_power_bracketing(self):
        for n in np.unique(np.logspace(1, 6, 300).astype(int)):
            target = (n / math.log(n)) ** 0.5
            L = cutoff(int(n), 0.5)
            if L > 0:
                assert target / math.sqrt(2) - 1e-9 <= 2 ** L <= target * math.sqrt(2) + 1e-9

    @pytest.mark.parametrize("n, beta", [(1, 0.5), (100, 0.0), (100, -1.0)])
    def test_preconditions(self, n, beta):
        with pytest.raises(PreconditionError):
            cutoff(n, beta)

    def test_hellinger_rate_decreases(self):
        r = [hellinger_rate(n, 0.5) for n in (200, 800, 3200)]
        assert r[0] > r[1] > r[2]
        assert hellinger_rate(100, 0.5) == pytest.approx((math.log(100) / 100) ** 0.25)


class TestSupNorm:
    def test_aligned_piecewise_is_exact(self):
        # 0.4 and 0.6 are not dyadic, so use a dyadic-breakpoint truth
        truth = TruthSpec.tabulated([0, 0.5, 0.5 + 1e-12, 1], [3, 3, 2, 2], [0.0])
        h = HistogramHazard.from_bins([3.0, 3.0, 2.0, 2.0])
        grid = np.linspace(0, 1, 101)
        grid = grid[np.abs(grid - 0.5) > 1e-9]
        assert sup_norm_distance(h, truth.hazard, grid) < 1e-9

    def test_constant_offset(self):
        truth = TruthSpec([0.0])
        grid = np.linspace(0, 1, 257)
        vals = truth.hazard(grid)
        assert sup_norm_distance(vals + 0.1, truth.hazard, grid, [0.0], [0.0], [0.7]) == pytest.approx(0.1)

    def test_conditional_scaling(self):
        grid = np.linspace(0, 1, 9)
        h = HistogramHazard.constant(1)
        d = sup_norm_distance(h, np.ones(9), grid, theta=[0.5], theta0=[0.0], z=[2.0])
        assert d == pytest.approx(math.e - 1.0)

    def test_dense_grid_agrees(self):
        h = HistogramHazard.from_bins(np.random.default_rng(2).random(16) + 1)
        truth = TruthSpec([0.0], "smooth-b")
        coarse = np.unique(np.concatenate([np.linspace(0, 1, 4097), h.edges]))
        dense = np.linspace(0, 1, 100_001)
        a = sup_norm_distance(h, truth.hazard, coarse)
        b = sup_norm_distance(h, truth.hazard, dense)
        assert a == pytest.approx(b, abs=5e-3)

    def test_grid_mismatch(self):
        with pytest.raises(PreconditionError):
            sup_norm_distance(np.ones(3), np.ones(4), np.linspace(0, 1, 4))


class TestMultiscaleNorm:
    def test_zero(self):
        assert multiscale_norm(HaarCoefficients.from_vector(np.zeros(8))) == 0.0

    def test_single_detail(self):
        v = np.zeros(8)
        v[1 + 1 + 2 + 1] = 3.0  # c_{2,1}
        assert multiscale_norm(HaarCoefficients.from_vector(v), [1.0, 1.0, 2.0]) == pytest.approx(1.5)

    def test_default_weights(self):
        np.testing.assert_array_equal(default_weights(3), [1, 1, 2, 3])

    def test_dominated_by_l2(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            v = rng.standard_normal(32)
            assert multiscale_norm(HaarCoefficients.from_vector(v)) <= np.linalg.norm(v) + 1e-15

    def test_rejects_small_weights(self):
        with pytest.raises(PreconditionError):
            multiscale_norm(HaarCoefficients.from_vector(np.ones(4)), [1.0, 0.5])
