import numpy as np
import pytest

from coxscale.errors import DomainError, PreconditionError
from coxscale.model import (
    HistogramHazard,
    Subject,
    SurvivalDataset,
    TruthSpec,
    bin_index,
    cumulative_hazard,
    exposure_summary,
    log_likelihood,
)

FIVE = dict(
    y=np.array([0.12, 0.35, 0.41, 0.77, 0.93]),
    delta=np.array([1, 1, 0, 1, 1]),
    z=np.array([0.8, -0.3, 1.1, 0.2, -1.4]),
)


def random_data(n, p, seed):
    rng = np.random.default_rng(seed)
    return SurvivalDataset(rng.random(n), rng.integers(0, 2, n), rng.standard_normal((n, p)))


class TestSurvivalDataset:
    def test_shapes_and_counts(self):
        d = SurvivalDataset(**FIVE)
        assert (d.n, d.p, d.n_events) == (5, 1, 4)

    def test_rejects_out_of_range_time(self):
        with pytest.raises(DomainError):
            SurvivalDataset([1.2], [1], [[0.0]])

    def test_rejects_bad_indicator(self):
        with pytest.raises(DomainError):
            SurvivalDataset([0.5], [2], [[0.0]])

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(PreconditionError):
            SurvivalDataset([0.5, 0.6], [1], [[0.0], [1.0]])

    def test_from_subjects_requires_common_dimension(self):
        with pytest.raises(PreconditionError):
            SurvivalDataset.from_subjects([Subject(0.1, 1, (0.0,)), Subject(0.2, 0, (0.0, 1.0))])

    def test_subjects_round_trip(self):
        d = random_data(7, 3, 1)
        back = SurvivalDataset.from_subjects(d.subjects)
        np.testing.assert_array_equal(back.z, d.z)
        np.testing.assert_array_equal(back.y, d.y)

    def test_csv_round_trip_is_exact(self, tmp_path):
        d = random_data(25, 3, 2)
        d.to_csv(tmp_path / "d.csv")
        header = (tmp_path / "d.csv").read_text().splitlines()[0]
        assert header == "y,delta,z1,z2,z3"
        back = SurvivalDataset.from_csv(tmp_path / "d.csv")
        np.testing.assert_array_equal(back.y, d.y)
        np.testing.assert_array_equal(back.delta, d.delta)
        np.testing.assert_array_equal(back.z, d.z)

    def test_arrays_are_read_only(self):
        d = SurvivalDataset(**FIVE)
        with pytest.raises(ValueError):
            d.y[0] = 0.5


class TestHistogramHazard:
    def test_height_count_must_match_level(self):
        with pytest.raises(PreconditionError):
            HistogramHazard(2, np.ones(4))

    def test_rejects_nonpositive_heights(self):
        with pytest.raises(DomainError):
            HistogramHazard(0, [1.0, 0.0])

    def test_bin_convention_left_open(self):
        # 0.25 is the right edge of the first of four bins
        np.testing.assert_array_equal(bin_index([0.0, 0.25, 0.2500001, 1.0], 4), [0, 0, 1, 3])

    def test_evaluation_uses_bin_convention(self):
        h = HistogramHazard.from_bins([1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(h([0.0, 0.25, 0.26, 1.0]), [1.0, 1.0, 2.0, 4.0])


class TestCumulativeHazard:
    def test_unit_hazard(self):
        for level in range(4):
            assert cumulative_hazard(HistogramHazard.constant(level), 0.5) == pytest.approx(0.5)

    def test_zero_at_origin(self):
        h = HistogramHazard.from_bins(np.arange(1.0, 9.0))
        assert cumulative_hazard(h, 0.0) == 0.0

    def test_piecewise_truth_integral(self):
        # 0.4 and 0.6 are not dyadic, so the exact step function is checked through the truth object
        truth = TruthSpec([0.0], "piecewise")
        assert float(truth.cumulative(1.0)) == pytest.approx(2.3, abs=1e-14)

    def test_total_matches_sum(self):
        heights = np.array([0.5, 1.5, 2.0, 0.8])
        h = HistogramHazard.from_bins(heights)
        assert cumulative_hazard(h, 1.0) == pytest.approx(heights.sum() / 4)
        assert h.total == pytest.approx(heights.sum() / 4)

    def test_additive_over_bins(self):
        h = HistogramHazard.from_bins(np.random.default_rng(0).random(16) + 0.1)
        edges = h.edges
        inc = np.diff(h.cumulative(edges))
        np.testing.assert_allclose(inc, h.heights / 16, rtol=1e-13)

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            cumulative_hazard(HistogramHazard.constant(0), 1.5)


class TestLogLikelihood:
    def test_empty_dataset(self):
        assert log_likelihood(SurvivalDataset.empty(2), np.zeros(2), HistogramHazard.constant(1)) == 0.0

    def test_single_subject(self):
        d = SurvivalDataset([1.0], [1], [[0.0]])
        assert log_likelihood(d, [0.0], HistogramHazard.constant(2)) == pytest.approx(-1.0)

    def test_five_subjects_against_direct_sum(self):
        # frozen from an independent term-by-term loop
        d = SurvivalDataset(**FIVE)
        h = HistogramHazard.from_bins([0.5, 1.5, 2.0, 0.8])
        assert log_likelihood(d, [0.7], h) == pytest.approx(-3.938268952096206, abs=1e-12)

    def test_log_height_shift(self):
        d = random_data(30, 2, 3)
        h = HistogramHazard.from_bins(np.random.default_rng(4).random(8) + 0.2)
        theta = np.array([0.3, -0.4])
        c = 0.37
        base = log_likelihood(d, theta, h)
        shifted = log_likelihood(d, theta, HistogramHazard(h.level, h.heights * np.exp(c)))
        risk = h.cumulative(d.y) * np.exp(d.z @ theta)
        expected = d.n_events * c - (np.exp(c) - 1.0) * risk.sum()
        assert shifted - base == pytest.approx(expected, abs=1e-10)

    def test_theta_gradient_matches_finite_differences(self):
        d = random_data(40, 3, 5)
        h = HistogramHazard.from_bins(np.random.default_rng(6).random(8) + 0.2)
        theta = np.array([0.2, -0.1, 0.5])
        risk = h.cumulative(d.y) * np.exp(d.z @ theta)
        grad = d.z.T @ (d.delta - risk)
        step = 1e-5
        for j in range(3):
            e = np.zeros(3)
            e[j] = step
            fd = (log_likelihood(d, theta + e, h) - log_likelihood(d, theta - e, h)) / (2 * step)
            assert fd == pytest.approx(grad[j], rel=1e-6)

    def test_permutation_invariance(self):
        d = random_data(20, 2, 7)
        h = HistogramHazard.from_bins(np.full(4, 1.3))
        perm = np.random.default_rng(8).permutation(20)
        assert log_likelihood(d.take(perm), [0.1, 0.2], h) == pytest.approx(
            log_likelihood(d, [0.1, 0.2], h), abs=1e-12)


class TestExposureSummary:
    def test_full_follow_up(self):
        s = exposure_summary(SurvivalDataset([1.0], [0], [[0.0]]), 0)
        np.testing.assert_allclose(s.exposure, [[0.5, 0.5]])

    def test_partial_bin(self):
        s = exposure_summary(SurvivalDataset([0.3], [1], [[0.0]]), 1)
        np.testing.assert_allclose(s.exposure, [[0.25, 0.05, 0.0, 0.0]], atol=1e-15)
        np.testing.assert_array_equal(s.d, [0, 1, 0, 0])

    def test_partition_identity(self):
        d = random_data(100, 1, 9)
        for level in (0, 3, 6):
            s = exposure_summary(d, level)
            np.testing.assert_allclose(s.exposure.sum(axis=1), d.y, atol=1e-12)
            assert s.d.sum() == d.n_events
            assert np.all(s.exposure >= 0)


class TestTruthSpec:
    def test_smooth_a_integral(self):
        assert float(TruthSpec([-0.5]).cumulative(1.0)) == pytest.approx(1.19325, abs=1e-12)

    def test_cumulative_matches_quadrature(self):
        from scipy.integrate import quad
        for name in ("smooth-a", "smooth-b", "piecewise"):
            t = TruthSpec([0.0], name)
            for x in (0.13, 0.5, 0.97, 1.0):
                ref = quad(lambda u: float(t.hazard(u)), 0, x, points=[0.4, 0.6] if x > 0.6 else None)[0]
                assert float(t.cumulative(x)) == pytest.approx(ref, abs=1e-10)

    def test_tabulated_is_exact_for_linear_hazard(self):
        t = TruthSpec.tabulated([0.0, 0.5, 2.0], [1.0, 2.0, 5.0], [0.0])
        # integral of the linear interpolant
        assert float(t.cumulative(0.5)) == pytest.approx(0.75)
        assert float(t.cumulative(1.0)) == pytest.approx(0.75 + 0.5 * (2.0 + 3.0) / 2)

    def test_censoring_alias(self):
        assert TruthSpec([0.0], censoring="admin-plus-uniform").censoring == "admin-unif"

    def test_unknown_baseline(self):
        with pytest.raises(PreconditionError):
            TruthSpec([0.0], "nope")
