import json
import math

import numpy as np
import pytest
from scipy import stats

from coxscale.bands import (
    DEFAULT_GRID,
    Band,
    curve_from_draw,
    curves_from_draws,
    empirical_quantile,
    fixed_width_credible_band,
    joint_credible_regions,
)
from coxscale.errors import DegenerateRegionError, PreconditionError
from coxscale.model import HistogramHazard


def shifted_curves(m=1000, seed=0, grid=DEFAULT_GRID):
    rng = np.random.default_rng(seed)
    base = 1 - 0.5 * grid
    return base + rng.standard_normal(m)[:, None] * 0.1, base


class TestFixedWidthBand:
    def test_identical_draws_give_zero_width(self):
        curves = np.tile(np.exp(-DEFAULT_GRID), (200, 1))
        band = fixed_width_credible_band(curves)
        assert band.radius == 0.0 and band.area() == 0.0

    def test_constant_shift_radius(self):
        # curves = base + s: sup distance is |s − mean(s)|
        curves, base = shifted_curves()
        band = fixed_width_credible_band(curves, 0.95, target="cumhaz")
        s = curves[:, 0] - base[0]
        assert band.radius == pytest.approx(empirical_quantile(np.abs(s - s.mean()), 0.95), rel=1e-12)
        np.testing.assert_allclose(band.upper - band.lower, 2 * band.radius, rtol=1e-12)
        assert band.area() == pytest.approx(2 * band.radius, rel=1e-12)

    def test_contains_level_fraction_of_draws(self):
        curves, _ = shifted_curves(2000, 1)
        band = fixed_width_credible_band(curves, 0.9, target="cumhaz")
        inside = np.all((curves >= band.lower) & (curves <= band.upper), axis=1)
        assert inside.mean() == pytest.approx(0.9, abs=1e-3)

    def test_survival_clipping(self):
        curves = np.tile(np.exp(-DEFAULT_GRID), (200, 1))
        curves += np.linspace(-0.3, 0.3, 200)[:, None]
        band = fixed_width_credible_band(curves)
        assert band.upper.max() <= 1.0 and band.lower.min() >= 0.0
        assert band.area() < band.area_preclip

    def test_radius_monotone_in_level(self):
        curves, _ = shifted_curves(500, 2)
        r = [fixed_width_credible_band(curves, lv, target="cumhaz").radius for lv in (0.5, 0.9, 0.99)]
        assert r[0] <= r[1] <= r[2]

    def test_needs_enough_draws(self):
        with pytest.raises(PreconditionError):
            fixed_width_credible_band(np.ones((50, DEFAULT_GRID.size)))

    def test_grid_mismatch(self):
        with pytest.raises(PreconditionError):
            fixed_width_credible_band(np.ones((200, 10)))

    def test_unknown_target(self):
        with pytest.raises(PreconditionError):
            fixed_width_credible_band(np.ones((200, DEFAULT_GRID.size)), target="hazard")


class TestCovers:
    def test_cover_and_miss(self):
        g = np.linspace(0, 1, 5)
        band = Band(g, np.full(5, 0.5), np.full(5, 0.4), np.full(5, 0.6), 0.95)
        assert band.covers(np.full(5, 0.6))
        assert not band.covers(np.array([0.5, 0.5, 0.61, 0.5, 0.5]))

    def test_zero_width_band_on_truth(self):
        g = np.linspace(0, 1, 9)
        band = Band(g, np.exp(-g), np.exp(-g), np.exp(-g), 0.95)
        assert band.covers(np.exp(-g)) and band.area() == 0.0

    def test_grid_must_match(self):
        g = np.linspace(0, 1, 5)
        band = Band(g, g, g, g, 0.95)
        with pytest.raises(PreconditionError):
            band.covers(g, np.linspace(0, 1, 6))

    def test_shape_check(self):
        with pytest.raises(PreconditionError):
            Band(np.zeros(3), np.zeros(3), np.zeros(2), np.zeros(3), 0.95)

    def test_csv_round_trip(self, tmp_path):
        curves, _ = shifted_curves(200, 3)
        band = fixed_width_credible_band(curves)
        band.to_csv(tmp_path / "b.csv")
        back = Band.from_csv(tmp_path / "b.csv")
        np.testing.assert_array_equal(back.upper, band.upper)
        np.testing.assert_array_equal(back.grid, band.grid)


class TestCurves:
    def test_vectorised_matches_single(self):
        rng = np.random.default_rng(4)
        heights = rng.random((6, 8)) + 0.5
        thetas = rng.standard_normal((6, 2))
        z = np.array([0.3, -1.0])
        for target in ("cumhaz", "survival"):
            many = curves_from_draws(thetas, heights, z, target)
            for i in range(6):
                one = curve_from_draw(thetas[i], HistogramHazard.from_bins(heights[i]), z, target)
                np.testing.assert_allclose(many[i], one, rtol=1e-12, atol=1e-15)

    def test_unit_hazard(self):
        s = curves_from_draws([[0.0]], np.ones((1, 4)), [0.0])
        np.testing.assert_allclose(s[0], np.exp(-DEFAULT_GRID), rtol=1e-13)


class TestJointRegions:
    def test_gaussian_cloud(self):
        rng = np.random.default_rng(5)
        cov = np.array([[1.0, 0.3], [0.3, 2.0]])
        pairs = rng.multivariate_normal([0.5, 1.0], cov, 20_000)
        r = joint_credible_regions(pairs, 0.95)
        assert r.chi2 == pytest.approx(-2 * math.log(0.05))
        expected = math.pi * r.chi2 * math.sqrt(np.linalg.det(cov))
        assert r.ellipse_area == pytest.approx(expected, rel=0.03)
        # each marginal interval at 97.5%
        z = stats.norm.ppf(1 - 0.025 / 2)
        np.testing.assert_allclose(r.rect_upper - r.rect_lower, 2 * z * np.sqrt(np.diag(cov)), rtol=0.03)
        assert r.rect_area == pytest.approx(np.prod(r.rect_upper - r.rect_lower))

    def test_ellipse_axes(self):
        rng = np.random.default_rng(6)
        pairs = rng.standard_normal((5000, 2)) * [1.0, 3.0]
        semi, angle = joint_credible_regions(pairs).ellipse_axes()
        assert semi[1] / semi[0] == pytest.approx(3.0, rel=0.05)
        assert abs(abs(angle) - math.pi / 2) < 0.05

    def test_json(self, tmp_path):
        pairs = np.random.default_rng(7).standard_normal((300, 2))
        joint_credible_regions(pairs).to_json(tmp_path / "r.json")
        d = json.loads((tmp_path / "r.json").read_text())
        assert set(d) >= {"ellipse_area", "rect_area", "mean", "cov"}

    def test_collinear_cloud(self):
        x = np.random.default_rng(8).standard_normal(200)
        with pytest.raises(DegenerateRegionError):
            joint_credible_regions(np.column_stack([x, 2 * x]))

    def test_needs_enough_draws(self):
        with pytest.raises(PreconditionError):
            joint_credible_regions(np.zeros((10, 2)))
