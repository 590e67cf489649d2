"""Credible and confidence bands, joint credible regions, and their metrics.

All curves live on a shared time grid.  The default grid has 257 equispaced
points on ``[0, 1]`` so that every dyadic bin boundary up to ``K = 256`` is a
grid point.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from .errors import DegenerateRegionError, PreconditionError
from .model import HistogramHazard, bin_overlap

__all__ = [
    "DEFAULT_GRID",
    "default_grid",
    "Band",
    "empirical_quantile",
    "curve_from_draw",
    "curves_from_draws",
    "fixed_width_credible_band",
    "covers",
    "area",
    "JointRegions",
    "joint_credible_regions",
]


def default_grid(points: int = 257) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


DEFAULT_GRID = default_grid()
DEFAULT_GRID.setflags(write=False)

TARGETS = ("cumhaz", "survival")


def _check_target(target: str) -> None:
    if target not in TARGETS:
        raise PreconditionError(f"target must be one of {TARGETS}, got {target!r}")


@dataclass(frozen=True, eq=False)
class Band:
    """A simultaneous band ``lower <= curve <= upper`` on ``grid``.

    ``radius`` is the half-width before any clipping, when the band was
    built with a constant half-width.
    """

    grid: np.ndarray
    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    target: str = "survival"
    radius: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = {np.shape(a) for a in (self.grid, self.center, self.lower, self.upper)}
        if len(shapes) != 1:
            raise PreconditionError("band arrays must share the grid shape")

    def area(self) -> float:
        return area(self)

    @property
    def area_preclip(self) -> float | None:
        return None if self.radius is None else 2.0 * self.radius

    def covers(self, true_curve, grid=None) -> bool:
        return covers(self, true_curve, self.grid if grid is None else grid)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "center", "lower", "upper"])
            for row in zip(self.grid, self.center, self.lower, self.upper):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, level: float = float("nan"), target: str = "survival") -> "Band":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != ["t", "center", "lower", "upper"]:
            raise PreconditionError(f"{path}: expected header t,center,lower,upper")
        a = np.array([[float(v) for v in r] for r in rows[1:] if r]).reshape(-1, 4)
        return cls(a[:, 0], a[:, 1], a[:, 2], a[:, 3], level, target)


def empirical_quantile(values, level: float) -> float:
    """Inverse-CDF quantile: the ``ceil(level * m)``-th order statistic."""
    values = np.asarray(values, dtype=float)
    return float(np.quantile(values, level, method="inverted_cdf"))


def area(band: Band) -> float:
    """Trapezoid integral of ``upper − lower`` over the band grid."""
    return float(trapezoid(band.upper - band.lower, band.grid))


def covers(band: Band, true_curve, grid) -> bool:
    grid = np.asarray(grid, dtype=float)
    if grid.shape != band.grid.shape or not np.allclose(grid, band.grid, rtol=0, atol=1e-12):
        raise PreconditionError("true curve and band must share the same grid")
    truth = np.asarray(true_curve, dtype=float)
    return bool(np.all(band.lower <= truth) and np.all(truth <= band.upper))


def curve_from_draw(theta, h: HistogramHazard, z, target: str = "survival", grid=None) -> np.ndarray:
    """``Λ(t) e^{θ'z}`` or ``exp(−Λ(t) e^{θ'z})`` on ``grid``."""
    _check_target(target)
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    cum = h.cumulative(grid) * math.exp(float(np.dot(theta, z)))
    return cum if target == "cumhaz" else np.exp(-cum)


def curves_from_draws(thetas, heights, z, target: str = "survival", grid=None) -> np.ndarray:
    """Vectorised :func:`curve_from_draw` over ``m`` draws; returns ``(m, len(grid))``."""
    _check_target(target)
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    heights = np.atleast_2d(np.asarray(heights, dtype=float))
    thetas = np.asarray(thetas, dtype=float).reshape(heights.shape[0], -1)
    overlap = bin_overlap(grid, heights.shape[1])
    risk = np.exp(thetas @ np.asarray(z, dtype=float).reshape(-1))
    cum = (heights @ overlap.T) * risk[:, None]
    return cum if target == "cumhaz" else np.exp(-cum)


def fixed_width_credible_band(curves, level: float = 0.95, grid=None,
                              target: str = "survival") -> Band:
    """Constant-width band around the pointwise posterior mean.

    The radius is the ``level`` quantile of ``sup_t |curve_m(t) − mean(t)|``
    over the posterior draws.  Survival bands are clipped to ``[0, 1]``;
    the unclipped area is ``2 * radius``.
    """
    _check_target(target)
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 2 or curves.shape[0] < 100:
        raise PreconditionError("a credible band needs at least 100 posterior curves")
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    if curves.shape[1] != grid.shape[0]:
        raise PreconditionError("curves are not tabulated on the band grid")
    # offset from the first draw keeps identical draws at radius exactly 0
    center = curves[0] + (curves - curves[0]).mean(axis=0)
    sup = np.max(np.abs(curves - center), axis=1)
    R = empirical_quantile(sup, level)
    lower, upper = center - R, center + R
    if target == "survival":
        lower, upper = np.clip(lower, 0.0, 1.0), np.clip(upper, 0.0, 1.0)
    return Band(grid, center, lower, upper, level, target, radius=R)


@dataclass(frozen=True)
class JointRegions:
    mean: np.ndarray
    cov: np.ndarray
    level: float
    chi2: float
    ellipse_area: float
    rect_lower: np.ndarray
    rect_upper: np.ndarray
    rect_area: float

    def ellipse_axes(self) -> tuple[np.ndarray, float]:
        """Semi-axis lengths and rotation angle (radians) of the credible ellipse."""
        vals, vecs = np.linalg.eigh(self.cov)
        semi = np.sqrt(self.chi2 * vals)
        return semi, float(math.atan2(vecs[1, -1], vecs[0, -1]))

    def to_dict(self) -> dict:
        semi, angle = self.ellipse_axes()
        return {
            "level": self.level, "mean": self.mean.tolist(), "cov": self.cov.tolist(),
            "chi2": self.chi2, "ellipse_area": self.ellipse_area,
            "ellipse_semi_axes": semi.tolist(), "ellipse_angle": angle,
            "rect_lower": self.rect_lower.tolist(), "rect_upper": self.rect_upper.tolist(),
            "rect_area": self.rect_area,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def joint_credible_regions(pairs, level: float = 0.95) -> JointRegions:
    """Elliptical and rectangular credible sets for a cloud of 2-d draws.

    The ellipse uses the sample mean and covariance with the ``χ²₂(level)``
    radius.  The rectangle is the product of two marginal two-sided intervals,
    each at level ``1 − (1 − level) / 2``.
    """
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] < 100:
        raise PreconditionError("need at least 100 two-dimensional draws")
    mean = pairs.mean(axis=0)
    cov = np.cov(pairs, rowvar=False)
    sd = np.sqrt(np.diag(cov))
    if np.any(sd == 0) or abs(cov[0, 1] / (sd[0] * sd[1])) > 1 - 1e-10:
        raise DegenerateRegionError("sample covariance of the pairs is singular")
    chi2 = float(stats.chi2.ppf(level, df=2))
    ellipse = math.pi * chi2 * math.sqrt(np.linalg.det(cov))
    marginal = 1.0 - (1.0 - level) / 2.0
    tail = (1.0 - marginal) / 2.0
    lo = np.quantile(pairs, tail, axis=0)
    hi = np.quantile(pairs, 1.0 - tail, axis=0)
    return JointRegions(mean, cov, level, chi2, ellipse, lo, hi, float(np.prod(hi - lo)))
