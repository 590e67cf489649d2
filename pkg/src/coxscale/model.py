"""Domain types and likelihood for the Cox model with a histogram baseline hazard.

Time is rescaled to the follow-up window ``[0, 1]``.  A baseline hazard is a
positive step function on the dyadic partition of ``[0, 1]`` into
``K = 2**(level + 1)`` bins ``I_0 = [0, w]``, ``I_k = (k w, (k + 1) w]``
with ``w = 1 / K``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, PreconditionError

__all__ = [
    "Subject",
    "SurvivalDataset",
    "HistogramHazard",
    "ExposureSummary",
    "TruthSpec",
    "bin_index",
    "bin_overlap",
    "cumulative_hazard",
    "log_likelihood",
    "exposure_summary",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Subject:
    y: float
    delta: int
    z: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """``n`` observations ``(Y_i, delta_i, Z_i)`` stored column-wise.

    Parameters
    ----------
    y : array_like, shape (n,)
        Event or censoring times in ``[0, 1]``.
    delta : array_like, shape (n,)
        Event indicators (1 = event observed).
    z : array_like, shape (n, p)
        Covariates.  A 1-d array is read as ``p = 1``.
    """

    y: np.ndarray
    delta: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        delta = np.asarray(self.delta).reshape(-1)
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(-1, 1) if len(y) else z.reshape(0, max(z.size, 1))
        if z.ndim != 2 or z.shape[0] != y.shape[0] or delta.shape[0] != y.shape[0]:
            raise PreconditionError("y, delta and z must describe the same number of subjects")
        if np.any((y < 0) | (y > 1)) or not np.all(np.isfinite(y)):
            raise DomainError("observed times must lie in [0, 1]")
        if not np.all((delta == 0) | (delta == 1)):
            raise DomainError("event indicators must be 0 or 1")
        if not np.all(np.isfinite(z)):
            raise DomainError("covariates must be finite")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "delta", _frozen(delta.astype(np.int64)))
        object.__setattr__(self, "z", _frozen(z))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def p(self) -> int:
        return int(self.z.shape[1])

    @property
    def n_events(self) -> int:
        return int(self.delta.sum())

    @property
    def subjects(self) -> list[Subject]:
        return [Subject(float(y), int(d), tuple(map(float, z)))
                for y, d, z in zip(self.y, self.delta, self.z)]

    @classmethod
    def from_subjects(cls, subjects: Sequence[Subject], p: int | None = None) -> "SurvivalDataset":
        if not subjects:
            return cls.empty(p or 1)
        dims = {len(s.z) for s in subjects}
        if len(dims) != 1:
            raise PreconditionError("all subjects must share the covariate dimension")
        return cls(np.array([s.y for s in subjects]),
                   np.array([s.delta for s in subjects]),
                   np.array([s.z for s in subjects], dtype=float))

    @classmethod
    def empty(cls, p: int = 1) -> "SurvivalDataset":
        return cls(np.zeros(0), np.zeros(0, dtype=int), np.zeros((0, p)))

    def take(self, index) -> "SurvivalDataset":
        index = np.asarray(index)
        return SurvivalDataset(self.y[index], self.delta[index], self.z[index])

    def to_csv(self, path) -> None:
        """Write ``y,delta,z1..zp`` with round-trip exact float formatting."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "delta"] + [f"z{j + 1}" for j in range(self.p)])
            for y, d, z in zip(self.y, self.delta, self.z):
                w.writerow([repr(float(y)), int(d)] + [repr(float(v)) for v in z])

    @classmethod
    def from_csv(cls, path) -> "SurvivalDataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:2] != ["y", "delta"]:
            raise PreconditionError(f"{path}: expected header y,delta,z1,...")
        p = len(rows[0]) - 2
        body = [r for r in rows[1:] if r]
        if not body:
            return cls.empty(p)
        y = np.array([float(r[0]) for r in body])
        d = np.array([int(r[1]) for r in body])
        z = np.array([[float(v) for v in r[2:]] for r in body]).reshape(len(body), p)
        return cls(y, d, z)


def bin_index(t, K: int) -> np.ndarray:
    """Index of the bin containing ``t`` (bins are left-open, the first one closed at 0)."""
    t = np.asarray(t, dtype=float)
    k = np.ceil(t * K).astype(np.int64) - 1
    return np.clip(k, 0, K - 1)


def bin_overlap(t, K: int) -> np.ndarray:
    """Lengths ``|[0, t_i] ∩ I_k|`` as an array of shape ``t.shape + (K,)``."""
    t = np.asarray(t, dtype=float)
    w = 1.0 / K
    left = np.arange(K) * w
    return np.clip(t[..., None] - left, 0.0, w)


@dataclass(frozen=True, eq=False)
class HistogramHazard:
    """Positive step function with ``2**(level + 1)`` dyadic bins on ``[0, 1]``."""

    level: int
    heights: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float).reshape(-1)
        if self.level < 0 or h.shape[0] != 2 ** (self.level + 1):
            raise PreconditionError(
                f"level {self.level} needs {2 ** (self.level + 1)} heights, got {h.shape[0]}")
        if not np.all(h > 0) or not np.all(np.isfinite(h)):
            raise DomainError("histogram heights must be finite and strictly positive")
        object.__setattr__(self, "heights", _frozen(h))

    @classmethod
    def from_bins(cls, heights) -> "HistogramHazard":
        heights = np.asarray(heights, dtype=float)
        K = heights.shape[0]
        level = int(round(math.log2(K))) - 1
        if K < 2 or 2 ** (level + 1) != K:
            raise PreconditionError("number of bins must be a power of two, at least 2")
        return cls(level, heights)

    @classmethod
    def constant(cls, level: int, value: float = 1.0) -> "HistogramHazard":
        return cls(level, np.full(2 ** (level + 1), float(value)))

    @property
    def K(self) -> int:
        return int(self.heights.shape[0])

    @property
    def width(self) -> float:
        return 1.0 / self.K

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.K + 1) * self.width

    def __call__(self, t) -> np.ndarray:
        return self.heights[bin_index(t, self.K)]

    def cumulative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any((t < 0) | (t > 1)):
            raise DomainError("cumulative hazard is defined on [0, 1] only")
        return bin_overlap(t, self.K) @ self.heights

    @property
    def total(self) -> float:
        """``Λ(1) = Σ_k λ_k w``."""
        return float(self.heights.sum() * self.width)


def cumulative_hazard(h: HistogramHazard, t):
    """``Λ(t) = Σ_k λ_k |I_k ∩ [0, t]|``; scalar in, scalar out."""
    out = h.cumulative(t)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class ExposureSummary:
    """Per-bin event counts and the subject-by-bin exposure matrix.

    ``exposure[i, k]`` is the time subject ``i`` spent in bin ``k``, so that
    ``T_k(θ) = Σ_i exposure[i, k] exp(θ'Z_i)`` is the total exposure-weighted
    risk in bin ``k``.
    """

    level: int
    d: np.ndarray
    exposure: np.ndarray

    @property
    def K(self) -> int:
        return int(self.d.shape[0])

    def totals(self, risk: np.ndarray) -> np.ndarray:
        """``T_k`` for per-subject relative risks ``risk = exp(Zθ)``."""
        return risk @ self.exposure


def exposure_summary(data: SurvivalDataset, level: int) -> ExposureSummary:
    if level < 0:
        raise PreconditionError("level must be nonnegative")
    K = 2 ** (level + 1)
    exposure = bin_overlap(data.y, K)
    d = np.bincount(bin_index(data.y[data.delta == 1], K), minlength=K).astype(float)
    return ExposureSummary(level, _frozen(d), _frozen(exposure.reshape(data.n, K)))


def log_likelihood(data: SurvivalDataset, theta, h: HistogramHazard) -> float:
    """Cox log-likelihood ``Σ δ_i(θ'Z_i + log λ(Y_i)) − Λ(Y_i) e^{θ'Z_i}``.

    Terms depending only on the censoring and covariate laws are dropped.
    """
    if data.n == 0:
        return 0.0
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != data.p:
        raise PreconditionError("theta dimension does not match covariates")
    lin = data.z @ theta
    ev = data.delta == 1
    log_lam = np.log(h.heights)[bin_index(data.y, h.K)]
    return float(np.sum(lin[ev] + log_lam[ev]) - np.sum(h.cumulative(data.y) * np.exp(lin)))


# --- true baseline hazards used to generate data -------------------------------------

def _smooth_a(t):
    u = np.asarray(t, dtype=float) + 0.05
    return 6.0 * (u ** 3 - 2.0 * u ** 2 + u) + 0.7


def _smooth_a_cum(t):
    t = np.asarray(t, dtype=float)
    F = lambda u: u ** 4 / 4 - 2.0 * u ** 3 / 3 + u ** 2 / 2  # noqa: E731
    return 6.0 * (F(t + 0.05) - F(0.05)) + 0.7 * t


def _smooth_b(t):
    u = np.asarray(t, dtype=float) + 0.05
    return 0.8 * np.sin(2 * np.pi * u) + u ** 4 - 1.8 * u ** 2 + 2.0


def _smooth_b_cum(t):
    t = np.asarray(t, dtype=float)
    u, a = t + 0.05, 0.05
    trig = 0.8 * (np.cos(2 * np.pi * a) - np.cos(2 * np.pi * u)) / (2 * np.pi)
    return trig + (u ** 5 - a ** 5) / 5 - 0.6 * (u ** 3 - a ** 3) + 2.0 * t


def _piecewise(t):
    t = np.asarray(t, dtype=float)
    return np.where(t < 0.4, 3.0, np.where(t < 0.6, 1.5, 2.0))


def _piecewise_cum(t):
    t = np.asarray(t, dtype=float)
    return 3.0 * np.minimum(t, 0.4) + 1.5 * np.clip(t - 0.4, 0.0, 0.2) + 2.0 * np.maximum(t - 0.6, 0.0)


def _unit(t):
    return np.ones_like(np.asarray(t, dtype=float))


def _unit_cum(t):
    return np.asarray(t, dtype=float) * 1.0


_BASELINES: dict[str, tuple[Callable, Callable]] = {
    "smooth-a": (_smooth_a, _smooth_a_cum),
    "smooth-b": (_smooth_b, _smooth_b_cum),
    "piecewise": (_piecewise, _piecewise_cum),
    "unit": (_unit, _unit_cum),
}

_CENSORING_ALIASES = {
    "admin": "admin", "admin-only": "admin",
    "admin-unif": "admin-unif", "admin-plus-uniform": "admin-unif", "admin+unif": "admin-unif",
}


@dataclass(frozen=True, eq=False)
class TruthSpec:
    """Data-generating truth: regression vector, baseline hazard and censoring mode.

    ``baseline`` names one of ``smooth-a``, ``smooth-b``, ``piecewise``, ``unit``
    or ``tabulated``; the latter is piecewise-linear through ``table`` =
    ``(times, values)`` and constant past the last node.  Covariates are
    standard normal per coordinate.
    """

    theta0: np.ndarray
    baseline: str = "smooth-a"
    censoring: str = "admin"
    table: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=float))
        object.__setattr__(self, "theta0", _frozen(theta0))
        if self.censoring not in _CENSORING_ALIASES:
            raise PreconditionError(f"unknown censoring mode {self.censoring!r}")
        object.__setattr__(self, "censoring", _CENSORING_ALIASES[self.censoring])
        if self.baseline == "tabulated":
            if self.table is None:
                raise PreconditionError("tabulated baseline requires (times, values)")
            times, values = (np.asarray(a, dtype=float) for a in self.table)
            if times[0] != 0 or times[-1] < 1 or np.any(np.diff(times) <= 0):
                raise PreconditionError("tabulated times must increase from 0 to at least 1")
            if np.any(values <= 0):
                raise DomainError("baseline hazard must be positive")
            cum = np.concatenate([[0.0], np.cumsum(np.diff(times) * (values[1:] + values[:-1]) / 2)])
            object.__setattr__(self, "table", (_frozen(times), _frozen(values), _frozen(cum)))
        elif self.baseline not in _BASELINES:
            raise PreconditionError(f"unknown baseline {self.baseline!r}")

    @classmethod
    def tabulated(cls, times, values, theta0, censoring="admin") -> "TruthSpec":
        return cls(theta0, "tabulated", censoring, (times, values))

    @property
    def p(self) -> int:
        return int(self.theta0.shape[0])

    def hazard(self, t) -> np.ndarray:
        if self.baseline == "tabulated":
            times, values, _ = self.table
            return np.interp(t, times, values)
        return _BASELINES[self.baseline][0](t)

    def cumulative(self, t) -> np.ndarray:
        if self.baseline != "tabulated":
            return _BASELINES[self.baseline][1](t)
        times, values, cum = self.table
        t = np.asarray(t, dtype=float)
        j = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 1)
        dt = t - times[j]
        slope = np.diff(values, append=values[-1]) / np.diff(times, append=times[-1] + 1.0)
        return cum[j] + dt * values[j] + 0.5 * slope[j] * dt ** 2

    def censoring_survival(self, u) -> np.ndarray:
        """``Ḡ(u) = P(C ≥ u)`` on ``[0, 1]`` with the left limit taken at ``u = 1``."""
        u = np.asarray(u, dtype=float)
        if self.censoring == "admin":
            return np.ones_like(u)
        return np.clip(1.0 - u, 0.0, 1.0)

    def survival(self, t, z) -> np.ndarray:
        """True ``S(t | z) = exp(−Λ₀(t) e^{θ₀'z})``."""
        return np.exp(-self.cumulative(t) * math.exp(float(np.dot(self.theta0, z))))
