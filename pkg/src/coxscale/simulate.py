"""Synthetic survival data from a known Cox model.

Event times are drawn by inverting the conditional cumulative hazard,
``T = Λ₀⁻¹(E e^{−θ₀'z})`` with ``E = −log U``.  Two censoring regimes are
supported: administrative censoring at ``t = 1`` and, additionally, an
independent ``Uniform(0, 1)`` censoring time.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError
from .model import SurvivalDataset, TruthSpec
from .seeding import derive_seed, make_rng

__all__ = ["T_MAX", "invert_cumulative", "sample_event_time", "generate_dataset", "censored_fraction"]

T_MAX = 4.0
_TOL = 1e-13


def invert_cumulative(truth: TruthSpec, target) -> np.ndarray:
    """Solve ``Λ₀(T) = target`` by vectorised bisection on ``[0, T_MAX]``.

    Targets beyond ``Λ₀(T_MAX)`` map to ``T_MAX``.
    """
    target = np.asarray(target, dtype=float)
    cap = float(truth.cumulative(T_MAX))
    if not cap > 0:
        raise DomainError("baseline hazard integrates to zero; event times are undefined")
    lo = np.zeros_like(target)
    hi = np.full_like(target, T_MAX)
    while True:
        mid = 0.5 * (lo + hi)
        below = truth.cumulative(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= _TOL):
            break
    out = 0.5 * (lo + hi)
    return np.where(target >= cap, T_MAX, out)


def sample_event_time(truth: TruthSpec, z, u):
    """Event time with ``Λ₀(T) e^{θ₀'z} = −log u``.

    ``z`` is a covariate vector or an ``(m, p)`` array matched with ``m``
    uniforms ``u``.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u > 1)):
        raise DomainError("uniform variates must lie in (0, 1]")
    lin = np.asarray(z, dtype=float) @ truth.theta0
    T = invert_cumulative(truth, -np.log(u) * np.exp(-lin))
    return float(T) if T.ndim == 0 else T


def generate_dataset(n: int, truth: TruthSpec, seed: int) -> SurvivalDataset:
    """Draw ``n`` i.i.d. subjects; the seed fixes the dataset bit for bit.

    Covariates, event-time uniforms and censoring uniforms use three
    independent streams derived from ``seed``, so the two censoring regimes
    share covariates and latent event times for the same seed.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    rz, rt, rc = (make_rng(derive_seed(seed, k)) for k in range(3))
    z = rz.standard_normal((n, truth.p))
    u = 1.0 - rt.random(n)
    T = sample_event_time(truth, z, u)
    if truth.censoring == "admin-unif":
        C = np.minimum(rc.random(n), 1.0)
    else:
        C = np.ones(n)
    y = np.minimum(np.minimum(T, C), 1.0)
    delta = (T <= np.minimum(C, 1.0)).astype(np.int64)
    return SurvivalDataset(y, delta, z)


def censored_fraction(data: SurvivalDataset) -> float:
    return 1.0 - data.n_events / data.n
