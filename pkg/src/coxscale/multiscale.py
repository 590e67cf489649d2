"""Haar multiresolution tools for dyadic histograms on ``[0, 1]``.

A histogram with ``K = 2**(L + 1)`` bins of width ``2**-(L + 1)`` is
identified with the function it represents.  Its Haar coefficients are inner
products with the ``L²[0, 1]`` orthonormal basis ``ψ_{-1} = 1``,
``ψ_{lk} = 2**(l/2) (1_{I^{l+1}_{2k}} − 1_{I^{l+1}_{2k+1}})`` for
``0 <= l <= L``, ``0 <= k < 2**l``.  In matrix form the coefficient vector is
``Ψ x`` and ``2**((L + 1)/2) Ψ`` is orthogonal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError
from .model import HistogramHazard

__all__ = [
    "HaarCoefficients",
    "haar_forward",
    "haar_inverse",
    "haar_matrix",
    "haar_basis_on_bins",
    "cutoff",
    "hellinger_rate",
    "sup_norm_distance",
    "default_weights",
    "multiscale_norm",
]


def _levels_of(K: int) -> int:
    L = int(round(math.log2(K))) - 1 if K > 0 else -1
    if K < 2 or 2 ** (L + 1) != K:
        raise DomainError(f"length must be a power of two (>= 2), got {K}")
    return L


@dataclass(frozen=True, eq=False)
class HaarCoefficients:
    """Scaling coefficient and per-level detail coefficients ``details[l][k]``."""

    scaling: float
    details: tuple

    @property
    def L(self) -> int:
        return len(self.details) - 1

    @property
    def size(self) -> int:
        return 1 + sum(len(d) for d in self.details)

    def to_vector(self) -> np.ndarray:
        """Order ``(−1), (0,0), (1,0), (1,1), (2,0), …``."""
        return np.concatenate([[self.scaling]] + [np.asarray(d) for d in self.details])

    @classmethod
    def from_vector(cls, v) -> "HaarCoefficients":
        v = np.asarray(v, dtype=float)
        L = _levels_of(v.shape[0])
        details, start = [], 1
        for l in range(L + 1):
            details.append(v[start:start + 2 ** l].copy())
            start += 2 ** l
        return cls(float(v[0]), tuple(details))

    def __add__(self, other):
        return HaarCoefficients.from_vector(self.to_vector() + other.to_vector())

    def __mul__(self, a: float):
        return HaarCoefficients.from_vector(a * self.to_vector())

    __rmul__ = __mul__


def haar_forward(heights) -> HaarCoefficients:
    """Pyramid algorithm, O(K).  Bin integrals are merged pairwise level by level."""
    x = np.asarray(heights, dtype=float)
    L = _levels_of(x.shape[0])
    a = x * 2.0 ** -(L + 1)
    details = [None] * (L + 1)
    for l in range(L, -1, -1):
        left, right = a[0::2], a[1::2]
        details[l] = 2.0 ** (l / 2) * (left - right)
        a = left + right
    return HaarCoefficients(float(a[0]), tuple(details))


def haar_inverse(coefs: HaarCoefficients) -> np.ndarray:
    a = np.array([coefs.scaling])
    for l, d in enumerate(coefs.details):
        d = np.asarray(d, dtype=float) * 2.0 ** (-l / 2)
        nxt = np.empty(2 * a.shape[0])
        nxt[0::2] = 0.5 * (a + d)
        nxt[1::2] = 0.5 * (a - d)
        a = nxt
    return a * a.shape[0]


def haar_matrix(L: int) -> np.ndarray:
    """Dense ``Ψ`` of shape ``(K, K)`` with rows ordered as in :meth:`HaarCoefficients.to_vector`."""
    K = 2 ** (L + 1)
    rows = [np.full(K, 2.0 ** -(L + 1))]
    for l in range(L + 1):
        span = K // 2 ** l
        for k in range(2 ** l):
            r = np.zeros(K)
            r[k * span:k * span + span // 2] = 1.0
            r[k * span + span // 2:(k + 1) * span] = -1.0
            rows.append(2.0 ** (-(L + 1) + l / 2) * r)
    return np.vstack(rows)


def haar_basis_on_bins(L: int) -> np.ndarray:
    """Values of each basis function on each bin: ``B[j, m] = ψ_m(bin j)``.

    ``haar_inverse`` of a coefficient vector ``c`` equals ``B @ c``.
    """
    K = 2 ** (L + 1)
    return haar_matrix(L).T * K


def cutoff(n: float, beta: float = 0.5) -> int:
    """Resolution ``L_n``: the integer closest to ``log2((n / log n)**(1 / (2β + 1)))``.

    Exact half-way cases go to the smaller level; the result is at least 0.
    """
    if n < 2 or beta <= 0:
        raise PreconditionError("cutoff needs n >= 2 and beta > 0")
    x = math.log2(n / math.log(n)) / (2.0 * beta + 1.0)
    L = math.floor(x)
    if x - L > 0.5 + 1e-12:
        L += 1
    return max(int(L), 0)


def hellinger_rate(n: float, beta: float) -> float:
    """``ν_n = (log n / n)**(β / (2β + 1))``."""
    return (math.log(n) / n) ** (beta / (2.0 * beta + 1.0))


def sup_norm_distance(h, lambda0, grid, theta=None, theta0=None, z=None) -> float:
    """``max_grid |h(t) e^{θ'z} − λ₀(t) e^{θ₀'z}|``.

    ``h`` is a :class:`HistogramHazard`, a callable, or values tabulated on
    ``grid``; ``lambda0`` is a callable (e.g. ``TruthSpec.hazard``) or values.
    Without ``z`` both exponential factors are 1 (baseline distance).
    """
    grid = np.asarray(grid, dtype=float)

    def values(f):
        if isinstance(f, HistogramHazard) or callable(f):
            return np.asarray(f(grid), dtype=float)
        f = np.asarray(f, dtype=float)
        if f.shape != grid.shape:
            raise PreconditionError("tabulated curve does not match the grid")
        return f

    s = s0 = 1.0
    if z is not None:
        s = math.exp(float(np.dot(theta, z)))
        s0 = math.exp(float(np.dot(theta0, z)))
    return float(np.max(np.abs(values(h) * s - values(lambda0) * s0)))


def default_weights(L: int) -> np.ndarray:
    """``w_l = max(l, 1)`` for ``l = 0..L``."""
    return np.maximum(np.arange(L + 1), 1).astype(float)


def multiscale_norm(c: HaarCoefficients, weights=None) -> float:
    """``max(|c_{-1}|, sup_l max_k |c_{lk}| / w_l)``."""
    w = default_weights(c.L) if weights is None else np.asarray(weights, dtype=float)
    if w.shape[0] < c.L + 1 or np.any(w[: c.L + 1] < 1):
        raise PreconditionError("need one weight w_l >= 1 per level")
    out = abs(c.scaling)
    for l, d in enumerate(c.details):
        if len(d):
            out = max(out, float(np.max(np.abs(d))) / w[l])
    return out
