"""Limiting quantities of the Cox posterior evaluated numerically.

With standard normal covariates and censoring survival ``Ḡ``,

    M_m(u) = E[ Z^{⊗m} Ḡ(u) exp(θ₀'Z − Λ₀(u) e^{θ₀'Z}) ],   m = 0, 1, 2,

the least-favourable direction is ``γ = M₁ / M₀`` and the efficient
information is ``Ĩ = Λ₀{M₂ − γγ'M₀}`` where ``Λ₀{f} = ∫₀¹ f λ₀``.

Expectations over ``Z`` reduce to one dimension: write ``Z = X v + W`` with
``v = θ₀ / ‖θ₀‖``, ``X ~ N(0, 1)`` and ``W`` the independent Gaussian
component orthogonal to ``v``.  Then ``M₁ = v E[X g(X)]`` and
``M₂ = vv' E[X² g(X)] + (I − vv') E[g(X)]``, which Gauss–Hermite quadrature
in ``X`` evaluates exactly up to the 1-d rule.  A tensor-product rule over
all ``p`` coordinates is available as a cross-check for small ``p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import AccuracyError, DomainError, PreconditionError
from .model import SurvivalDataset, TruthSpec
from .seeding import make_rng

__all__ = [
    "AsymptoticTables",
    "compute_tables",
    "bvm_covariance",
    "evaluate_Wn",
    "efficient_direction",
    "LimitPaths",
    "simulate_limit_process",
]

QUAD_RTOL = 1e-6
TENSOR_MAX_POINTS = 2_000_000


@dataclass(frozen=True, eq=False)
class AsymptoticTables:
    """``M₀, M₁, M₂`` and derived quantities tabulated on ``u_grid``.

    ``gamma`` is computed from the uncensored parts so it stays finite
    where ``Ḡ`` vanishes.  ``quad_error`` is the largest relative change of
    the tables when the number of quadrature nodes is doubled.
    """

    truth: TruthSpec
    u_grid: np.ndarray
    lambda0: np.ndarray
    Lambda0: np.ndarray
    M0: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    gamma: np.ndarray
    I_eff: np.ndarray
    quad_error: float
    nodes: int
    method: str

    @property
    def p(self) -> int:
        return int(self.M1.shape[1])

    def integral(self, f) -> np.ndarray:
        """``Λ₀{f} = ∫₀¹ f(u) λ₀(u) du`` for ``f`` tabulated on ``u_grid`` (leading axis)."""
        f = np.asarray(f, dtype=float)
        lam = self.lambda0.reshape((-1,) + (1,) * (f.ndim - 1))
        return trapezoid(f * lam, self.u_grid, axis=0)

    def cumulative_integral(self, f) -> np.ndarray:
        """``t ↦ ∫₀ᵗ f λ₀`` on ``u_grid``."""
        f = np.asarray(f, dtype=float)
        lam = self.lambda0.reshape((-1,) + (1,) * (f.ndim - 1))
        return cumulative_trapezoid(f * lam, self.u_grid, axis=0, initial=0.0)


def _moments_projected(truth, cum, nodes):
    """Uncensored ``M₀, M₁, M₂`` via the 1-d projection onto ``θ₀``."""
    x, w = hermegauss(nodes)
    w = w / math.sqrt(2.0 * math.pi)
    p = truth.p
    norm = float(np.linalg.norm(truth.theta0))
    v = truth.theta0 / norm if norm > 0 else np.eye(p)[0]
    s = norm * x
    g = np.exp(s[None, :] - cum[:, None] * np.exp(s)[None, :]) * w[None, :]
    e0 = g.sum(axis=1)
    e1 = g @ x
    e2 = g @ (x * x)
    M0 = e0
    M1 = e1[:, None] * v[None, :]
    vv = np.outer(v, v)
    M2 = e2[:, None, None] * vv + e0[:, None, None] * (np.eye(p) - vv)
    return M0, M1, M2


def _moments_tensor(truth, cum, nodes):
    x, w = hermegauss(nodes)
    w = w / math.sqrt(2.0 * math.pi)
    p = truth.p
    if nodes ** p > TENSOR_MAX_POINTS:
        raise PreconditionError(f"tensor rule with {nodes}**{p} points is too large; use the projected method")
    grids = np.meshgrid(*([x] * p), indexing="ij")
    Z = np.stack([g.reshape(-1) for g in grids], axis=1)
    W = np.prod(np.stack(np.meshgrid(*([w] * p), indexing="ij")).reshape(p, -1), axis=0)
    keep = W >= 1e-12 * W.max()
    Z, W = Z[keep], W[keep]
    s = Z @ truth.theta0
    g = np.exp(s[None, :] - cum[:, None] * np.exp(s)[None, :]) * W[None, :]
    M0 = g.sum(axis=1)
    M1 = g @ Z
    M2 = np.einsum("uq,qi,qj->uij", g, Z, Z)
    return M0, M1, M2


def compute_tables(truth: TruthSpec, u_points: int = 2048, nodes: int = 64,
                   method: str = "projected", check: bool = True) -> AsymptoticTables:
    """Tabulate ``M₀, M₁, M₂``, ``γ`` and ``Ĩ`` on ``u_points`` equispaced points of ``[0, 1]``.

    Raises
    ------
    AccuracyError
        Doubling the quadrature nodes changes a table entry by more than
        ``1e-6`` relative to the largest magnitude over the three tables.
    """
    if u_points < 3:
        raise PreconditionError("need at least 3 grid points")
    moments = {"projected": _moments_projected, "tensor": _moments_tensor}
    if method not in moments:
        raise PreconditionError(f"method must be one of {tuple(moments)}")
    u = np.linspace(0.0, 1.0, u_points)
    lam = np.asarray(truth.hazard(u), dtype=float)
    cum = np.asarray(truth.cumulative(u), dtype=float)
    M0u, M1u, M2u = moments[method](truth, cum, nodes)
    err = 0.0
    if check:
        R0, R1, R2 = moments[method](truth, cum, 2 * nodes)
        # one common scale, since M1 vanishes identically when θ₀ = 0
        scale = max(float(np.max(np.abs(b))) for b in (R0, R1, R2))
        for a, b in ((M0u, R0), (M1u, R1), (M2u, R2)):
            err = max(err, float(np.max(np.abs(a - b))) / max(scale, 1e-300))
        if err > QUAD_RTOL:
            raise AccuracyError(f"covariate quadrature not converged (relative change {err:.2e})")
    gamma = M1u / M0u[:, None]
    Gbar = truth.censoring_survival(u)
    M0 = Gbar * M0u
    M1 = Gbar[:, None] * M1u
    M2 = Gbar[:, None, None] * M2u
    resid = Gbar[:, None, None] * (M2u - gamma[:, :, None] * M1u[:, None, :])
    I_eff = trapezoid(resid * lam[:, None, None], u, axis=0)
    I_eff = 0.5 * (I_eff + I_eff.T)
    return AsymptoticTables(truth, u, lam, cum, M0, M1, M2, gamma, I_eff, err, nodes, method)


def _on_grid(tables: AsymptoticTables, b) -> np.ndarray:
    if callable(b):
        return np.asarray(b(tables.u_grid), dtype=float) * np.ones_like(tables.u_grid)
    b = np.asarray(b, dtype=float)
    if b.ndim == 0:
        return np.full_like(tables.u_grid, float(b))
    if b.shape != tables.u_grid.shape:
        raise PreconditionError("curve must be tabulated on the tables' u_grid")
    return b


def bvm_covariance(tables: AsymptoticTables, a, b=1.0) -> np.ndarray:
    """Limiting covariance of ``√n (a'θ, ∫ b dΛ)`` under the posterior.

    ``[[a'Ĩ⁻¹a, −a'Ĩ⁻¹Λ₀{bγ}], [·, Λ₀{b²/M₀} + Λ₀{bγ}'Ĩ⁻¹Λ₀{bγ}]]``.
    ``b`` is a scalar, a callable or values on ``u_grid``; ``b ≡ 1`` gives
    ``Λ(1)``.  The second variance is ``inf`` when ``b² / M₀`` is not
    integrable (``M₀`` vanishes where ``b`` does not).

    Raises
    ------
    numpy.linalg.LinAlgError
        ``Ĩ`` is singular.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    bu = _on_grid(tables, b)
    Iinv = np.linalg.inv(tables.I_eff)
    lg = tables.integral(bu[:, None] * tables.gamma)
    nz = bu != 0
    if np.any(tables.M0[nz] <= 0):
        v_b = math.inf
    else:
        ratio = np.where(nz, bu * bu / np.where(nz, tables.M0, 1.0), 0.0)
        v_b = float(tables.integral(ratio))
    cross = -float(a @ Iinv @ lg)
    return np.array([[float(a @ Iinv @ a), cross],
                     [cross, v_b + float(lg @ Iinv @ lg)]])


def efficient_direction(tables: AsymptoticTables, coordinate: int = 0):
    """``(Ĩ⁻¹e_j, −γ'Ĩ⁻¹e_j)``: the direction whose ``W_n`` linearises ``θ̂_j``."""
    e = np.zeros(tables.p)
    e[coordinate] = 1.0
    vt = np.linalg.solve(tables.I_eff, e)
    return vt, -(tables.gamma @ vt)


def evaluate_Wn(data: SurvivalDataset, truth: TruthSpec, vartheta, g=None, grid=None,
                fine_points: int = 4097) -> float:
    """``W_n(ϑ, g) = n^{−1/2} Σ_i δ_i(ϑ'Z_i + g(Y_i)) − e^{θ₀'Z_i}(ϑ'Z_i Λ₀(Y_i) + ∫₀^{Y_i} g dΛ₀)``.

    ``g`` is ``None`` (zero), a scalar, a callable on ``[0, 1]``, or values
    tabulated on ``grid`` (linearly interpolated).  ``∫ g dΛ₀`` uses the
    trapezoid rule on ``grid`` or on ``fine_points`` equispaced points.
    """
    n = data.n
    if n == 0:
        return 0.0
    vartheta = np.asarray(vartheta, dtype=float).reshape(-1)
    lin0 = data.z @ truth.theta0
    vz = data.z @ vartheta
    if g is None:
        gy = np.zeros(n)
        gint = np.zeros(n)
    else:
        if callable(g) or np.ndim(g) == 0:
            u = np.linspace(0.0, 1.0, fine_points) if grid is None else np.asarray(grid, dtype=float)
            gu = np.asarray(g(u), dtype=float) * np.ones_like(u) if callable(g) else np.full_like(u, float(g))
        else:
            if grid is None:
                raise PreconditionError("tabulated g needs its grid")
            u = np.asarray(grid, dtype=float)
            gu = np.asarray(g, dtype=float)
            if gu.shape != u.shape:
                raise PreconditionError("g and grid lengths differ")
        gy = np.interp(data.y, u, gu)
        G = cumulative_trapezoid(gu * truth.hazard(u), u, initial=0.0)
        gint = np.interp(data.y, u, G)
    terms = data.delta * (vz + gy) - np.exp(lin0) * (vz * truth.cumulative(data.y) + gint)
    return float(terms.sum() / math.sqrt(n))


@dataclass(frozen=True, eq=False)
class LimitPaths:
    """Sample paths of ``B(U₀(t)) − V'Λ₀{γ}(t)`` on ``grid``."""

    grid: np.ndarray
    paths: np.ndarray
    U0: np.ndarray
    drift: np.ndarray

    @property
    def sup(self) -> np.ndarray:
        return np.max(np.abs(self.paths), axis=1)

    def sup_quantile(self, level: float = 0.95) -> float:
        return float(np.quantile(self.sup, level, method="inverted_cdf"))


def simulate_limit_process(tables: AsymptoticTables, grid, n_paths: int, seed: int,
                           include_v: bool = True) -> LimitPaths:
    """Simulate the Gaussian limit of ``√n (Λ − Λ̂)`` on ``grid``.

    ``B`` is a standard Brownian motion run on the clock
    ``U₀(t) = ∫₀ᵗ λ₀ / M₀`` and ``V ~ N(0, Ĩ⁻¹)`` is independent of ``B``.

    Raises
    ------
    DomainError
        ``U₀`` is not finite on the grid.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > 1:
        raise PreconditionError("grid must be increasing inside [0, 1]")
    with np.errstate(divide="ignore"):
        inv = np.where(tables.M0 > 0, 1.0 / tables.M0, np.inf)
    if grid[-1] >= tables.u_grid[-1] and not np.isfinite(inv[-1]):
        raise DomainError("U0 diverges at the end of follow-up (M0 vanishes)")
    U0_tab = tables.cumulative_integral(np.where(np.isfinite(inv), inv, 0.0))
    U0 = np.interp(grid, tables.u_grid, U0_tab)
    drift_tab = tables.cumulative_integral(tables.gamma)
    drift = np.stack([np.interp(grid, tables.u_grid, drift_tab[:, j]) for j in range(tables.p)], axis=1)
    rng = make_rng(seed)
    dU = np.diff(np.concatenate([[0.0], U0]))
    B = np.cumsum(rng.standard_normal((n_paths, grid.shape[0])) * np.sqrt(dU), axis=1)
    paths = B
    if include_v:
        L = np.linalg.cholesky(np.linalg.inv(tables.I_eff))
        V = rng.standard_normal((n_paths, tables.p)) @ L.T
        paths = B - V @ drift.T
    return LimitPaths(grid, paths, U0, drift)
