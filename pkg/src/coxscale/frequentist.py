"""Cox partial likelihood, Breslow estimator and multiplier confidence bands."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .bands import DEFAULT_GRID, Band, empirical_quantile
from .errors import DegenerateDataError, NonConvergenceError, PreconditionError
from .model import SurvivalDataset
from .seeding import make_rng

__all__ = [
    "StepFunction",
    "CoxFrequentistFit",
    "partial_loglik",
    "fit_partial_likelihood",
    "breslow",
    "fit_cox",
    "influence_matrix",
    "multiplier_confidence_band",
]

NEWTON_TOL = 1e-8
NEWTON_MAXITER = 100
DIVERGENCE_NORM = 50.0


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous nondecreasing step function starting at 0."""

    times: np.ndarray
    jumps: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.jumps)])
        out = cum[np.searchsorted(self.times, t, side="right")]
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class CoxFrequentistFit:
    """Two-step frequentist fit.

    ``info`` is the observed partial-likelihood information divided by ``n``.
    ``breslow`` is ``None`` until the baseline step has been run.
    """

    theta_hat: np.ndarray
    info: np.ndarray
    breslow: StepFunction | None
    n: int
    degenerate: bool = False
    iterations: int = 0
    loglik: float = float("nan")


def _risk_sets(data: SurvivalDataset):
    order = np.argsort(data.y, kind="stable")
    y = data.y[order]
    first = np.searchsorted(y, y, side="left")
    return order, y, first


def _pl_terms(data, theta, order, first, need_hessian=True):
    z = data.z[order]
    delta = data.delta[order]
    lin = z @ theta
    shift = lin.max() if lin.size else 0.0
    e = np.exp(lin - shift)
    s0 = np.cumsum(e[::-1])[::-1][first]
    s1 = np.cumsum((e[:, None] * z)[::-1], axis=0)[::-1][first]
    ev = delta == 1
    zbar = s1[ev] / s0[ev, None]
    ll = float(np.sum(lin[ev] - shift - np.log(s0[ev])))
    grad = np.sum(z[ev] - zbar, axis=0)
    if not need_hessian:
        return ll, grad, None
    ezz = e[:, None, None] * z[:, :, None] * z[:, None, :]
    s2 = np.cumsum(ezz[::-1], axis=0)[::-1][first]
    hess = -np.sum(s2[ev] / s0[ev, None, None] - zbar[:, :, None] * zbar[:, None, :], axis=0)
    return ll, grad, hess


def partial_loglik(data: SurvivalDataset, theta) -> float:
    """Breslow-ties log partial likelihood ``Σ_events θ'Z_i − log Σ_{Y_j ≥ Y_i} e^{θ'Z_j}``."""
    order, _, first = _risk_sets(data)
    return _pl_terms(data, np.asarray(theta, dtype=float).reshape(-1), order, first, False)[0]


def fit_partial_likelihood(data: SurvivalDataset) -> CoxFrequentistFit:
    """Newton–Raphson with step halving, started at ``θ = 0``.

    Raises
    ------
    DegenerateDataError
        No events.
    NonConvergenceError
        ``‖θ‖`` exceeds 50 (monotone likelihood) or 100 iterations pass.
    """
    if data.n_events == 0:
        raise DegenerateDataError("partial likelihood needs at least one event")
    p = data.p
    order, _, first = _risk_sets(data)
    theta = np.zeros(p)
    if np.all(data.z == data.z[0]):
        ll, _, hess = _pl_terms(data, theta, order, first)
        return CoxFrequentistFit(theta, -hess / data.n, None, data.n, degenerate=True, loglik=ll)
    ll, grad, hess = _pl_terms(data, theta, order, first)
    for it in range(1, NEWTON_MAXITER + 1):
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-hess, grad, rcond=None)[0]
        # a vanishing gradient with a non-vanishing Newton step is a flat tail, not an optimum
        if np.max(np.abs(grad)) <= NEWTON_TOL and np.max(np.abs(step)) <= 1e-6 * (1.0 + np.max(np.abs(theta))):
            if np.linalg.eigvalsh(-hess).min() <= 1e-12 * data.n:
                raise NonConvergenceError("information matrix is singular at the optimum (monotone likelihood)")
            return CoxFrequentistFit(theta, -hess / data.n, None, data.n, iterations=it - 1, loglik=ll)
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            ll_c = _pl_terms(data, cand, order, first, False)[0]
            # rounding slack so near-converged full steps are not halved away
            if ll_c >= ll - 1e-12 * (1.0 + abs(ll)):
                break
            t *= 0.5
        theta = cand
        if np.linalg.norm(theta) > DIVERGENCE_NORM:
            raise NonConvergenceError("partial likelihood diverges (monotone likelihood)")
        ll, grad, hess = _pl_terms(data, theta, order, first)
    if np.linalg.norm(theta) > 0.5 * DIVERGENCE_NORM:
        raise NonConvergenceError("partial likelihood diverges (monotone likelihood)")
    raise NonConvergenceError(f"Newton did not converge in {NEWTON_MAXITER} iterations")


def _event_table(data: SurvivalDataset, theta):
    """Distinct event times with counts and raw risk-set sums S0, S1."""
    e = np.exp(data.z @ theta)
    times, counts = np.unique(data.y[data.delta == 1], return_counts=True)
    order = np.argsort(data.y, kind="stable")
    y = data.y[order]
    pos = np.searchsorted(y, times, side="left")
    rev0 = np.concatenate([np.cumsum(e[order][::-1])[::-1], [0.0]])
    rev1 = np.concatenate([np.cumsum((e[:, None] * data.z)[order][::-1], axis=0)[::-1],
                           np.zeros((1, data.p))])
    return e, times, counts.astype(float), rev0[pos], rev1[pos]


def breslow(data: SurvivalDataset, theta) -> StepFunction:
    """``Λ̂(t) = Σ_{event times ≤ t} d_j / Σ_{Y_i ≥ t_j} e^{θ'Z_i}``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if data.n_events == 0:
        return StepFunction(np.zeros(0), np.zeros(0))
    _, times, counts, s0, _ = _event_table(data, theta)
    return StepFunction(times, counts / s0)


def fit_cox(data: SurvivalDataset) -> CoxFrequentistFit:
    fit = fit_partial_likelihood(data)
    return replace(fit, breslow=breslow(data, fit.theta_hat))


def influence_matrix(data: SurvivalDataset, fit: CoxFrequentistFit, z, grid) -> np.ndarray:
    """Estimated influence functions ``ŵ_i(t)`` of ``Λ̂(t) e^{θ̂'z}``, shape ``(n, len(grid))``.

    Sum of the Breslow martingale term and the plug-in effect of ``θ̂``::

        ŵ_i(t) = e^{θ̂'z} [ δ_i 1{Y_i ≤ t} / S0(Y_i)
                          − e^{θ̂'Z_i} ∫_0^{t ∧ Y_i} dΛ̂ / S0
                          + (z Λ̂(t) − ∫_0^t Z̄ dΛ̂)' Î⁻¹ U_i ]

    with ``S0`` the per-n risk-set mean of ``e^{θ̂'Z}``, ``Z̄ = S1/S0`` and
    ``U_i`` the score residual of subject ``i``.
    """
    n = data.n
    theta = fit.theta_hat
    z = np.asarray(z, dtype=float).reshape(-1)
    grid = np.asarray(grid, dtype=float)
    e, times, counts, S0, S1 = _event_table(data, theta)
    dLam = counts / S0
    zbar = S1 / S0[:, None]
    cum_lam = np.concatenate([[0.0], np.cumsum(dLam)])
    cum_q = np.concatenate([[0.0], np.cumsum(dLam / S0)])
    cum_zbar = np.vstack([np.zeros((1, data.p)), np.cumsum(zbar * dLam[:, None], axis=0)])

    j_grid = np.searchsorted(times, grid, side="right")
    j_y = np.searchsorted(times, data.y, side="right")
    j_min = np.minimum(j_grid[None, :], j_y[:, None])

    S0_at_y = np.zeros(n)
    ev = data.delta == 1
    S0_at_y[ev] = S0[np.searchsorted(times, data.y[ev])]
    jump = np.zeros(n)
    jump[ev] = n / S0_at_y[ev]
    martingale = jump[:, None] * (data.y[:, None] <= grid[None, :]) - n * e[:, None] * cum_q[j_min]

    resid = np.zeros((n, data.p))
    resid[ev] = data.z[ev] - zbar[np.searchsorted(times, data.y[ev])]
    resid -= e[:, None] * (data.z * cum_lam[j_y][:, None] - cum_zbar[j_y])
    info = fit.info
    try:
        scaled = np.linalg.solve(info, resid.T).T
    except np.linalg.LinAlgError:
        scaled = (np.linalg.pinv(info) @ resid.T).T
    deriv = np.outer(cum_lam[j_grid], z) - cum_zbar[j_grid]
    return math.exp(float(theta @ z)) * (martingale + scaled @ deriv.T)


def multiplier_confidence_band(data: SurvivalDataset, fit: CoxFrequentistFit, z,
                               target: str = "survival", level: float = 0.95,
                               B: int = 1000, seed: int = 0, grid=None) -> Band:
    """Constant-width simultaneous band from Gaussian multiplier replicates.

    Each replicate is ``Ŵ_b(t) = n^{-1/2} Σ_i G_ib ŵ_i(t)`` with i.i.d.
    standard normal ``G_ib``; the half-width is the ``level`` quantile of
    ``sup_t |Ŵ_b(t)|`` divided by ``√n``.  For survival the influence is
    multiplied by ``−Ŝ(t|z)`` and the band is clipped to ``[0, 1]``.
    """
    if fit is None or fit.breslow is None:
        raise PreconditionError("the model must be fitted (theta and Breslow) first")
    if B < 100:
        raise PreconditionError("need at least 100 multiplier replicates")
    if target not in ("cumhaz", "survival"):
        raise PreconditionError(f"unknown target {target!r}")
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    z = np.asarray(z, dtype=float).reshape(-1)
    n = data.n
    cumhaz = fit.breslow(grid) * math.exp(float(fit.theta_hat @ z))
    w = influence_matrix(data, fit, z, grid)
    center = cumhaz
    if target == "survival":
        center = np.exp(-cumhaz)
        w = -center[None, :] * w
    rng = make_rng(seed)
    sups = np.empty(B)
    chunk = max(1, min(B, 2_000_000 // max(n, 1)))
    for start in range(0, B, chunk):
        b = min(chunk, B - start)
        G = rng.standard_normal((b, n))
        sups[start:start + b] = np.max(np.abs(G @ w), axis=1) / math.sqrt(n)
    c = empirical_quantile(sups, level)
    R = c / math.sqrt(n)
    lower, upper = center - R, center + R
    if target == "survival":
        lower, upper = np.clip(lower, 0.0, 1.0), np.clip(upper, 0.0, 1.0)
    return Band(grid, center, lower, upper, level, target, radius=R, meta={"c": c, "B": B})
