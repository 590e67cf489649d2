"""Posterior sampling for the Cox model with histogram or Haar-wavelet hazard priors.

Given ``θ`` the likelihood of the hazard heights factorises over bins as
``Π_k λ_k^{d_k} exp(−λ_k T_k(θ))``, so every hazard update only needs the
per-bin event counts ``d`` and exposures ``T``.  Given the hazard, the
likelihood of ``θ`` only needs ``Λ(Y_i)`` for each subject.  One sweep
updates the hazard block (bins in increasing order) and then ``θ``
coordinate by coordinate.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CoxScaleError, DegenerateDataError, PreconditionError
from .frequentist import fit_cox
from .model import HistogramHazard, SurvivalDataset, bin_index, exposure_summary
from .multiscale import cutoff, haar_basis_on_bins, haar_forward
from .parallel import parallel_map
from .seeding import derive_seed, make_rng

__all__ = [
    "PriorSpec",
    "ChainConfig",
    "PosteriorChain",
    "HarvestResult",
    "theta_log_prior",
    "gibbs_step_indep_gamma",
    "mh_step_dep_gamma",
    "mh_step_haar",
    "mh_step_theta",
    "initial_state",
    "run_chain",
    "harvest_last_draws",
]

HAZARD_PRIORS = ("indep", "dep", "haar")
THETA_PRIORS = ("std-normal", "uniform", "truncated-subbotin")
HEIGHT_FLOOR = 1e-3
FALLBACK_STEP = 0.5


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters for ``θ`` and the baseline hazard.

    Parameters
    ----------
    hazard : {"indep", "dep", "haar"}
        Independent gamma heights ``λ_k ~ Gamma(alpha0, beta0)``; the
        dependent chain ``λ_1 ~ Gamma(alpha0, beta0)``,
        ``λ_k | λ_{k−1} ~ Gamma(alpha, alpha / λ_{k−1})``; or log-heights
        ``r = Σ σ_l Z_lk ψ_lk`` with i.i.d. ``Z_lk``.
    alpha0, beta0 : float, optional
        Defaults are ``(1, 1)`` for ``indep`` and ``(1.5, 1)`` for ``dep``.
    alpha, eps : float
        Dependent-prior shape and the small shape used by the interior-bin
        proposal ``Gamma(d_k + eps, alpha / λ_{k−1} + T_k)``.
    last_bin_rate : {"as-printed", "reciprocal"}
        Last-bin proposal rate ``alpha * λ_{K−1} + T_K`` or
        ``alpha / λ_{K−1} + T_K``; the latter is the exact full conditional.
    wavelet_density : {"gaussian", "laplace"}
    sigma_rule : {"unit", "decay"}
        ``σ_l = 1`` or ``σ_l = 2**(−l/2)`` (``σ_{−1} = 1`` in both cases).
    haar_step : float
        Random-walk step for each ``Z_lk``.
    theta_prior : {"std-normal", "uniform", "truncated-subbotin"}
        Truncated priors live on ``[−C, C]``; the Subbotin density is
        ``∝ exp(−|κ θ_j|**τ)``.
    theta_step : float
        Standard deviation of the per-coordinate normal proposal for ``θ``.
    """

    hazard: str = "indep"
    alpha0: float | None = None
    beta0: float | None = None
    alpha: float = 1.0
    eps: float = 1e-6
    last_bin_rate: str = "as-printed"
    wavelet_density: str = "gaussian"
    sigma_rule: str = "unit"
    haar_step: float = 0.3
    theta_prior: str = "std-normal"
    C: float = 10.0
    tau: float = 2.0
    kappa: float = 1.0
    theta_step: float = 1.0

    def __post_init__(self):
        if self.hazard not in HAZARD_PRIORS:
            raise PreconditionError(f"hazard prior must be one of {HAZARD_PRIORS}")
        if self.theta_prior not in THETA_PRIORS:
            raise PreconditionError(f"theta prior must be one of {THETA_PRIORS}")
        if self.last_bin_rate not in ("as-printed", "reciprocal"):
            raise PreconditionError("last_bin_rate must be 'as-printed' or 'reciprocal'")
        if self.wavelet_density not in ("gaussian", "laplace"):
            raise PreconditionError("wavelet_density must be 'gaussian' or 'laplace'")
        if self.sigma_rule not in ("unit", "decay"):
            raise PreconditionError("sigma_rule must be 'unit' or 'decay'")
        if self.alpha0 is None:
            object.__setattr__(self, "alpha0", 1.5 if self.hazard == "dep" else 1.0)
        if self.beta0 is None:
            object.__setattr__(self, "beta0", 1.0)
        for name in ("alpha0", "beta0", "alpha", "eps", "haar_step", "C", "tau", "kappa", "theta_step"):
            if not getattr(self, name) > 0:
                raise PreconditionError(f"{name} must be strictly positive")

    def sigma(self, level: int) -> np.ndarray:
        """Per-coefficient scales in :meth:`HaarCoefficients.to_vector` order."""
        s = [1.0]
        for l in range(level + 1):
            s += [1.0 if self.sigma_rule == "unit" else 2.0 ** (-l / 2)] * 2 ** l
        return np.array(s)


@dataclass(frozen=True)
class ChainConfig:
    """Run length and resolution.  ``level=None`` picks ``cutoff(n, beta)``."""

    n_iter: int = 10_000
    n_burn: int = 2_000
    seed: int = 0
    level: int | None = None
    beta: float = 0.5
    update_theta: bool = True
    update_hazard: bool = True

    def __post_init__(self):
        if not 0 <= self.n_burn < self.n_iter:
            raise PreconditionError("need 0 <= n_burn < n_iter")


@dataclass(frozen=True, eq=False)
class PosteriorChain:
    """Retained draws after burn-in.

    ``thetas`` has shape ``(n_iter − n_burn, p)`` and ``heights`` shape
    ``(n_iter − n_burn, K)``.  ``acceptance`` maps block names to the
    fraction of accepted proposals over all sweeps.
    """

    thetas: np.ndarray
    heights: np.ndarray
    n_iter: int
    n_burn: int
    seed: int
    level: int
    acceptance: dict
    flags: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return int(self.thetas.shape[0])

    @property
    def K(self) -> int:
        return int(self.heights.shape[1])

    def hazard(self, i: int) -> HistogramHazard:
        return HistogramHazard(self.level, self.heights[i])

    def cumhaz_at_one(self) -> np.ndarray:
        """``Λ(1) = Σ_k λ_k / K`` for every retained draw."""
        return self.heights.sum(axis=1) / self.K

    def last(self) -> tuple[np.ndarray, float]:
        return self.thetas[-1].copy(), float(self.heights[-1].sum() / self.K)

    def to_csv(self, path) -> None:
        p, K = self.thetas.shape[1], self.K
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter"] + [f"theta{j + 1}" for j in range(p)]
                       + [f"lambda{k + 1}" for k in range(K)])
            for i in range(self.n_draws):
                w.writerow([self.n_burn + i + 1] + [repr(float(v)) for v in self.thetas[i]]
                           + [repr(float(v)) for v in self.heights[i]])

    @classmethod
    def from_csv(cls, path, seed: int = 0) -> "PosteriorChain":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        head = rows[0]
        p = sum(h.startswith("theta") for h in head)
        body = np.array([[float(v) for v in r] for r in rows[1:] if r])
        K = body.shape[1] - 1 - p
        n_burn = int(body[0, 0]) - 1
        return cls(body[:, 1:1 + p], body[:, 1 + p:], n_burn + body.shape[0], n_burn, seed,
                   int(round(math.log2(K))) - 1, {})


def theta_log_prior(theta, prior: PriorSpec) -> float:
    theta = np.asarray(theta, dtype=float)
    if prior.theta_prior == "std-normal":
        return float(-0.5 * np.dot(theta, theta))
    if np.any(np.abs(theta) > prior.C):
        return -math.inf
    if prior.theta_prior == "uniform":
        return 0.0
    return float(-np.sum(np.abs(prior.kappa * theta) ** prior.tau))


def gibbs_step_indep_gamma(d, T, prior: PriorSpec, rng) -> np.ndarray:
    """Draw ``λ_k ~ Gamma(d_k + α₀, T_k + β₀)`` independently for every bin."""
    d = np.asarray(d, dtype=float)
    return rng.standard_gamma(d + prior.alpha0) / (np.asarray(T, dtype=float) + prior.beta0)


def _dep_log_target(k, x, lam, d, T, prior, K):
    """Log full conditional of ``λ_k`` (up to a constant) at ``x > 0``."""
    if k == 0:
        a, b = prior.alpha0, prior.beta0
    else:
        a, b = prior.alpha, prior.alpha / lam[k - 1]
    out = (d[k] + a - 1.0) * math.log(x) - (T[k] + b) * x
    if k < K - 1:
        out -= prior.alpha * (math.log(x) + lam[k + 1] / x)
    return out


def mh_step_dep_gamma(heights, d, T, prior: PriorSpec, rng):
    """One Metropolis–Hastings pass over the bins under the dependent-gamma prior.

    Bin ``k`` proposes from a gamma independence proposal whose parameters
    depend on the current ``λ_{k−1}``.  A proposal that underflows to 0 is
    rejected.  When the first-bin proposal shape is not positive that bin
    uses a log-normal random walk instead.

    Returns
    -------
    heights : ndarray
    accepted : int
        Number of accepted bin proposals.
    fallbacks : int
        Number of bins that used the random-walk fallback.
    """
    lam = np.array(heights, dtype=float)
    d = np.asarray(d, dtype=float)
    T = np.asarray(T, dtype=float)
    K = lam.shape[0]
    a = prior.alpha
    shapes = d + prior.eps
    shapes[0] = d[0] + prior.alpha0 - prior.alpha
    shapes[-1] = d[-1] + prior.alpha
    fallback = shapes <= 0
    draws = rng.standard_gamma(np.where(fallback, 1.0, shapes))
    steps = rng.standard_normal(K)
    logu = np.log(rng.random(K))
    accepted = 0
    for k in range(K):
        old = lam[k]
        if fallback[k]:
            new = old * math.exp(FALLBACK_STEP * steps[k])
            log_ratio = (_dep_log_target(k, new, lam, d, T, prior, K)
                         - _dep_log_target(k, old, lam, d, T, prior, K)
                         + math.log(new) - math.log(old))
        else:
            if k == 0:
                rate = T[0] + prior.beta0
            elif k == K - 1:
                prev = lam[k - 1]
                rate = T[k] + (a * prev if prior.last_bin_rate == "as-printed" else a / prev)
            else:
                rate = T[k] + a / lam[k - 1]
            new = draws[k] / rate
            if not new > 0 or not math.isfinite(new):
                continue
            s = shapes[k]
            log_ratio = (_dep_log_target(k, new, lam, d, T, prior, K)
                         - _dep_log_target(k, old, lam, d, T, prior, K)
                         - (s - 1.0) * (math.log(new) - math.log(old)) + rate * (new - old))
        if logu[k] < log_ratio:
            lam[k] = new
            accepted += 1
    return lam, accepted, int(fallback.sum())


def _wavelet_log_density(zv, density: str):
    return -0.5 * zv * zv if density == "gaussian" else -np.abs(zv)


def mh_step_haar(coefs, heights, d, T, prior: PriorSpec, basis, sigma, rng):
    """Gaussian random-walk update of each standardized wavelet coefficient in turn.

    ``heights = exp(basis @ (sigma * coefs))``; ``basis`` is
    :func:`haar_basis_on_bins`.  Returns ``(coefs, heights, accepted)``.
    """
    zc = np.array(coefs, dtype=float)
    lam = np.array(heights, dtype=float)
    d = np.asarray(d, dtype=float)
    T = np.asarray(T, dtype=float)
    K = zc.shape[0]
    steps = prior.haar_step * rng.standard_normal(K)
    logu = np.log(rng.random(K))
    accepted = 0
    for m in range(K):
        new_z = zc[m] + steps[m]
        dr = (sigma[m] * steps[m]) * basis[:, m]
        new_lam = lam * np.exp(dr)
        log_ratio = (float(d @ dr) - float(T @ (new_lam - lam))
                     + _wavelet_log_density(new_z, prior.wavelet_density)
                     - _wavelet_log_density(zc[m], prior.wavelet_density))
        if logu[m] < log_ratio:
            zc[m] = new_z
            lam = new_lam
            accepted += 1
    return zc, lam, accepted


def mh_step_theta(theta, z, delta, cum_at_y, prior: PriorSpec, rng, lin=None):
    """Coordinatewise random-walk Metropolis for ``θ``.

    Each coordinate proposes ``θ_j' ~ N(θ_j, theta_step²)``; the log
    acceptance ratio is the change in ``Σ δ_i θ'Z_i − Λ(Y_i) e^{θ'Z_i}`` plus
    the change in log prior.  ``cum_at_y`` holds ``Λ(Y_i)``.

    Returns ``(theta, accepted, lin)`` with ``lin = Z θ`` at the new value.
    """
    theta = np.array(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    p = theta.shape[0]
    lin = z @ theta if lin is None else np.array(lin, dtype=float)
    e = np.exp(lin)
    steps = prior.theta_step * rng.standard_normal(p)
    logu = np.log(rng.random(p))
    lp = theta_log_prior(theta, prior)
    accepted = 0
    for j in range(p):
        prop = theta.copy()
        prop[j] += steps[j]
        lp_new = theta_log_prior(prop, prior)
        if lp_new == -math.inf:
            continue
        dlin = steps[j] * z[:, j]
        e_new = np.exp(lin + dlin)
        dll = float(delta @ dlin) - float(cum_at_y @ (e_new - e))
        if logu[j] < dll + lp_new - lp:
            theta, lin, e, lp = prop, lin + dlin, e_new, lp_new
            accepted += 1
    return theta, accepted, lin


def initial_state(data: SurvivalDataset, level: int):
    """Frequentist starting point: partial-likelihood MLE and binned Breslow increments.

    Returns ``(theta, heights, degenerate)``.  Data without events or with
    identical covariates start from ``θ = 0``, ``λ ≡ 1`` and set the flag.
    """
    K = 2 ** (level + 1)
    try:
        fit = fit_cox(data)
    except DegenerateDataError:
        return np.zeros(data.p), np.ones(K), True
    if fit.degenerate:
        return np.zeros(data.p), np.ones(K), True
    edges = np.arange(K + 1) / K
    cum = fit.breslow(edges)
    heights = np.maximum(np.diff(cum) * K, HEIGHT_FLOOR)
    return fit.theta_hat.copy(), heights, False


class _BinnedExposure:
    """O(n) evaluation of ``T(θ)`` and ``Λ(Y_i)`` using the staircase shape of the exposure matrix."""

    def __init__(self, y, K):
        self.K = K
        self.w = 1.0 / K
        self.bin = bin_index(y, K)
        self.part = y - self.bin * self.w

    def totals(self, risk):
        full = np.bincount(self.bin, weights=risk, minlength=self.K)
        tail = np.cumsum(full[::-1])[::-1] - full
        return self.w * tail + np.bincount(self.bin, weights=risk * self.part, minlength=self.K)

    def cumulative_at_y(self, lam):
        before = np.concatenate([[0.0], np.cumsum(lam)[:-1]]) * self.w
        return before[self.bin] + lam[self.bin] * self.part


def run_chain(data: SurvivalDataset, prior: PriorSpec, config: ChainConfig = ChainConfig(),
              init=None) -> PosteriorChain:
    """Run one Markov chain and keep the draws after burn-in.

    Parameters
    ----------
    init : tuple (theta, heights), optional
        Starting point.  Defaults to :func:`initial_state`; required for
        an empty dataset.
    """
    if data.n == 0 and init is None:
        raise PreconditionError("an empty dataset needs an explicit starting point")
    level = config.level
    if level is None:
        if data.n < 2:
            raise PreconditionError("choose the level explicitly for n < 2")
        level = cutoff(data.n, config.beta)
    K = 2 ** (level + 1)
    flags = {"degenerate_init": False, "fallback_bins": 0}
    if init is None:
        theta, lam, flags["degenerate_init"] = initial_state(data, level)
    else:
        theta = np.array(init[0], dtype=float).reshape(-1)
        lam = np.array(init[1], dtype=float).reshape(-1)
        if lam.shape[0] != K or theta.shape[0] != data.p:
            raise PreconditionError("starting point does not match the level or covariate dimension")
        if not np.all(lam > 0):
            raise PreconditionError("starting heights must be positive")

    summary = exposure_summary(data, level)
    ex = _BinnedExposure(np.asarray(data.y), K)
    d = np.asarray(summary.d)
    z = np.asarray(data.z)
    delta = np.asarray(data.delta, dtype=float)
    rng = make_rng(config.seed)

    basis = sigma = zc = None
    if prior.hazard == "haar":
        basis = haar_basis_on_bins(level)
        sigma = prior.sigma(level)
        zc = haar_forward(np.log(lam)).to_vector() / sigma

    n_keep = config.n_iter - config.n_burn
    thetas = np.empty((n_keep, data.p))
    heights = np.empty((n_keep, K))
    acc_h = acc_t = 0
    lin = z @ theta
    for it in range(config.n_iter):
        if config.update_hazard:
            T = ex.totals(np.exp(lin))
            if prior.hazard == "indep":
                lam = gibbs_step_indep_gamma(d, T, prior, rng)
                acc_h += K
            elif prior.hazard == "dep":
                lam, a, fb = mh_step_dep_gamma(lam, d, T, prior, rng)
                acc_h += a
                flags["fallback_bins"] += fb
            else:
                zc, lam, a = mh_step_haar(zc, lam, d, T, prior, basis, sigma, rng)
                acc_h += a
        if config.update_theta:
            theta, a, lin = mh_step_theta(theta, z, delta, ex.cumulative_at_y(lam), prior, rng, lin)
            acc_t += a
        if it >= config.n_burn:
            thetas[it - config.n_burn] = theta
            heights[it - config.n_burn] = lam
    acceptance = {
        "hazard": acc_h / (config.n_iter * K) if config.update_hazard else float("nan"),
        "theta": acc_t / (config.n_iter * data.p) if config.update_theta else float("nan"),
    }
    return PosteriorChain(thetas, heights, config.n_iter, config.n_burn, config.seed,
                          level, acceptance, flags)


@dataclass(frozen=True, eq=False)
class HarvestResult:
    """Final draws of independent chains: ``thetas`` (m, p) and ``cumhaz1`` (m,).

    ``chain_index`` maps rows back to chain numbers; ``failures`` lists
    ``(chain, message)`` for chains that raised.
    """

    thetas: np.ndarray
    cumhaz1: np.ndarray
    chain_index: np.ndarray
    failures: list

    def __len__(self) -> int:
        return int(self.cumhaz1.shape[0])

    def __iter__(self):
        return iter(zip(self.thetas, self.cumhaz1))

    def pairs(self, coordinate: int = 0) -> np.ndarray:
        """``(θ_j, Λ(1))`` as an ``(m, 2)`` array."""
        return np.column_stack([self.thetas[:, coordinate], self.cumhaz1])


class _LastDraw:
    def __init__(self, data, prior, config, master_seed):
        self.data, self.prior, self.config, self.master_seed = data, prior, config, master_seed

    def __call__(self, c):
        cfg = replace(self.config, seed=derive_seed(self.master_seed, c))
        try:
            return run_chain(self.data, self.prior, cfg).last()
        except (CoxScaleError, np.linalg.LinAlgError, FloatingPointError) as exc:
            return exc


def harvest_last_draws(data: SurvivalDataset, prior: PriorSpec, config: ChainConfig,
                       n_chains: int, master_seed: int, workers: int | None = None) -> HarvestResult:
    """Run ``n_chains`` chains with seeds ``derive_seed(master_seed, c)`` and keep each final draw.

    Raises
    ------
    CoxScaleError
        More than 1% of the chains failed.
    """
    if n_chains < 1:
        raise PreconditionError("n_chains must be at least 1")
    out = parallel_map(_LastDraw(data, prior, config, master_seed), range(n_chains), workers)
    failures = [(c, str(r)) for c, r in enumerate(out) if isinstance(r, Exception)]
    if len(failures) > 0.01 * n_chains:
        raise CoxScaleError(f"{len(failures)} of {n_chains} chains failed; first: {failures[0]}")
    ok = [c for c, r in enumerate(out) if not isinstance(r, Exception)]
    thetas = np.array([out[c][0] for c in ok]).reshape(len(ok), data.p)
    cum = np.array([out[c][1] for c in ok], dtype=float)
    return HarvestResult(thetas, cum, np.array(ok, dtype=int), failures)
