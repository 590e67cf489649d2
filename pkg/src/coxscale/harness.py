"""Replicated simulation studies driven by a JSON configuration.

A configuration is a JSON document with sections ``data``, ``prior``,
``sampler``, ``bands`` and ``study``.  Dotted paths such as
``sampler.n_iter`` address single entries; command-line flags override the
file through :func:`apply_overrides`.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .asymptotics import bvm_covariance, compute_tables
from .bands import curves_from_draws, default_grid, fixed_width_credible_band, joint_credible_regions
from .errors import CoxScaleError, PreconditionError
from .frequentist import fit_cox, multiplier_confidence_band
from .mcmc import ChainConfig, PriorSpec, harvest_last_draws, run_chain
from .model import HistogramHazard, TruthSpec
from .multiscale import hellinger_rate, sup_norm_distance
from .parallel import parallel_map
from .seeding import derive_seed
from .simulate import generate_dataset

__all__ = [
    "DEFAULT_CONFIG",
    "default_config",
    "load_config",
    "apply_overrides",
    "truth_from_config",
    "prior_from_config",
    "chain_config",
    "study1",
    "study2",
    "write_study2_csv",
    "rate_diagnostic",
    "write_rate_csv",
]

log = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "data": {"n": 200, "truth": "smooth-a", "theta0": [-0.5], "censoring": "admin", "seed": 0},
    "prior": {"hazard": "indep", "theta_prior": "std-normal", "last_bin_rate": "as-printed"},
    "sampler": {"n_iter": 10_000, "n_burn": 2_000, "level": None, "beta": 0.5, "seed": 0},
    "bands": {"level": 0.95, "grid_points": 257, "B": 1000, "z": None},
    "study": {
        "replicates": 200,
        "n_chains": 500,
        "n_list": [200],
        "censoring_list": ["admin", "admin-unif"],
        "methods": ["ind", "dep", "freq"],
        "master_seed": 0,
        "workers": None,
    },
}

STUDY2_SAMPLER = {"n_iter": 4_000, "n_burn": 800}
METHOD_PRIOR = {"ind": "indep", "dep": "dep"}
MAX_FAILURE_RATE = 0.01


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def default_config(kind: str | None = None) -> dict:
    """Defaults; ``kind="study2"`` shortens the chains to 4000 sweeps with 800 burn-in."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if kind == "study2":
        cfg["sampler"].update(STUDY2_SAMPLER)
    return cfg


def apply_overrides(config: dict, overrides: dict) -> dict:
    """Set ``{"section.key": value}`` entries; ``None`` values are ignored."""
    out = copy.deepcopy(config)
    for path, value in overrides.items():
        if value is None:
            continue
        section, _, key = path.partition(".")
        if section not in DEFAULT_CONFIG or not key:
            raise PreconditionError(f"unknown config path {path!r}")
        out.setdefault(section, {})[key] = value
    return out


def load_config(path=None, overrides: dict | None = None, kind: str | None = None) -> dict:
    cfg = default_config(kind)
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise PreconditionError(f"unknown config sections {sorted(unknown)}")
        cfg = _merge(cfg, user)
    return apply_overrides(cfg, overrides or {})


def truth_from_config(cfg: dict, censoring: str | None = None) -> TruthSpec:
    data = cfg["data"]
    return TruthSpec(np.asarray(data["theta0"], dtype=float), data["truth"],
                     censoring or data["censoring"])


def prior_from_config(cfg: dict, hazard: str | None = None) -> PriorSpec:
    kw = {k: v for k, v in cfg["prior"].items() if v is not None}
    if hazard is not None:
        kw["hazard"] = hazard
    return PriorSpec(**kw)


def chain_config(cfg: dict, seed: int | None = None) -> ChainConfig:
    s = cfg["sampler"]
    return ChainConfig(n_iter=int(s["n_iter"]), n_burn=int(s["n_burn"]),
                       seed=int(s["seed"] if seed is None else seed),
                       level=None if s.get("level") is None else int(s["level"]),
                       beta=float(s.get("beta", 0.5)))


def conditional_z(cfg: dict, p: int) -> np.ndarray:
    """Covariate value for conditional curves: ``bands.z`` or the all-ones vector."""
    z = cfg["bands"].get("z")
    z = np.ones(p) if z is None else np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != p:
        raise PreconditionError("bands.z must have one entry per covariate")
    return z


# --- Study I -----------------------------------------------------------------------------

def _normal_summary(mean, sd) -> dict:
    return {"mean": float(mean), "sd": float(sd)}


def _ellipse(mean, cov, chi2) -> dict:
    vals, vecs = np.linalg.eigh(cov)
    return {"mean": list(map(float, mean)), "cov": np.asarray(cov).tolist(),
            "semi_axes": np.sqrt(chi2 * vals).tolist(),
            "angle": float(math.atan2(vecs[1, -1], vecs[0, -1])),
            "area": float(math.pi * chi2 * math.sqrt(max(np.linalg.det(cov), 0.0)))}


def study1(cfg: dict) -> dict:
    """Last-draw harvest for ``(θ₁, Λ(1))`` compared with the limiting normal law.

    The report holds histogram data, empirical and theoretical normal
    parameters, the joint cloud, credible ellipse and rectangle, and the
    theoretical ellipse centred at the frequentist estimates.
    """
    truth = truth_from_config(cfg)
    n = int(cfg["data"]["n"])
    st = cfg["study"]
    level = float(cfg["bands"]["level"])
    data = generate_dataset(n, truth, int(cfg["data"]["seed"]))
    prior = prior_from_config(cfg)
    harvest = harvest_last_draws(data, prior, chain_config(cfg), int(st["n_chains"]),
                                 int(st["master_seed"]), st.get("workers"))
    pairs = harvest.pairs(0)
    m = pairs.shape[0]

    tables = compute_tables(truth)
    a = np.eye(truth.p)[0]
    S = bvm_covariance(tables, a, 1.0)
    sd_th = np.sqrt(np.diag(S)) / math.sqrt(n)
    fit = fit_cox(data)
    center = np.array([fit.theta_hat[0], fit.breslow(1.0)])

    emp_mean = pairs.mean(axis=0)
    emp_sd = pairs.std(axis=0, ddof=1) if m > 1 else np.zeros(2)
    emp_corr = float(np.corrcoef(pairs.T)[0, 1]) if m > 2 else float("nan")
    tail = (1.0 - level) / 2.0
    lo = np.quantile(pairs, tail, axis=0)
    hi = np.quantile(pairs, 1.0 - tail, axis=0)
    true_vals = np.array([truth.theta0[0], float(truth.cumulative(1.0))])

    report = {
        "n": n, "n_chains": int(st["n_chains"]), "n_ok": m,
        "failures": harvest.failures,
        "truth": {"theta1": float(true_vals[0]), "Lambda1": float(true_vals[1])},
        "estimates": {"theta1_hat": float(center[0]), "Lambda1_breslow": float(center[1])},
        "theoretical": {
            "cov_scaled": S.tolist(),
            "theta1": _normal_summary(center[0], sd_th[0]),
            "Lambda1": _normal_summary(center[1], sd_th[1]),
            "corr": float(S[0, 1] / math.sqrt(S[0, 0] * S[1, 1])),
        },
        "empirical": {
            "theta1": _normal_summary(emp_mean[0], emp_sd[0]),
            "Lambda1": _normal_summary(emp_mean[1], emp_sd[1]),
            "corr": emp_corr,
            "interval_theta1": [float(lo[0]), float(hi[0])],
            "interval_Lambda1": [float(lo[1]), float(hi[1])],
            "theta1_covered": bool(lo[0] <= true_vals[0] <= hi[0]),
            "Lambda1_covered": bool(lo[1] <= true_vals[1] <= hi[1]),
        },
        "cloud": pairs.tolist(),
    }
    if m > 1:
        bins = min(30, max(1, m // 10))
        for j, name in enumerate(("theta1", "Lambda1")):
            counts, edges = np.histogram(pairs[:, j], bins=bins)
            report["empirical"][name]["histogram"] = {"counts": counts.tolist(), "edges": edges.tolist()}
    if m >= 100:
        regions = joint_credible_regions(pairs, level)
        report["regions"] = regions.to_dict()
        report["theoretical"]["ellipse"] = _ellipse(center, S / n, regions.chi2)
    return report


# --- Study II ----------------------------------------------------------------------------

@dataclass(frozen=True)
class _Replicate:
    cfg: dict
    censoring: str
    n: int
    index: int
    seed: int


def _run_replicate(rep: _Replicate):
    """Coverage and area for every method and both survival targets on one dataset."""
    cfg = rep.cfg
    truth = truth_from_config(cfg, rep.censoring)
    grid = default_grid(int(cfg["bands"]["grid_points"]))
    level = float(cfg["bands"]["level"])
    targets = {"baseline": np.zeros(truth.p), "conditional": conditional_z(cfg, truth.p)}
    try:
        data = generate_dataset(rep.n, truth, derive_seed(rep.seed, 0))
        out = {}
        for mi, method in enumerate(cfg["study"]["methods"]):
            mseed = derive_seed(rep.seed, 1, mi)
            chain = None
            if method != "freq":
                chain = run_chain(data, prior_from_config(cfg, METHOD_PRIOR[method]),
                                  chain_config(cfg, mseed))
            else:
                fit = fit_cox(data)
            for function, z in targets.items():
                truth_curve = truth.survival(grid, z)
                if chain is None:
                    band = multiplier_confidence_band(data, fit, z, "survival", level,
                                                      int(cfg["bands"]["B"]), mseed, grid)
                else:
                    curves = curves_from_draws(chain.thetas, chain.heights, z, "survival", grid)
                    band = fixed_width_credible_band(curves, level, grid, "survival")
                out[(method, function)] = (band.covers(truth_curve), band.area())
        return out
    except (CoxScaleError, np.linalg.LinAlgError) as exc:
        return f"replicate {rep.index} ({rep.censoring}, n={rep.n}): {exc}"


def study2(cfg: dict) -> list[dict]:
    """Coverage/area table: one row per method, ``n``, censoring mode and survival target.

    Each replicate dataset is shared by all methods.  Failed replicates are
    logged and excluded while they stay below 1% of a cell.
    """
    st = cfg["study"]
    R = int(st["replicates"])
    if R < 1:
        raise PreconditionError("need at least one replicate")
    for m in st["methods"]:
        if m not in ("ind", "dep", "freq"):
            raise PreconditionError(f"unknown method {m!r}")
    master = int(st["master_seed"])
    reps = [_Replicate(cfg, cens, int(n), r, derive_seed(master, ci, ni, r))
            for ci, cens in enumerate(st["censoring_list"])
            for ni, n in enumerate(st["n_list"])
            for r in range(R)]
    results = parallel_map(_run_replicate, reps, st.get("workers"))
    rows = []
    for ci, cens in enumerate(st["censoring_list"]):
        for ni, n in enumerate(st["n_list"]):
            block = results[(ci * len(st["n_list"]) + ni) * R:(ci * len(st["n_list"]) + ni + 1) * R]
            failed = [b for b in block if isinstance(b, str)]
            for msg in failed:
                log.warning(msg)
            if len(failed) > MAX_FAILURE_RATE * R:
                raise CoxScaleError(f"{len(failed)} of {R} replicates failed; first: {failed[0]}")
            ok = [b for b in block if not isinstance(b, str)]
            for method in st["methods"]:
                for function in ("baseline", "conditional"):
                    vals = np.array([b[(method, function)] for b in ok], dtype=float).reshape(-1, 2)
                    rows.append({"method": method, "n": int(n), "censoring": cens,
                                 "function": function,
                                 "coverage": float(vals[:, 0].mean()) if len(ok) else float("nan"),
                                 "area": float(vals[:, 1].mean()) if len(ok) else float("nan"),
                                 "replicates": len(ok), "failed": len(failed)})
    return rows


STUDY2_COLUMNS = ["method", "n", "censoring", "function", "coverage", "area", "replicates", "failed"]


def write_study2_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=STUDY2_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(r)


# --- rate diagnostic ---------------------------------------------------------------------

@dataclass(frozen=True)
class _RateTask:
    cfg: dict
    n: int
    index: int
    seed: int


def _rate_error(task: _RateTask):
    cfg = task.cfg
    truth = truth_from_config(cfg)
    z = conditional_z(cfg, truth.p)
    grid = default_grid(int(cfg["bands"]["grid_points"]))
    try:
        data = generate_dataset(task.n, truth, derive_seed(task.seed, 0))
        chain = run_chain(data, prior_from_config(cfg), chain_config(cfg, derive_seed(task.seed, 1)))
    except (CoxScaleError, np.linalg.LinAlgError) as exc:
        return f"replicate {task.index} (n={task.n}): {exc}"
    risk = math.exp(float(chain.thetas.mean(axis=0) @ z))
    est = HistogramHazard(chain.level, chain.heights.mean(axis=0) * risk)
    truth_curve = np.asarray(truth.hazard(grid)) * math.exp(float(truth.theta0 @ z))
    return sup_norm_distance(est, truth_curve, grid)


def rate_diagnostic(cfg: dict) -> list[dict]:
    """Median sup-norm error of the posterior-mean conditional hazard for each ``n``.

    The estimate is ``λ̄(t) e^{θ̄'z}`` built from the posterior means; rows also carry
    the ratio to ``ν_n = (log n / n)**(β/(2β+1))``.
    """
    st = cfg["study"]
    n_list = [int(n) for n in st["n_list"]]
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise PreconditionError("n_list needs at least 3 strictly increasing sizes")
    beta = float(cfg["sampler"].get("beta", 0.5))
    R = int(st["replicates"])
    master = int(st["master_seed"])
    tasks = [_RateTask(cfg, n, r, derive_seed(master, ni, r))
             for ni, n in enumerate(n_list) for r in range(R)]
    out = parallel_map(_rate_error, tasks, st.get("workers"))
    rows = []
    for ni, n in enumerate(n_list):
        block = out[ni * R:(ni + 1) * R]
        errs = np.array([e for e in block if not isinstance(e, str)], dtype=float)
        failed = [e for e in block if isinstance(e, str)]
        for msg in failed:
            log.warning(msg)
        if len(failed) > MAX_FAILURE_RATE * R:
            raise CoxScaleError(f"{len(failed)} of {R} replicates failed; first: {failed[0]}")
        med = float(np.median(errs)) if errs.size else float("nan")
        nu = hellinger_rate(n, beta)
        rows.append({"n": n, "median_error": med, "nu_n": nu, "ratio": med / nu,
                     "replicates": int(errs.size), "failed": len(block) - int(errs.size)})
    return rows


RATE_COLUMNS = ["n", "median_error", "nu_n", "ratio", "replicates", "failed"]


def write_rate_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RATE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(r)
