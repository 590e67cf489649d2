"""Command-line entry point: ``coxscale <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import harness
from .asymptotics import bvm_covariance, compute_tables
from .bands import curves_from_draws, default_grid, fixed_width_credible_band, joint_credible_regions
from .errors import CoxScaleError
from .frequentist import fit_cox, multiplier_confidence_band
from .mcmc import PosteriorChain, run_chain
from .model import SurvivalDataset
from .simulate import censored_fraction, generate_dataset

PRIOR_CHOICES = ("indep", "dep", "haar")
TRUTH_CHOICES = ("smooth-a", "smooth-b", "piecewise", "unit")
CENSORING_CHOICES = ("admin", "admin-unif")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _add_data_flags(p):
    p.add_argument("--n", type=int, dest="data.n")
    p.add_argument("--truth", choices=TRUTH_CHOICES, dest="data.truth")
    p.add_argument("--theta0", type=_floats, dest="data.theta0", help="comma-separated vector")
    p.add_argument("--censoring", choices=CENSORING_CHOICES, dest="data.censoring")
    p.add_argument("--data-seed", type=int, dest="data.seed")


def _add_sampler_flags(p):
    p.add_argument("--prior", choices=PRIOR_CHOICES, dest="prior.hazard")
    p.add_argument("--last-bin-rate", choices=("as-printed", "reciprocal"), dest="prior.last_bin_rate")
    p.add_argument("--iters", type=int, dest="sampler.n_iter")
    p.add_argument("--burn", type=int, dest="sampler.n_burn")
    p.add_argument("--level", type=int, dest="sampler.level", help="resolution L (K = 2**(L+1) bins)")
    p.add_argument("--beta", type=float, dest="sampler.beta")


def _add_study_flags(p):
    p.add_argument("--config", help="JSON config with sections data, prior, sampler, bands, study")
    p.add_argument("--replicates", type=int, dest="study.replicates")
    p.add_argument("--n-list", type=_ints, dest="study.n_list")
    p.add_argument("--master-seed", type=int, dest="study.master_seed")
    p.add_argument("--workers", type=int, dest="study.workers")
    p.add_argument("--band-level", type=float, dest="bands.level")
    p.add_argument("--B", type=int, dest="bands.B")
    p.add_argument("--z", type=_floats, dest="bands.z")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coxscale", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--truth", choices=TRUTH_CHOICES, default="smooth-a")
    p.add_argument("--theta0", type=_floats, default=[-0.5])
    p.add_argument("--censoring", choices=CENSORING_CHOICES, default="admin")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit-freq", help="partial-likelihood fit and multiplier confidence band")
    p.add_argument("--data", required=True)
    p.add_argument("--z", type=_floats)
    p.add_argument("--band", choices=("cumhaz", "survival"), default="survival")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--B", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sample", help="run one posterior chain")
    p.add_argument("--data", required=True)
    p.add_argument("--prior", choices=PRIOR_CHOICES, default="indep")
    p.add_argument("--last-bin-rate", choices=("as-printed", "reciprocal"), default="as-printed")
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--burn", type=int, default=2_000)
    p.add_argument("--level", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bands", help="credible band (and joint regions) from a chain CSV")
    p.add_argument("--chain", required=True)
    p.add_argument("--z", type=_floats)
    p.add_argument("--band", choices=("cumhaz", "survival"), default="survival")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--grid-points", type=int, default=257)
    p.add_argument("--regions-out", help="also write joint (theta1, Lambda(1)) regions as JSON")
    p.add_argument("--out", required=True)

    for name, helptext in (("bvm-check", "Study I harvest versus the limiting covariance (JSON)"),
                           ("study1", "Study I report (JSON)")):
        p = sub.add_parser(name, help=helptext)
        _add_data_flags(p)
        _add_sampler_flags(p)
        _add_study_flags(p)
        p.add_argument("--chains", type=int, dest="study.n_chains")

    p = sub.add_parser("study2", help="coverage and area table (CSV)")
    _add_data_flags(p)
    _add_sampler_flags(p)
    _add_study_flags(p)
    p.add_argument("--censoring-list", type=lambda s: s.replace(",", " ").split(),
                   dest="study.censoring_list")
    p.add_argument("--methods", type=lambda s: s.replace(",", " ").split(), dest="study.methods")

    p = sub.add_parser("rate-diag", help="sup-norm error scan over n (CSV)")
    _add_data_flags(p)
    _add_sampler_flags(p)
    _add_study_flags(p)
    return ap


def _overrides(args) -> dict:
    return {k: v for k, v in vars(args).items() if "." in k}


def _z_for(z, p: int) -> np.ndarray:
    return np.zeros(p) if z is None else np.asarray(z, dtype=float)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (CoxScaleError, OSError, ValueError) as exc:
        print(f"coxscale {args.command}: error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "simulate":
        truth = harness.truth_from_config({"data": {"theta0": args.theta0, "truth": args.truth,
                                                    "censoring": args.censoring}})
        data = generate_dataset(args.n, truth, args.seed)
        data.to_csv(args.out)
        logging.info("wrote %d subjects (censored fraction %.3f)", data.n, censored_fraction(data))
    elif cmd == "fit-freq":
        data = SurvivalDataset.from_csv(args.data)
        fit = fit_cox(data)
        band = multiplier_confidence_band(data, fit, _z_for(args.z, data.p), args.band,
                                          args.level, args.B, args.seed)
        band.to_csv(args.out)
        print(json.dumps({"theta_hat": fit.theta_hat.tolist(), "info": fit.info.tolist(),
                          "c": band.meta["c"], "area": band.area()}))
    elif cmd == "sample":
        data = SurvivalDataset.from_csv(args.data)
        cfg = harness.default_config()
        cfg = harness.apply_overrides(cfg, {"prior.hazard": args.prior,
                                            "prior.last_bin_rate": args.last_bin_rate,
                                            "sampler.n_iter": args.iters, "sampler.n_burn": args.burn,
                                            "sampler.level": args.level, "sampler.seed": args.seed})
        chain = run_chain(data, harness.prior_from_config(cfg), harness.chain_config(cfg))
        chain.to_csv(args.out)
        print(json.dumps({"level": chain.level, "draws": chain.n_draws,
                          "acceptance": chain.acceptance, "flags": chain.flags}))
    elif cmd == "bands":
        chain = PosteriorChain.from_csv(args.chain)
        grid = default_grid(args.grid_points)
        z = _z_for(args.z, chain.thetas.shape[1])
        curves = curves_from_draws(chain.thetas, chain.heights, z, args.band, grid)
        band = fixed_width_credible_band(curves, args.level, grid, args.band)
        band.to_csv(args.out)
        summary = {"radius": band.radius, "area": band.area(), "area_preclip": band.area_preclip}
        if args.regions_out:
            pairs = np.column_stack([chain.thetas[:, 0], chain.cumhaz_at_one()])
            regions = joint_credible_regions(pairs, args.level)
            regions.to_json(args.regions_out)
            summary.update(ellipse_area=regions.ellipse_area, rect_area=regions.rect_area)
        print(json.dumps(summary))
    elif cmd in ("study1", "bvm-check"):
        cfg = harness.load_config(args.config, _overrides(args))
        report = harness.study1(cfg)
        if cmd == "bvm-check":
            report = {k: report[k] for k in ("n", "n_ok", "truth", "estimates", "theoretical",
                                              "empirical", "regions") if k in report}
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2)
    elif cmd == "study2":
        over = _overrides(args)
        if over.get("data.n") is not None and over.get("study.n_list") is None:
            over["study.n_list"] = [over["data.n"]]
        cfg = harness.load_config(args.config, over, kind="study2")
        harness.write_study2_csv(harness.study2(cfg), args.out)
    elif cmd == "rate-diag":
        cfg = harness.load_config(args.config, _overrides(args))
        harness.write_rate_csv(harness.rate_diagnostic(cfg), args.out)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
