"""Bayesian inference for the Cox proportional-hazards model with histogram hazard priors.

Submodules: :mod:`~coxscale.model` (data, hazards, likelihood),
:mod:`~coxscale.simulate`, :mod:`~coxscale.frequentist` (partial likelihood,
Breslow, multiplier bands), :mod:`~coxscale.mcmc` (samplers),
:mod:`~coxscale.multiscale` (Haar tools and the resolution rule),
:mod:`~coxscale.asymptotics` (limiting covariance), :mod:`~coxscale.bands`
(credible bands and regions) and :mod:`~coxscale.harness` (simulation studies).
"""
from .asymptotics import AsymptoticTables, bvm_covariance, compute_tables, evaluate_Wn, simulate_limit_process
from .bands import Band, JointRegions, fixed_width_credible_band, joint_credible_regions
from .errors import (
    AccuracyError,
    CoxScaleError,
    DegenerateDataError,
    DegenerateRegionError,
    DomainError,
    NonConvergenceError,
    PreconditionError,
)
from .frequentist import CoxFrequentistFit, breslow, fit_cox, fit_partial_likelihood, multiplier_confidence_band
from .mcmc import ChainConfig, PosteriorChain, PriorSpec, harvest_last_draws, run_chain
from .model import HistogramHazard, SurvivalDataset, TruthSpec, cumulative_hazard, log_likelihood
from .multiscale import HaarCoefficients, cutoff, haar_forward, haar_inverse
from .simulate import generate_dataset

__version__ = "0.1.0"

__all__ = [
    "AccuracyError", "AsymptoticTables", "Band", "ChainConfig", "CoxFrequentistFit", "CoxScaleError",
    "DegenerateDataError", "DegenerateRegionError", "DomainError", "HaarCoefficients", "HistogramHazard",
    "JointRegions", "NonConvergenceError", "PosteriorChain", "PreconditionError", "PriorSpec",
    "SurvivalDataset", "TruthSpec", "breslow", "bvm_covariance", "compute_tables", "cumulative_hazard",
    "cutoff", "evaluate_Wn", "fit_cox", "fit_partial_likelihood", "fixed_width_credible_band",
    "generate_dataset", "haar_forward", "haar_inverse", "harvest_last_draws", "joint_credible_regions",
    "log_likelihood", "multiplier_confidence_band", "run_chain", "simulate_limit_process",
]
