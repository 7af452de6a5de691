"""Bayesian fitting and comparison of insect and mite developmental-rate curves.

Four temperature-response curves (Bieri, Briere, Analytis, Lactin) under
Gaussian, inverse-gamma and zero-inflated inverse-gamma observation models,
fitted by Hamiltonian Monte Carlo or variational inference and compared
with information criteria and marginal-likelihood estimates.
"""

__version__ = "0.1.0"

from .advi import AdviConfig, FullRankFamily, MeanFieldFamily, advi_fit, elbo_estimate
from .bma import WeightVector, bma_summary, evidence_weights, ic_weights
from .criteria import aic, bic, criteria_report, dic, loocv_exact, mle_fit, waic
from .curves import (Analytis, AnalytisParams, Bieri, BieriParams, Briere, BriereParams, Lactin, LactinParams,
                     get_curve, rate, t_inflection, t_opt, thermal_thresholds)
from .diagnostics import ess, mcse_mean, split_rhat
from .errors import DevrateError, NumericalError, ValidationError
from .evidence import (BridgeConfig, EvidenceEstimate, TemperatureLadder, analytic_evidence, bridge_evidence,
                       importance_evidence, power_posterior_evidence)
from .hmc import DrawsMatrix, HmcConfig, hmc_sample
from .io import load_dataset
from .model import GaussianTarget, ModelSpec, NormalMeanModel, Posterior, grad_log_posterior, log_posterior_unnorm
from .obs_models import Dataset, Gaussian, InvGamma, ZeroInflatedInvGamma, default_priors, simulate_dataset

__all__ = [
    "AdviConfig",
    "FullRankFamily",
    "MeanFieldFamily",
    "advi_fit",
    "elbo_estimate",
    "WeightVector",
    "bma_summary",
    "evidence_weights",
    "ic_weights",
    "aic",
    "bic",
    "criteria_report",
    "dic",
    "loocv_exact",
    "mle_fit",
    "waic",
    "Analytis",
    "AnalytisParams",
    "Bieri",
    "BieriParams",
    "Briere",
    "BriereParams",
    "Lactin",
    "LactinParams",
    "get_curve",
    "rate",
    "t_inflection",
    "t_opt",
    "thermal_thresholds",
    "ess",
    "mcse_mean",
    "split_rhat",
    "DevrateError",
    "NumericalError",
    "ValidationError",
    "BridgeConfig",
    "EvidenceEstimate",
    "TemperatureLadder",
    "analytic_evidence",
    "bridge_evidence",
    "importance_evidence",
    "power_posterior_evidence",
    "DrawsMatrix",
    "HmcConfig",
    "hmc_sample",
    "load_dataset",
    "GaussianTarget",
    "ModelSpec",
    "NormalMeanModel",
    "Posterior",
    "grad_log_posterior",
    "log_posterior_unnorm",
    "Dataset",
    "Gaussian",
    "InvGamma",
    "ZeroInflatedInvGamma",
    "default_priors",
    "simulate_dataset",
]
