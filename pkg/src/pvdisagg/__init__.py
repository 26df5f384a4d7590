"""Behind-the-meter PV disaggregation toolkit.

Recovers the consumer load hidden behind rooftop PV from net-load and
sparse irradiance measurements: a spatial Gaussian process fills in the
clear-sky index at unmetered sites, a deterministic plant chain turns
it into aggregate PV power, and a jump-diffusion load model calibrated
by statistics matching yields forward prediction envelopes.
"""

from .disagg import (CalibrationProblem, CalibrationResult,
                     PredictionEnvelope, StatVector, calibrate, coverage,
                     masked_from_net, objective, predict_masked,
                     random_restarts, simulate_paths, stat_vector)
from .errors import (EstimationFailureError, InvalidArgumentError,
                     NumericFailureError, PvDisaggError)
from .oujump import (EstimationReport, JumpRecord, KsResult, OuParams,
                     detect_jumps, estimate_gamma_rate, estimate_params,
                     fit_jump_distribution, ks_test, residual_filter,
                     simulate_em, simulate_exact)
from .pvmodel import (PvSite, TranspositionInputs, ac_power, aggregate_pv,
                      dc_power, site_chain, split_irradiance,
                      tilted_irradiance)
from .spatialgp import (ConditionalGaussian, CovMatrix, GpKernelParams,
                        KernelFit, SiteLayout, build_cov, condition,
                        empirical_cov, fit_kernel, kernel_eval,
                        layout_from_latlon, sample)
from .timeseries import (DEFAULT_KAPPA_FLOOR_WM2, KappaPanel, UniformSeries,
                         check_aligned, clear_sky_index, debias, downsample)

__version__ = "0.1.0"

__all__ = [
    "CalibrationProblem", "CalibrationResult", "ConditionalGaussian",
    "CovMatrix", "DEFAULT_KAPPA_FLOOR_WM2", "EstimationFailureError",
    "EstimationReport", "GpKernelParams", "InvalidArgumentError",
    "JumpRecord", "KappaPanel", "KernelFit", "KsResult",
    "NumericFailureError", "OuParams", "PredictionEnvelope", "PvDisaggError",
    "PvSite", "SiteLayout", "StatVector", "TranspositionInputs",
    "UniformSeries", "ac_power", "aggregate_pv", "build_cov", "calibrate",
    "check_aligned", "clear_sky_index", "condition", "coverage", "dc_power",
    "debias", "detect_jumps", "downsample", "empirical_cov",
    "estimate_gamma_rate", "estimate_params", "fit_jump_distribution",
    "fit_kernel", "kernel_eval", "ks_test", "layout_from_latlon",
    "masked_from_net", "objective", "predict_masked", "random_restarts",
    "residual_filter", "sample", "simulate_em", "simulate_exact",
    "simulate_paths", "site_chain", "split_irradiance", "stat_vector",
    "tilted_irradiance",
]
