"""Characteristic-function test for complete spatial randomness on ``[0, 1]^D``."""

from .competing import BaselineResult, clark_evans, l_test, ripley_khat
from .high_rho import CumulantModel, cumulant, cumulant_model, high_rho_cdf, high_rho_quantile
from .imhof import ImhofEvaluator, imhof_cdf, imhof_quantile
from .inference import EnvelopeCurve, TestReport, cf_test, envelope, null_distribution, omnibus_test
from .null_moments import limiting_variance, null_mean, null_moments, null_variance
from .patterns import PointPattern, Window, load_pattern, read_pattern, rescale_to_unit
from .simulate import SimSpec, sim_csr, sim_inhom, sim_matern, sim_ssi, simulate
from .spectrum import NullSpectrum, build_spectrum
from .statistic import CfEvaluator, cf_statistic, cf_statistic_oracle, omega_bar_squared

__version__ = "0.1.0"

__all__ = [
    "BaselineResult",
    "CfEvaluator",
    "CumulantModel",
    "EnvelopeCurve",
    "ImhofEvaluator",
    "NullSpectrum",
    "PointPattern",
    "SimSpec",
    "TestReport",
    "Window",
    "build_spectrum",
    "cf_statistic",
    "cf_statistic_oracle",
    "cf_test",
    "clark_evans",
    "cumulant",
    "cumulant_model",
    "envelope",
    "high_rho_cdf",
    "high_rho_quantile",
    "imhof_cdf",
    "imhof_quantile",
    "l_test",
    "limiting_variance",
    "load_pattern",
    "null_distribution",
    "null_mean",
    "null_moments",
    "null_variance",
    "omega_bar_squared",
    "omnibus_test",
    "read_pattern",
    "rescale_to_unit",
    "ripley_khat",
    "sim_csr",
    "sim_inhom",
    "sim_matern",
    "sim_ssi",
    "simulate",
]
