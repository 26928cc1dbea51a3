"""Numerical smoothing for low-regularity expectations of discretized SDEs.

A non-smooth payoff is integrated exactly along one Gaussian direction after
locating its kink or jump by root finding.  The smoothed integrand is then
handed to adaptive sparse-grid quadrature (:mod:`numsmooth.asgq`) or to
multilevel Monte Carlo (:mod:`numsmooth.mlmc`).
"""
from .advisor import RegularityProfile, advise_asgq, lagrange_exponents
from .asgq import ASGQConfig, ASGQResult, adapt, delta_quadrature
from .density import DensityTarget, density_mlmc, density_sample
from .kernels import BACKEND
from .mlmc import LevelStats, MLMCConfig, MLMCResult, RawPayoff, Schedule, SmoothedPayoff, run, screen
from .models import SET1, GBMModel, GBMParams, HestonModel, HestonParams
from .paths import CorrelationStructure, TimeGrid
from .payoffs import Payoff
from .quadrules import gauss_hermite, gauss_laguerre
from .smoothing import SmoothingPlan, build_rotation, find_root, preintegrate, smoothed_integrand

__all__ = [
    "ASGQConfig", "ASGQResult", "BACKEND", "CorrelationStructure", "DensityTarget", "GBMModel", "GBMParams",
    "HestonModel", "HestonParams", "LevelStats", "MLMCConfig", "MLMCResult", "Payoff", "RawPayoff",
    "RegularityProfile", "SET1", "Schedule", "SmoothedPayoff", "SmoothingPlan", "TimeGrid", "adapt",
    "advise_asgq", "build_rotation", "delta_quadrature", "density_mlmc", "density_sample", "find_root",
    "gauss_hermite", "gauss_laguerre", "lagrange_exponents", "preintegrate", "run", "screen",
    "smoothed_integrand",
]
__version__ = "0.1.0"
