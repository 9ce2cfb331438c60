"""Mean-field particle systems with density-implicit volatility.

Drivers and their inversion, mollified densities, a conservative solver for
the nonlinear Fokker-Planck equation, an Euler-Maruyama particle system,
energy diagnostics and the convergence studies built on them.
"""
from .diagnostics import (EnergyBudget, energy_budget, estimate_aronson, gronwall_fit,
                          smoothing_threshold)
from .driver import (DriverBounds, DriverSpec, ProbeGrid, StabilityReport, check_stability,
                     extract_bounds, invert_driver)
from .errors import (BlowUp, BracketFailure, CflViolation, DegenerateDriver, EmptyInput,
                     MfChaosError, NonConvergence, NonPositiveEnergy, ParseError,
                     StabilityWarning, UnderResolvedKernel, ValidationError, WindowEmpty)
from .estimators import FokkerPlanckTransformer, MollifiedDensityEstimator, ParticleSimulator
from .experiments import (ExperimentReport, Verdict, converge_eps, converge_n, smoothing_study,
                          stability_sweep, uniqueness_study)
from .fp_solver import FpConfig, FpTrajectory, solve, step
from .grid import DensityField, Grid1D, excess_mass, norms, wasserstein2
from .mollifier import MollifierKernel, convolve_density, convolve_empirical
from .particles import (FromDensityField, Gaussian, GridInterpolated, ParticleEnsemble,
                        ScaledBump, SdeConfig, em_step, init_ensemble, simulate)

__version__ = "0.1.0"

__all__ = [
    "BlowUp", "BracketFailure", "CflViolation", "DegenerateDriver", "DensityField",
    "DriverBounds", "DriverSpec", "EmptyInput", "EnergyBudget", "ExperimentReport",
    "FokkerPlanckTransformer", "FpConfig", "FpTrajectory", "FromDensityField", "Gaussian",
    "Grid1D", "GridInterpolated", "MfChaosError", "MollifiedDensityEstimator", "MollifierKernel",
    "NonConvergence", "NonPositiveEnergy", "ParseError", "ParticleEnsemble", "ParticleSimulator",
    "ProbeGrid", "ScaledBump", "SdeConfig", "StabilityReport", "StabilityWarning",
    "UnderResolvedKernel", "ValidationError", "Verdict", "WindowEmpty", "check_stability",
    "converge_eps", "converge_n", "convolve_density", "convolve_empirical", "em_step",
    "energy_budget", "estimate_aronson", "excess_mass", "extract_bounds", "gronwall_fit",
    "init_ensemble", "invert_driver", "norms", "simulate", "smoothing_study",
    "smoothing_threshold", "solve", "stability_sweep", "step", "uniqueness_study",
    "wasserstein2",
]
