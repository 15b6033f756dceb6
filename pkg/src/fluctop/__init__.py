"""Discovery of discrete dissipative operators from particle fluctuations.

The pipeline: simulate a zero-range lattice gas at frozen density profiles,
read the dissipative operator's column triples out of short-time projection
fluctuations, fit a mass-conserving quadratic surrogate in (density,
gradient), and evolve macroscopic profiles with it against the closed-form
hydrodynamic reference.
"""

__version__ = "0.1.0"

from .basis import BasisSet
from .config import (FitSection, GridSpec, InitialSpec, PRESETS, RunConfig,
                     SolverSection, load_config, preset, save_config)
from .errors import (AbsorbedStateError, ConfigError, DomainError,
                     NonPositiveDensityError, RankDeficientError, SchemaError)
from .estimator import (BiasReport, EstimatorParams, LocalityReport,
                        ProfilePoint, RawOperatorTable, RowEstimate,
                        bias_probe, estimate_row, locality_probe,
                        measure_increments, tabulate)
from .kinetics import (LatticeState, Periodic, RandomStream, RateModel,
                       Reservoir, apply_jump, evolve, sample_initial_state,
                       step, total_rate)
from .opmodel import (QuadraticFit, StencilReport, analytic_fit,
                      design_matrix, fit_from_arrays, fit_table, load_fit,
                      save_fit, stencil_decompose)
from .profiles import DENSITY_FLOOR, AffineProfile
from .solver import (DirichletBC, EvolutionResult, NodalField, PeriodicBC,
                     TridiagonalSystem, evolve_and_compare, evolve_field,
                     rhs_fitted, rhs_reference, stable_dt)
from .thermo import (ThermoModel, analytic_operator_entry,
                     analytic_operator_triple, diffusivity,
                     fugacity_from_density, m_from_density,
                     thermodynamic_force)

__all__ = [
    "AbsorbedStateError", "AffineProfile", "BasisSet", "BiasReport",
    "ConfigError", "DENSITY_FLOOR", "DirichletBC", "DomainError",
    "EstimatorParams", "EvolutionResult", "FitSection", "GridSpec",
    "InitialSpec", "LatticeState", "LocalityReport", "NodalField",
    "NonPositiveDensityError", "PRESETS", "Periodic", "PeriodicBC",
    "ProfilePoint", "QuadraticFit", "RandomStream", "RankDeficientError",
    "RateModel", "RawOperatorTable", "Reservoir", "RowEstimate", "RunConfig",
    "SchemaError", "SolverSection", "StencilReport", "ThermoModel",
    "TridiagonalSystem", "analytic_fit", "analytic_operator_entry",
    "analytic_operator_triple", "apply_jump", "bias_probe", "design_matrix",
    "diffusivity", "estimate_row", "evolve", "evolve_and_compare",
    "evolve_field", "fit_from_arrays", "fit_table", "fugacity_from_density",
    "load_config", "load_fit", "locality_probe", "m_from_density",
    "measure_increments", "preset", "rhs_fitted", "rhs_reference",
    "sample_initial_state", "save_config", "save_fit", "stable_dt",
    "stencil_decompose", "step", "tabulate", "thermodynamic_force",
    "total_rate", "__version__",
]
