"""Weak-separability testing for spatially stationary functional fields.

The package tests, from a single non-replicated realization on a regular
lattice, whether a functional field's principal-component score fields
are mutually uncorrelated across components. It also ships a Matern
Gaussian field simulator and a seeded Monte Carlo power-study driver.
"""

from .errors import DomainError, ParseError, WeakSepWarning
from .field import (
    FunctionalField,
    Kernel,
    lag_covariance,
    load_field,
    sample_covariance,
    sample_mean,
    smoothed_lag_covariance,
    write_field,
)
from .grid import PairSet, SpatialGrid, build_regular_grid, distance_multiset, lag_pairs
from .numerics import SeededRng, bessel_k, chi_squared_sf, ln_gamma, regularized_gamma_lower
from .simulate import (
    FieldSampler,
    MaternParams,
    SimulationConfig,
    generate_field,
    matern,
    power_study,
    preset_config,
)
from .spatialcorr import (
    CorrelationModel,
    Correlogram,
    empirical_correlation,
    eval_correlation,
    fit_exponential_wls,
    fit_local_linear,
)
from .spectral import EigenSystem, Matching, eigen_decompose, match_eigenpairs, project_scores, select_truncation
from .wstest import (
    MultiLagReport,
    TestReport,
    multi_lag_test,
    naive_statistic,
    pair_statistic,
    rho_hat,
    run_test,
    sigma_squared,
    test_statistic,
    trace_products,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "ParseError",
    "WeakSepWarning",
    "FunctionalField",
    "Kernel",
    "SpatialGrid",
    "PairSet",
    "SeededRng",
    "EigenSystem",
    "Matching",
    "Correlogram",
    "CorrelationModel",
    "MaternParams",
    "SimulationConfig",
    "FieldSampler",
    "TestReport",
    "MultiLagReport",
    "build_regular_grid",
    "lag_pairs",
    "distance_multiset",
    "load_field",
    "write_field",
    "sample_mean",
    "sample_covariance",
    "lag_covariance",
    "smoothed_lag_covariance",
    "ln_gamma",
    "regularized_gamma_lower",
    "chi_squared_sf",
    "bessel_k",
    "eigen_decompose",
    "select_truncation",
    "match_eigenpairs",
    "project_scores",
    "empirical_correlation",
    "fit_exponential_wls",
    "fit_local_linear",
    "eval_correlation",
    "matern",
    "generate_field",
    "power_study",
    "preset_config",
    "naive_statistic",
    "pair_statistic",
    "rho_hat",
    "trace_products",
    "sigma_squared",
    "test_statistic",
    "run_test",
    "multi_lag_test",
    "__version__",
]
