"""Numerical toolkit for min-of-monomials integrals, sum-space decompositions,
Orlicz functions and small operator-space norms."""

import os

# Single-threaded BLAS keeps results bit-identical across worker counts.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

from .measures import (  # noqa: E402
    OH_TO_CP,
    OH_TO_LP,
    OH_TO_LP_RELAXED,
    DomainError,
    MonomialWeight,
    ParameterError,
    Region,
    ScenarioSpec,
    build_scenario,
    custom_scenario,
    derive_regions,
)
from .integrator import (  # noqa: E402
    ScalingFit,
    fit_n_exponent,
    fit_theta_blowup,
    integrate_min,
    integrate_region,
    log_factor_check,
    table2_report,
)
from .oracle import LogBox, OracleEstimate, mc_estimate, quad_box, tail_bound  # noqa: E402
from .sumsolve import SolverConfig, discretize, solve_decomposition  # noqa: E402
from .orlicz import PiecewiseConvexFunction, convexify, orlicz_norm, psi_eval  # noqa: E402
from .matnorm import MatrixTuple, cp_norm, lp_l2_norm, maurey_ratio, oh_norm  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "OH_TO_CP",
    "OH_TO_LP",
    "OH_TO_LP_RELAXED",
    "DomainError",
    "MonomialWeight",
    "ParameterError",
    "Region",
    "ScenarioSpec",
    "build_scenario",
    "custom_scenario",
    "derive_regions",
    "ScalingFit",
    "fit_n_exponent",
    "fit_theta_blowup",
    "integrate_min",
    "integrate_region",
    "log_factor_check",
    "table2_report",
    "LogBox",
    "OracleEstimate",
    "mc_estimate",
    "quad_box",
    "tail_bound",
    "SolverConfig",
    "discretize",
    "solve_decomposition",
    "PiecewiseConvexFunction",
    "convexify",
    "orlicz_norm",
    "psi_eval",
    "MatrixTuple",
    "cp_norm",
    "lp_l2_norm",
    "maurey_ratio",
    "oh_norm",
]
