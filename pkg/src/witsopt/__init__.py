"""
witsopt

Numerical toolkit for the Witsenhausen counterexample with a causal encoder
and a non-causal decoder: closed-form cost curves, Gaussian information
measures, an analytic optimizer with an independent brute-force oracle, and
a seeded Monte Carlo simulator of the achieving strategies.

Basic Usage:
    >>> from witsopt import ModelParams, analytic_optimum, optimal_gaussian_cost
    >>>
    >>> params = ModelParams(Q=0.8, N=0.1)
    >>> optimal_gaussian_cost(0.3, params)
    0.05
    >>>
    >>> # The optimizer recovers the same cost with a binding constraint
    >>> optimum = analytic_optimum(0.3, params)
    >>> optimum.S, optimum.constraint_value
    >>>
    >>> # Monte Carlo confirmation of the time-sharing strategy
    >>> from witsopt import SimConfig, TimeShare, simulate
    >>> result = simulate(TimeShare(P=0.3), params, SimConfig(n=1_000_000, seed=7))

Command line:
    witsopt curves --Q 0.8 --N 0.1 --grid 0:0.8:0.05
    witsopt verify --grid 0.1,0.3,0.5
"""

from witsopt.__version__ import __version__, __version_info__

# Import cost curves
from witsopt.costs import (
    CostPoint,
    OutOfWindow,
    QuadratureNotConverged,
    Thresholds,
    TwoPointSample,
    best_linear_cost,
    figure_anchors,
    gaussian_thresholds,
    lower_convex_envelope,
    optimal_gaussian_cost,
    sweep_two_point,
    time_share_weight,
    two_point_costs,
    two_point_costs_oracle,
)

# Import Gaussian core
from witsopt.gausscore import (
    CorrelationPoint,
    CovMatrix,
    InvalidPoint,
    ModelParams,
    NotPSD,
    SingularCovariance,
    WitsenhausenError,
    build_joint_covariance,
    conditional_mi,
    gaussian_mi,
    markov_chain_residuals,
    markov_triple_covariance,
    nats_to_bits,
    schur_mmse,
)

# Import optimizer
from witsopt.optimizer import (
    Branch,
    CaseTag,
    DegenerateDenominator,
    EmptyFeasibleSet,
    FeasibilityCase,
    ObjectiveTerms,
    Optimum,
    OracleResult,
    UndefinedLogArgument,
    analytic_optimum,
    brute_force_min,
    case1_optimal_rho5_squared,
    classify,
    estimation_cost,
    feedback_constraint_value,
    info_constraint_value,
    mmse_coefficients,
    objective_terms,
    repair_to_case2,
)

# Import simulator
from witsopt.simulator import (
    Affine,
    InvalidStrategy,
    SimConfig,
    SimResult,
    Strategy,
    TimeShare,
    TwoPoint,
    affine_receiver_coefficients,
    simulate,
    theory_for,
)

# Define public API
__all__ = [
    # Version info
    "__version__",
    "__version_info__",
    # Gaussian core
    "ModelParams",
    "CorrelationPoint",
    "CovMatrix",
    "build_joint_covariance",
    "gaussian_mi",
    "conditional_mi",
    "schur_mmse",
    "markov_triple_covariance",
    "markov_chain_residuals",
    "nats_to_bits",
    # Cost curves
    "CostPoint",
    "Thresholds",
    "TwoPointSample",
    "best_linear_cost",
    "gaussian_thresholds",
    "optimal_gaussian_cost",
    "time_share_weight",
    "two_point_costs",
    "two_point_costs_oracle",
    "sweep_two_point",
    "lower_convex_envelope",
    "figure_anchors",
    # Optimizer
    "ObjectiveTerms",
    "FeasibilityCase",
    "CaseTag",
    "Optimum",
    "Branch",
    "OracleResult",
    "objective_terms",
    "info_constraint_value",
    "estimation_cost",
    "classify",
    "analytic_optimum",
    "brute_force_min",
    "repair_to_case2",
    "case1_optimal_rho5_squared",
    "mmse_coefficients",
    "feedback_constraint_value",
    # Simulator
    "Strategy",
    "Affine",
    "TimeShare",
    "TwoPoint",
    "SimConfig",
    "SimResult",
    "simulate",
    "affine_receiver_coefficients",
    "theory_for",
    # Exceptions
    "WitsenhausenError",
    "InvalidPoint",
    "NotPSD",
    "SingularCovariance",
    "OutOfWindow",
    "QuadratureNotConverged",
    "UndefinedLogArgument",
    "DegenerateDenominator",
    "EmptyFeasibleSet",
    "InvalidStrategy",
]
