"""Randomization-only prediction intervals for attributable effects under interference."""

from .data import AggregateTable, DataError, ExperimentData, Network, expand_aggregate, load_experiment, write_experiment
from .design import DesignDescriptor
from .estimands import EstimandError, RegressorSpec, build_scheme, contrasts_from_config
from .exposure import PropensityClasses, build_propensity_classes, compute_exposure
from .intervals import (
    BetaAdjProcedure,
    FixedMomentsProcedure,
    IntervalResult,
    beta_adj_interval,
    general_interval,
    tau1_interval,
)
from .kernels import IMPLEMENTATION as KERNEL_IMPLEMENTATION
from .moments import BlockMoments, WeightMoments, analytic_tau1_moments, bias_bound, mc_weight_moments
from .solver import BoundProblem, SolveResult, brute_force, solve_bnb, solve_relaxed
from .split import SplitCertificate, compute_split

__version__ = "0.1.0"

__all__ = [
    "AggregateTable", "DataError", "ExperimentData", "Network", "expand_aggregate", "load_experiment",
    "write_experiment", "DesignDescriptor", "EstimandError", "RegressorSpec", "build_scheme",
    "contrasts_from_config", "PropensityClasses", "build_propensity_classes", "compute_exposure",
    "BetaAdjProcedure", "FixedMomentsProcedure", "IntervalResult", "beta_adj_interval",
    "general_interval", "tau1_interval", "KERNEL_IMPLEMENTATION", "BlockMoments", "WeightMoments",
    "analytic_tau1_moments", "bias_bound", "mc_weight_moments", "BoundProblem", "SolveResult",
    "brute_force", "solve_bnb", "solve_relaxed", "SplitCertificate", "compute_split",
]
