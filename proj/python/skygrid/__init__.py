"""Skygrid inference of effective population size trajectories with covariates."""

from ._core import (
    GridSpec,
    Genealogy,
    compute_sufficient_statistics,
    event_timeline,
    full_conditional_component,
    gmrf_log_prior,
    log_likelihood,
    log_likelihood_derivatives,
    missing_conditional,
    newton_raphson_mode,
    parse_genealogy,
    run_chain,
    simulate_genealogy,
    simulate_trajectory_and_covariates,
    tau_scale_cdf,
)

__all__ = [
    "GridSpec",
    "Genealogy",
    "compute_sufficient_statistics",
    "event_timeline",
    "full_conditional_component",
    "gmrf_log_prior",
    "log_likelihood",
    "log_likelihood_derivatives",
    "missing_conditional",
    "newton_raphson_mode",
    "parse_genealogy",
    "run_chain",
    "simulate_genealogy",
    "simulate_trajectory_and_covariates",
    "tau_scale_cdf",
]
