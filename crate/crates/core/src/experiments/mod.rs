//! Forward-prediction experiments and inverse parameter estimation.

mod forward;
mod inverse;
mod nelder_mead;

pub use forward::{
    forward_experiment, one_step_table, prediction_error_curve, quantile_sorted, ErrorCurve,
    ForwardResult, ForwardSetup, OneStepTable, TrialStatistics,
};
pub use inverse::{
    fit_quadratic, intersect_quadratics, nm_estimate, nm_estimate_from, nm_trials, prior_objective,
    sweep_errors, sweep_estimate, ErrorNorm, NmEstimate, NmSetup, NmTrial, NmTrialsSetup,
    Quadratic, SweepResult, SweepSetup,
};
pub use nelder_mead::{nelder_mead, NMOptions, NMResult, PENALTY};
