//! Koopman matrices for polynomial dynamical systems learned from very small
//! datasets.
//!
//! A prior Koopman matrix is computed from the governing equations at assumed
//! parameter values ([`prior`]), then corrected with a handful of snapshot
//! pairs by the online EDMD update ([`koopman::OnlineState`]) initialised with
//! `P = εI`. The same machinery inverts to parameter estimation
//! ([`experiments::sweep_estimate`], [`experiments::nm_estimate`]).

// `!(a < b)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dictionary;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod koopman;
pub mod prior;
pub mod rng;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use dictionary::{Dictionary, MultiIndex};
pub use dynamics::{
    duffing_field, generate_snapshots, grid_initial_states, vdp_field, PolynomialTemplate,
    PolynomialVectorField, SnapshotDataset, System, TemplateTerm, Term, DEFAULT_SUBSTEPS,
};
pub use error::{Error, Result};
pub use koopman::{
    edmd_fit, learn_small_dataset, residual, rollout, state_residual, KoopmanMatrix, OnlineState,
    RolloutMode, Trajectory,
};
pub use prior::{build_generator, prior_for_params, prior_koopman, GeneratorMatrix};
