//! Parameter estimation from a small dataset.
//!
//! Two routes:
//! - [`sweep_estimate`]: for one scalar parameter, fit the post-update error
//!   as a quadratic in the assumed parameter for several `ε` and locate where
//!   the curves cross. At the true parameter the update has (almost) nothing
//!   to correct, so the error there does not depend on `ε`.
//! - [`nm_estimate`]: minimise the one-step error of the prior Koopman matrix
//!   over the parameters with Nelder-Mead, rebuilding the prior per candidate.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::nelder_mead::{nelder_mead, NMOptions, NMResult};
use crate::dictionary::Dictionary;
use crate::dynamics::{generate_snapshots, SnapshotDataset, System, DEFAULT_SUBSTEPS};
use crate::error::{Error, Result};
use crate::koopman::{learn_small_dataset, residual, state_residual, KoopmanMatrix};
use crate::prior::prior_for_params;
use crate::rng::SeededRng;

/// How the discrepancy between a Koopman matrix and observed pairs is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorNorm {
    /// `‖Y − [KΨ(X)]_state‖_F`, the one-step prediction error of the states.
    #[default]
    State,
    /// `‖Ψ(Y) − KΨ(X)‖_F` over every dictionary row.
    Lifted,
}

impl ErrorNorm {
    pub fn eval(self, k: &KoopmanMatrix, dataset: &SnapshotDataset) -> Result<f64> {
        match self {
            ErrorNorm::State => state_residual(k, dataset),
            ErrorNorm::Lifted => residual(k, dataset),
        }
    }
}

/// `a x² + b x + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}

/// Least-squares quadratic through `(xs, ys)`; interpolates when there are three points.
pub fn fit_quadratic(xs: &[f64], ys: &[f64]) -> Result<Quadratic> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            context: "quadratic fit abscissae vs ordinates",
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "quadratic fit needs at least 3 points, got {}",
            xs.len()
        )));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(
            "quadratic fit abscissae must be distinct".into(),
        ));
    }
    let vander = DMatrix::from_fn(xs.len(), 3, |i, j| xs[i].powi(2 - j as i32));
    let rhs = DVector::from_column_slice(ys);
    let coef = vander
        .svd(true, true)
        .solve(&rhs, 0.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(Quadratic {
        a: coef[0],
        b: coef[1],
        c: coef[2],
    })
}

/// Below this magnitude a coefficient of `q1 − q2` counts as zero.
const COEFF_EPS: f64 = 1e-12;

/// Real solutions of `q1(x) = q2(x)` inside `interval` widened by half its
/// width on both sides, ascending.
pub fn intersect_quadratics(
    q1: &Quadratic,
    q2: &Quadratic,
    interval: (f64, f64),
) -> Result<Vec<f64>> {
    let (lo, hi) = interval;
    if !(lo <= hi) {
        return Err(Error::InvalidArgument(format!(
            "invalid interval [{lo}, {hi}]"
        )));
    }
    let margin = 0.5 * (hi - lo);
    roots_in_window(q1, q2, lo - margin, hi + margin)
}

fn roots_in_window(q1: &Quadratic, q2: &Quadratic, wlo: f64, whi: f64) -> Result<Vec<f64>> {
    let (a, b, c) = (q1.a - q2.a, q1.b - q2.b, q1.c - q2.c);

    let mut roots = Vec::new();
    if a.abs() < COEFF_EPS {
        if b.abs() < COEFF_EPS {
            if c.abs() < COEFF_EPS {
                return Err(Error::DegenerateIntersection);
            }
        } else {
            roots.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            // cancellation-free form
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            if q != 0.0 {
                roots.push(q / a);
                roots.push(c / q);
            } else {
                roots.push(0.0);
            }
        }
    }
    roots.retain(|r| r.is_finite() && *r >= wlo && *r <= whi);
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    Ok(roots)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSetup {
    pub system: System,
    pub assumed: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub dict: Arc<Dictionary>,
    pub dt: f64,
    pub substeps: usize,
    pub norm: ErrorNorm,
    /// Roots are accepted within the scanned range widened by this fraction
    /// of its width on each side.
    pub search_margin: f64,
}

impl SweepSetup {
    /// Van der Pol sweep over `μ ∈ {1.5, 2.0, 2.5}` and `ε ∈ {0.1, 1, 10}`.
    pub fn vdp_reference() -> Self {
        Self {
            system: System::VanDerPol,
            assumed: vec![1.5, 2.0, 2.5],
            epsilons: vec![0.1, 1.0, 10.0],
            dict: Arc::new(Dictionary::new(2, 5).expect("valid dictionary")),
            dt: 0.1,
            substeps: DEFAULT_SUBSTEPS,
            norm: ErrorNorm::State,
            search_margin: 1.0,
        }
    }
}

/// Result of the intersection sweep. `assumed` and `epsilons` are stored in
/// ascending order and `errors[(j, n)]` follows that order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub assumed: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub errors: DMatrix<f64>,
    pub fits: Vec<Quadratic>,
    pub roots: Vec<f64>,
    pub estimate: f64,
    pub estimate_error_at_intersection: f64,
}

fn sorted_copy(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// J×N error grid: prior at `assumed[j]`, online update with `epsilons[n]`,
/// error of the updated matrix on the same pairs.
pub fn sweep_errors(setup: &SweepSetup, dataset: &SnapshotDataset) -> Result<DMatrix<f64>> {
    let j_count = setup.assumed.len();
    let n_count = setup.epsilons.len();
    let priors: Vec<KoopmanMatrix> = setup
        .assumed
        .par_iter()
        .map(|&theta| {
            prior_for_params(
                &setup.system,
                &[theta],
                setup.dict.clone(),
                setup.dt,
                setup.substeps,
            )
        })
        .collect::<Result<_>>()?;
    let cells: Vec<f64> = (0..j_count * n_count)
        .into_par_iter()
        .map(|cell| {
            let (j, n) = (cell / n_count, cell % n_count);
            let k_hat = learn_small_dataset(&priors[j], dataset, setup.epsilons[n])?;
            setup.norm.eval(&k_hat, dataset)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_row_slice(j_count, n_count, &cells))
}

pub fn sweep_estimate(setup: &SweepSetup, dataset: &SnapshotDataset) -> Result<SweepResult> {
    if setup.system.arity() != 1 {
        return Err(Error::InvalidArgument(format!(
            "the intersection sweep estimates a single parameter; system has {}",
            setup.system.arity()
        )));
    }
    if setup.assumed.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 assumed parameter values for a quadratic fit, got {}",
            setup.assumed.len()
        )));
    }
    if setup.epsilons.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 epsilon values, got {}",
            setup.epsilons.len()
        )));
    }
    if !(setup.search_margin >= 0.0 && setup.search_margin.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "search margin must be finite and non-negative, got {}",
            setup.search_margin
        )));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let canonical = SweepSetup {
        assumed: sorted_copy(&setup.assumed),
        epsilons: sorted_copy(&setup.epsilons),
        ..setup.clone()
    };
    let errors = sweep_errors(&canonical, dataset)?;
    let fits: Vec<Quadratic> = (0..canonical.epsilons.len())
        .map(|n| {
            let ys: Vec<f64> = errors.column(n).iter().copied().collect();
            fit_quadratic(&canonical.assumed, &ys)
        })
        .collect::<Result<_>>()?;

    let lo = canonical.assumed[0];
    let hi = *canonical.assumed.last().expect("non-empty");
    let (wlo, whi) = (
        lo - setup.search_margin * (hi - lo),
        hi + setup.search_margin * (hi - lo),
    );
    let mut roots = Vec::new();
    for i in 0..fits.len() {
        for j in i + 1..fits.len() {
            roots.extend(roots_in_window(&fits[i], &fits[j], wlo, whi)?);
        }
    }
    if roots.is_empty() {
        return Err(Error::NoIntersection { lo: wlo, hi: whi });
    }
    roots.sort_by(f64::total_cmp);

    let tol = 0.05 * (hi - lo);
    let mut clusters: Vec<Vec<f64>> = vec![vec![roots[0]]];
    for &r in &roots[1..] {
        let current = clusters.last_mut().expect("non-empty");
        if r - current.last().expect("non-empty") <= tol {
            current.push(r);
        } else {
            clusters.push(vec![r]);
        }
    }
    let mean_fit = |x: f64| fits.iter().map(|q| q.eval(x)).sum::<f64>() / fits.len() as f64;
    let (estimate, estimate_error) = clusters
        .iter()
        .map(|c| {
            let centre = c.iter().sum::<f64>() / c.len() as f64;
            (c.len(), centre, mean_fit(centre))
        })
        .max_by(|a, b| a.0.cmp(&b.0).then(b.2.total_cmp(&a.2)))
        .map(|(_, centre, err)| (centre, err))
        .expect("at least one cluster");

    Ok(SweepResult {
        assumed: canonical.assumed,
        epsilons: canonical.epsilons,
        errors,
        fits,
        roots,
        estimate,
        estimate_error_at_intersection: estimate_error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmSetup {
    pub system: System,
    pub dict: Arc<Dictionary>,
    pub dt: f64,
    pub substeps: usize,
    /// Per-parameter `(low, high)` box for the random initial guess.
    pub param_box: Vec<(f64, f64)>,
    pub seed: u64,
    pub options: NMOptions,
    pub norm: ErrorNorm,
}

impl NmSetup {
    pub fn new(
        system: System,
        dict: Arc<Dictionary>,
        dt: f64,
        param_box: Vec<(f64, f64)>,
        seed: u64,
    ) -> Self {
        let options = NMOptions::for_dim(system.arity());
        Self {
            system,
            dict,
            dt,
            substeps: DEFAULT_SUBSTEPS,
            param_box,
            seed,
            options,
            norm: ErrorNorm::State,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmEstimate {
    pub theta_hat: Vec<f64>,
    pub objective: f64,
    pub initial_guess: Vec<f64>,
    pub search: NMResult,
    pub seconds: f64,
}

/// Prior-only objective: error of the equation-derived Koopman matrix at `θ`
/// on the observed pairs. Construction failures map to `+∞`.
pub fn prior_objective(setup: &NmSetup, dataset: &SnapshotDataset, theta: &[f64]) -> f64 {
    prior_for_params(
        &setup.system,
        theta,
        setup.dict.clone(),
        setup.dt,
        setup.substeps,
    )
    .and_then(|k| setup.norm.eval(&k, dataset))
    .unwrap_or(f64::INFINITY)
}

pub fn nm_estimate(setup: &NmSetup, dataset: &SnapshotDataset) -> Result<NmEstimate> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if setup.param_box.len() != setup.system.arity() {
        return Err(Error::DimensionMismatch {
            context: "parameter box",
            expected: setup.system.arity(),
            got: setup.param_box.len(),
        });
    }
    let mut rng = SeededRng::new(setup.seed);
    let x0: Vec<f64> = setup
        .param_box
        .iter()
        .map(|&(l, h)| rng.uniform_in(l, h))
        .collect();
    nm_estimate_from(setup, dataset, &x0)
}

/// Nelder-Mead from an explicit starting point.
pub fn nm_estimate_from(
    setup: &NmSetup,
    dataset: &SnapshotDataset,
    x0: &[f64],
) -> Result<NmEstimate> {
    let start = Instant::now();
    let search = nelder_mead(
        |theta| prior_objective(setup, dataset, theta),
        x0,
        &setup.options,
    )?;
    Ok(NmEstimate {
        theta_hat: search.x.clone(),
        objective: search.value,
        initial_guess: x0.to_vec(),
        search,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// One row of a multi-trial estimation table.
#[derive(Debug, Clone, PartialEq)]
pub struct NmTrial {
    pub trial: usize,
    pub theta_true: Vec<f64>,
    pub theta_hat: Vec<f64>,
    /// `‖θ̂ − θ_true‖₂`
    pub error: f64,
    pub seconds: f64,
}

/// Settings for repeated estimation with random true parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NmTrialsSetup {
    pub estimator: NmSetup,
    /// Box the true parameters are drawn from (the initial guess uses `estimator.param_box`).
    pub truth_box: Vec<(f64, f64)>,
    pub m: usize,
    /// Sampling box for the snapshot initial states, applied to every axis.
    pub sample_box: (f64, f64),
    pub trials: usize,
    pub base_seed: u64,
}

/// Trial `i` seeds one generator with `base_seed + i` and draws, in order, the
/// true parameters, the initial guess and the dataset seed.
pub fn nm_trials(setup: &NmTrialsSetup) -> Result<Vec<NmTrial>> {
    let system = &setup.estimator.system;
    if setup.truth_box.len() != system.arity() {
        return Err(Error::DimensionMismatch {
            context: "truth box",
            expected: system.arity(),
            got: setup.truth_box.len(),
        });
    }
    if setup.estimator.param_box.len() != system.arity() {
        return Err(Error::DimensionMismatch {
            context: "parameter box",
            expected: system.arity(),
            got: setup.estimator.param_box.len(),
        });
    }
    let dim = system.dim();
    let low = vec![setup.sample_box.0; dim];
    let high = vec![setup.sample_box.1; dim];
    (0..setup.trials)
        .map(|trial| {
            let mut rng = SeededRng::new(setup.base_seed + trial as u64);
            let theta_true: Vec<f64> = setup
                .truth_box
                .iter()
                .map(|&(l, h)| rng.uniform_in(l, h))
                .collect();
            let x0: Vec<f64> = setup
                .estimator
                .param_box
                .iter()
                .map(|&(l, h)| rng.uniform_in(l, h))
                .collect();
            let data_seed = rng.next_u64();
            let field = system.field(&theta_true)?;
            let ds = generate_snapshots(
                &field,
                setup.m,
                &low,
                &high,
                setup.estimator.dt,
                data_seed,
                setup.estimator.substeps,
            )?;
            let est = nm_estimate_from(&setup.estimator, &ds, &x0)?;
            let error = est
                .theta_hat
                .iter()
                .zip(&theta_true)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            Ok(NmTrial {
                trial,
                theta_true,
                theta_hat: est.theta_hat,
                error,
                seconds: est.seconds,
            })
        })
        .collect()
}
