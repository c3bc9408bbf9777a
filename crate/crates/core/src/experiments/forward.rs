//! Prediction-error curves and multi-trial statistics for the forward problem.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dictionary::Dictionary;
use crate::dynamics::{generate_snapshots, grid_initial_states, PolynomialVectorField, System};
use crate::error::{Error, Result};
use crate::koopman::{edmd_fit, learn_small_dataset, rollout, KoopmanMatrix, RolloutMode};
use crate::prior::prior_for_params;

/// Frobenius prediction error per step over a set of initial states.
///
/// `per_step_error` has `steps + 1` entries unless some trajectory diverged,
/// in which case it stops just before `diverged_at`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub steps: usize,
    pub per_step_error: Vec<f64>,
    pub diverged_at: Option<usize>,
}

impl ErrorCurve {
    /// Error at step `t`, if the curve reached it.
    pub fn at(&self, t: usize) -> Option<f64> {
        self.per_step_error.get(t).copied()
    }
}

/// Rolls every column of `inits` forward with `k` and compares against RK4
/// ground truth at each multiple of `dt`.
pub fn prediction_error_curve(
    k: &KoopmanMatrix,
    field: &PolynomialVectorField,
    inits: &DMatrix<f64>,
    steps: usize,
    dt: f64,
    substeps: usize,
    mode: RolloutMode,
) -> Result<ErrorCurve> {
    if steps == 0 {
        return Err(Error::InvalidArgument(
            "prediction horizon must be >= 1".into(),
        ));
    }
    let mut sq = vec![0.0; steps + 1];
    let mut reached = steps + 1;
    let mut diverged_at = None;
    for col in inits.column_iter() {
        let x0: Vec<f64> = col.iter().copied().collect();
        let traj = rollout(k, &x0, steps, mode)?;
        if let Some(t) = traj.diverged_at {
            if t < reached {
                reached = t;
                diverged_at = Some(t);
            }
        }
        let mut truth = x0.clone();
        for (t, acc) in sq.iter_mut().enumerate().take(traj.len()).skip(1) {
            truth = field.integrate(&truth, dt, substeps)?;
            for (d, xt) in truth.iter().enumerate() {
                let e = traj.states[(d, t)] - xt;
                *acc += e * e;
            }
        }
    }
    Ok(ErrorCurve {
        steps,
        per_step_error: sq[..reached].iter().map(|v| v.sqrt()).collect(),
        diverged_at,
    })
}

/// One-step predictions from each grid point: columns of every matrix are
/// aligned with the columns of `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepTable {
    pub x0: DMatrix<f64>,
    pub truth: DMatrix<f64>,
    pub proposed: DMatrix<f64>,
    pub conventional: DMatrix<f64>,
}

pub fn one_step_table(
    proposed: &KoopmanMatrix,
    conventional: &KoopmanMatrix,
    field: &PolynomialVectorField,
    inits: &DMatrix<f64>,
    dt: f64,
    substeps: usize,
) -> Result<OneStepTable> {
    let dict = proposed.dictionary();
    let rows = dict.state_rows()?;
    let predict = |k: &KoopmanMatrix| -> Result<DMatrix<f64>> {
        let lifted = k.entries() * dict.lift_batch(inits)?;
        Ok(lifted.select_rows(&rows))
    };
    let mut truth = DMatrix::zeros(inits.nrows(), inits.ncols());
    for (j, col) in inits.column_iter().enumerate() {
        let x0: Vec<f64> = col.iter().copied().collect();
        truth.set_column(
            j,
            &nalgebra::DVector::from_vec(field.integrate(&x0, dt, substeps)?),
        );
    }
    Ok(OneStepTable {
        x0: inits.clone(),
        truth,
        proposed: predict(proposed)?,
        conventional: predict(conventional)?,
    })
}

/// Per-step summary over trials. Statistics at step `t` use only the trials
/// whose curve reached `t`; `survivors[t]` says how many that was.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialStatistics {
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
    pub survivors: Vec<usize>,
    pub trials: usize,
    pub diverged_count: usize,
}

impl TrialStatistics {
    pub fn from_curves(curves: &[ErrorCurve], steps: usize) -> Self {
        let mut stats = TrialStatistics {
            mean: Vec::with_capacity(steps + 1),
            median: Vec::with_capacity(steps + 1),
            q25: Vec::with_capacity(steps + 1),
            q75: Vec::with_capacity(steps + 1),
            survivors: Vec::with_capacity(steps + 1),
            trials: curves.len(),
            diverged_count: curves.iter().filter(|c| c.diverged_at.is_some()).count(),
        };
        for t in 0..=steps {
            let mut values: Vec<f64> = curves.iter().filter_map(|c| c.at(t)).collect();
            values.sort_by(f64::total_cmp);
            stats.survivors.push(values.len());
            if values.is_empty() {
                for v in [
                    &mut stats.mean,
                    &mut stats.median,
                    &mut stats.q25,
                    &mut stats.q75,
                ] {
                    v.push(f64::NAN);
                }
                continue;
            }
            stats
                .mean
                .push(values.iter().sum::<f64>() / values.len() as f64);
            stats.median.push(quantile_sorted(&values, 0.5));
            stats.q25.push(quantile_sorted(&values, 0.25));
            stats.q75.push(quantile_sorted(&values, 0.75));
        }
        stats
    }

    /// Trials that had diverged at or before step `t`.
    pub fn diverged_by(&self, t: usize) -> usize {
        self.trials - self.survivors[t]
    }
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Settings of one forward experiment (prior + small-data update vs. plain EDMD).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSetup {
    pub system: System,
    pub theta_true: Vec<f64>,
    pub theta_assumed: Vec<f64>,
    pub dict_degree: u32,
    pub m: usize,
    pub epsilon: f64,
    pub trials: usize,
    /// Sampling box for training initial states, applied to every axis.
    pub sample_box: (f64, f64),
    /// `(low, high, points per axis)` of the evaluation grid.
    pub grid: (f64, f64, usize),
    pub steps: usize,
    pub dt: f64,
    pub substeps: usize,
    pub base_seed: u64,
    /// How multi-step predictions are produced. Re-lifting after every step
    /// is what exposes the instability of a poorly conditioned EDMD fit.
    pub mode: RolloutMode,
}

impl ForwardSetup {
    /// Duffing forward experiment with the reference settings.
    pub fn duffing_reference() -> Self {
        Self {
            system: System::Duffing,
            theta_true: vec![1.9, -1.9, 1.4],
            theta_assumed: vec![1.0, -1.0, 0.5],
            dict_degree: 5,
            m: 10,
            epsilon: 1e10,
            trials: 100,
            sample_box: (-1.0, 1.0),
            grid: (-1.0, 1.0, 5),
            steps: 10,
            dt: 0.1,
            substeps: 100,
            base_seed: 0,
            mode: RolloutMode::Relift,
        }
    }

    /// Van der Pol forward experiment (`μ_true = 1.9`, `μ_assumed = 1.0`).
    pub fn vdp_reference() -> Self {
        Self {
            system: System::VanDerPol,
            theta_true: vec![1.9],
            theta_assumed: vec![1.0],
            ..Self::duffing_reference()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    pub proposed: TrialStatistics,
    pub conventional: TrialStatistics,
    pub proposed_curves: Vec<ErrorCurve>,
    pub conventional_curves: Vec<ErrorCurve>,
}

/// Runs `trials` independent trials (seed `base_seed + trial`), each comparing
/// the prior-initialised online update against batch EDMD on the same data.
pub fn forward_experiment(setup: &ForwardSetup) -> Result<ForwardResult> {
    if setup.trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let dim = setup.system.dim();
    let dict = Arc::new(Dictionary::new(dim, setup.dict_degree)?);
    let field = setup.system.field(&setup.theta_true)?;
    let prior = prior_for_params(
        &setup.system,
        &setup.theta_assumed,
        dict.clone(),
        setup.dt,
        setup.substeps,
    )?;
    let (g_lo, g_hi, g_n) = setup.grid;
    let grid = grid_initial_states(g_lo, g_hi, g_n, dim)?;
    let low = vec![setup.sample_box.0; dim];
    let high = vec![setup.sample_box.1; dim];

    let per_trial: Vec<(ErrorCurve, ErrorCurve)> = (0..setup.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = setup.base_seed + trial as u64;
            let ds =
                generate_snapshots(&field, setup.m, &low, &high, setup.dt, seed, setup.substeps)?;
            let proposed = learn_small_dataset(&prior, &ds, setup.epsilon)?;
            let conventional = edmd_fit(&ds, dict.clone())?;
            Ok((
                prediction_error_curve(
                    &proposed,
                    &field,
                    &grid,
                    setup.steps,
                    setup.dt,
                    setup.substeps,
                    setup.mode,
                )?,
                prediction_error_curve(
                    &conventional,
                    &field,
                    &grid,
                    setup.steps,
                    setup.dt,
                    setup.substeps,
                    setup.mode,
                )?,
            ))
        })
        .collect::<Result<_>>()?;
    let (proposed_curves, conventional_curves): (Vec<_>, Vec<_>) = per_trial.into_iter().unzip();
    Ok(ForwardResult {
        proposed: TrialStatistics::from_curves(&proposed_curves, setup.steps),
        conventional: TrialStatistics::from_curves(&conventional_curves, setup.steps),
        proposed_curves,
        conventional_curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::duffing_field;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.25), 2.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.25), 1.25);
        assert_eq!(quantile_sorted(&[7.0], 0.75), 7.0);
    }

    #[test]
    fn statistics_skip_divergent_steps() {
        let curves = vec![
            ErrorCurve {
                steps: 2,
                per_step_error: vec![0.0, 1.0, 2.0],
                diverged_at: None,
            },
            ErrorCurve {
                steps: 2,
                per_step_error: vec![0.0, 3.0],
                diverged_at: Some(2),
            },
        ];
        let s = TrialStatistics::from_curves(&curves, 2);
        assert_eq!(s.survivors, vec![2, 2, 1]);
        assert_eq!(s.mean[1], 2.0);
        assert_eq!(s.mean[2], 2.0);
        assert_eq!(s.diverged_count, 1);
        assert_eq!(s.diverged_by(1), 0);
        assert_eq!(s.diverged_by(2), 1);
        assert!(s.q25.iter().zip(&s.q75).all(|(a, b)| a <= b));
    }

    #[test]
    fn truth_prior_one_step_error_small() {
        let dict = Arc::new(Dictionary::new(2, 5).unwrap());
        let k = prior_for_params(&System::Duffing, &[1.9, -1.9, 1.4], dict, 0.1, 100).unwrap();
        let grid = grid_initial_states(-1.0, 1.0, 5, 2).unwrap();
        let c = prediction_error_curve(
            &k,
            &duffing_field(1.9, -1.9, 1.4),
            &grid,
            1,
            0.1,
            100,
            RolloutMode::LiftOnce,
        )
        .unwrap();
        assert_eq!(c.per_step_error[0], 0.0);
        assert!(c.per_step_error[1] <= 1e-2, "{}", c.per_step_error[1]);
        assert!(c.diverged_at.is_none());
    }

    #[test]
    fn zero_horizon_rejected() {
        let dict = Arc::new(Dictionary::new(2, 1).unwrap());
        let k = KoopmanMatrix::identity(dict, 0.1);
        let grid = grid_initial_states(-1.0, 1.0, 2, 2).unwrap();
        assert!(prediction_error_curve(
            &k,
            &duffing_field(1.0, 1.0, 1.0),
            &grid,
            0,
            0.1,
            10,
            RolloutMode::LiftOnce
        )
        .is_err());
    }

    #[test]
    fn single_trial_collapses_quartiles() {
        let setup = ForwardSetup {
            trials: 1,
            steps: 3,
            ..ForwardSetup::duffing_reference()
        };
        let r = forward_experiment(&setup).unwrap();
        for t in 0..=3 {
            assert_eq!(r.proposed.mean[t], r.proposed.q25[t]);
            assert_eq!(r.proposed.mean[t], r.proposed.q75[t]);
        }
    }
}
