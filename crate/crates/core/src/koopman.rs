//! Koopman matrices: batch EDMD, the online rank-one update, and rollout.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dictionary::Dictionary;
use crate::dynamics::SnapshotDataset;
use crate::error::{Error, Result};

/// Singular values below `PINV_RCOND · σ_max` are treated as zero in batch EDMD.
pub const PINV_RCOND: f64 = 1e-12;

/// A predicted state component above this magnitude marks a rollout divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// `N_dic × N_dic` matrix advancing lifted states by one interval `dt`:
/// `ψ(x(t + dt)) ≈ K ψ(x(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanMatrix {
    entries: DMatrix<f64>,
    dict: Arc<Dictionary>,
    dt: f64,
}

impl KoopmanMatrix {
    pub fn new(entries: DMatrix<f64>, dict: Arc<Dictionary>, dt: f64) -> Result<Self> {
        let n = dict.size();
        if entries.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "Koopman matrix side",
                expected: n,
                got: if entries.nrows() != n {
                    entries.nrows()
                } else {
                    entries.ncols()
                },
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Koopman matrix entries"));
        }
        Ok(Self { entries, dict, dt })
    }

    pub fn identity(dict: Arc<Dictionary>, dt: f64) -> Self {
        let n = dict.size();
        Self {
            entries: DMatrix::identity(n, n),
            dict,
            dt,
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dictionary(&self) -> &Arc<Dictionary> {
        &self.dict
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    /// One lifted step for a single state: `K ψ(x)`.
    pub fn apply(&self, x: &[f64]) -> Result<DVector<f64>> {
        let psi = DVector::from_vec(self.dict.evaluate(x)?);
        Ok(&self.entries * psi)
    }
}

fn check_dataset(dataset: &SnapshotDataset, dict: &Dictionary) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.dim() != dict.dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset vs dictionary",
            expected: dict.dim(),
            got: dataset.dim(),
        });
    }
    Ok(())
}

/// Minimum-norm least-squares fit of `Ψ(Y) ≈ K Ψ(X)`, i.e. `K = Ψ(Y) Ψ(X)⁺`.
pub fn edmd_fit(dataset: &SnapshotDataset, dict: Arc<Dictionary>) -> Result<KoopmanMatrix> {
    check_dataset(dataset, &dict)?;
    let psi_x = dict.lift_batch(dataset.x())?;
    let psi_y = dict.lift_batch(dataset.y())?;
    let pinv = pseudo_inverse(&psi_x, PINV_RCOND);
    KoopmanMatrix::new(psi_y * pinv, dict, dataset.dt_obs())
}

/// Moore-Penrose inverse with a relative singular-value cutoff.
pub(crate) fn pseudo_inverse(a: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rcond * sigma_max;
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // out += v_k u_kᵀ / s
            out.ger(1.0 / s, &v_t.row(k).transpose(), &u.column(k), 1.0);
        }
    }
    out
}

fn numerical_rank(a: &DMatrix<f64>, rcond: f64) -> usize {
    let sv = a.singular_values();
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    sv.iter()
        .filter(|&&s| s > rcond * sigma_max && s > 0.0)
        .count()
}

/// `‖Ψ(Y) − K Ψ(X)‖_F`.
pub fn residual(k: &KoopmanMatrix, dataset: &SnapshotDataset) -> Result<f64> {
    check_dataset(dataset, k.dictionary())?;
    let psi_x = k.dict.lift_batch(dataset.x())?;
    let psi_y = k.dict.lift_batch(dataset.y())?;
    Ok((psi_y - &k.entries * psi_x).norm())
}

/// `‖Y − [K Ψ(X)]_state‖_F`: the one-step error in state coordinates, read
/// from the degree-one rows of the lifted prediction.
pub fn state_residual(k: &KoopmanMatrix, dataset: &SnapshotDataset) -> Result<f64> {
    check_dataset(dataset, k.dictionary())?;
    let rows = k.dict.state_rows()?;
    let predicted = &k.entries * k.dict.lift_batch(dataset.x())?;
    let mut acc = 0.0;
    for i in 0..dataset.len() {
        for (d, &r) in rows.iter().enumerate() {
            let e = dataset.y()[(d, i)] - predicted[(r, i)];
            acc += e * e;
        }
    }
    Ok(acc.sqrt())
}

/// Online EDMD state `(K_m, P_m)`.
#[derive(Debug, Clone)]
pub struct OnlineState {
    k: KoopmanMatrix,
    p: DMatrix<f64>,
    epsilon: Option<f64>,
    updates_applied: usize,
}

impl OnlineState {
    /// `P = εI`, `K = K0`.
    pub fn from_prior(k0: KoopmanMatrix, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let n = k0.dict.size();
        Ok(Self {
            k: k0,
            p: DMatrix::identity(n, n) * epsilon,
            epsilon: Some(epsilon),
            updates_applied: 0,
        })
    }

    /// Conventional initialisation: `P = (Ψ(X)Ψ(X)ᵀ)⁻¹` and `K` from batch EDMD.
    pub fn from_data(dataset: &SnapshotDataset, dict: Arc<Dictionary>) -> Result<Self> {
        check_dataset(dataset, &dict)?;
        let n = dict.size();
        let psi_x = dict.lift_batch(dataset.x())?;
        let rank = numerical_rank(&psi_x, PINV_RCOND);
        if rank < n {
            return Err(Error::RankDeficient { rank, size: n });
        }
        let gram = &psi_x * psi_x.transpose();
        let chol = gram
            .cholesky()
            .ok_or(Error::RankDeficient { rank, size: n })?;
        let p = chol.inverse();
        let p = (&p + p.transpose()) * 0.5;
        let k = edmd_fit(dataset, dict)?;
        Ok(Self {
            k,
            p,
            epsilon: None,
            updates_applied: 0,
        })
    }

    pub fn koopman(&self) -> &KoopmanMatrix {
        &self.k
    }

    pub fn into_koopman(self) -> KoopmanMatrix {
        self.k
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn updates_applied(&self) -> usize {
        self.updates_applied
    }

    /// Absorbs one snapshot pair and returns the gain `γ`.
    ///
    /// `K` is updated with the pre-update `P_m`; `P` is overwritten last.
    pub fn update(&mut self, x_new: &[f64], y_new: &[f64]) -> Result<f64> {
        let dict = self.k.dict.clone();
        let psi_x = DVector::from_vec(dict.evaluate(x_new)?);
        let psi_y = DVector::from_vec(dict.evaluate(y_new)?);
        if psi_x.iter().chain(psi_y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lifted snapshot pair"));
        }
        // P is symmetric, so ψᵀP = (Pψ)ᵀ
        let p_psi = &self.p * &psi_x;
        let gamma = 1.0 / (1.0 + psi_x.dot(&p_psi));
        let innovation = &psi_y - &self.k.entries * &psi_x;
        self.k.entries.ger(gamma, &innovation, &p_psi, 1.0);
        let n = p_psi.len();
        for j in 0..n {
            for i in j..n {
                let v = self.p[(i, j)] - gamma * p_psi[i] * p_psi[j];
                self.p[(i, j)] = v;
                self.p[(j, i)] = v;
            }
        }
        self.updates_applied += 1;
        Ok(gamma)
    }

    pub fn update_all(&mut self, dataset: &SnapshotDataset) -> Result<()> {
        for i in 0..dataset.len() {
            let (x, y) = dataset.pair(i);
            self.update(&x, &y)?;
        }
        Ok(())
    }
}

/// Prior-initialised online EDMD over every pair of a small dataset.
pub fn learn_small_dataset(
    k_prior: &KoopmanMatrix,
    dataset: &SnapshotDataset,
    epsilon: f64,
) -> Result<KoopmanMatrix> {
    if !dataset.is_empty() && dataset.dim() != k_prior.dict.dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset vs dictionary",
            expected: k_prior.dict.dim(),
            got: dataset.dim(),
        });
    }
    let mut state = OnlineState::from_prior(k_prior.clone(), epsilon)?;
    state.update_all(dataset)?;
    Ok(state.into_koopman())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RolloutMode {
    /// Lift `x0` once and iterate `v ← K v`.
    #[default]
    LiftOnce,
    /// Re-evaluate the dictionary on the predicted state every step.
    Relift,
}

/// Predicted trajectory; `states` stops before the first divergent step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: DMatrix<f64>,
    pub diverged_at: Option<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.states.ncols() == 0
    }
}

pub fn rollout(
    k: &KoopmanMatrix,
    x0: &[f64],
    steps: usize,
    mode: RolloutMode,
) -> Result<Trajectory> {
    let dict = &k.dict;
    let rows = dict.state_rows()?;
    let dim = dict.dim();
    let mut v = DVector::from_vec(dict.evaluate(x0)?);
    let mut states = DMatrix::zeros(dim, steps + 1);
    states.column_mut(0).copy_from_slice(x0);
    for t in 1..=steps {
        v = &k.entries * &v;
        let x: Vec<f64> = rows.iter().map(|&r| v[r]).collect();
        let bad = v.iter().any(|c| !c.is_finite()) || x.iter().any(|c| c.abs() > DIVERGENCE_LIMIT);
        if bad {
            return Ok(Trajectory {
                states: states.columns(0, t).into_owned(),
                diverged_at: Some(t),
            });
        }
        states.column_mut(t).copy_from_slice(&x);
        if mode == RolloutMode::Relift {
            v = DVector::from_vec(dict.evaluate(&x)?);
        }
    }
    Ok(Trajectory {
        states,
        diverged_at: None,
    })
}
