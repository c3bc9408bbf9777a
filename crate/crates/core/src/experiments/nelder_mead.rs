//! Derivative-free downhill simplex minimisation.

use crate::error::{Error, Result};

/// Objective value assigned to vertices where the objective is not finite.
pub const PENALTY: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct NMOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Offset of the initial simplex vertices from `x0`, per dimension.
    pub initial_step: Vec<f64>,
    pub max_iterations: usize,
    pub f_tol: f64,
    pub x_tol: f64,
}

impl NMOptions {
    pub fn for_dim(dim: usize) -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_step: vec![0.5; dim],
            max_iterations: 200 * dim,
            f_tol: 1e-8,
            x_tol: 1e-6,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let positive = [
            self.reflection,
            self.expansion,
            self.contraction,
            self.shrink,
        ]
        .iter()
        .all(|&c| c > 0.0);
        if !positive || !(self.expansion > 1.0 && self.contraction < 1.0 && self.shrink < 1.0) {
            return Err(Error::InvalidArgument(
                "simplex coefficients must be positive with expansion > 1 > contraction, shrink"
                    .into(),
            ));
        }
        if self.initial_step.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "Nelder-Mead initial_step",
                expected: dim,
                got: self.initial_step.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NMResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value at the start of every iteration.
    pub best_history: Vec<f64>,
}

pub fn nelder_mead<F>(mut objective: F, x0: &[f64], opts: &NMOptions) -> Result<NMResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "Nelder-Mead needs at least one parameter".into(),
        ));
    }
    opts.validate(n)?;
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = objective(x);
        if v.is_finite() {
            v
        } else {
            PENALTY
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0);
    simplex.push((x0.to_vec(), f0));
    for d in 0..n {
        let mut v = x0.to_vec();
        v[d] += opts.initial_step[d];
        let fv = eval(&v);
        simplex.push((v, fv));
    }

    let mut best_history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        // stable: ties keep their previous order, so the incumbent stays first
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        best_history.push(simplex[0].1);

        let spread = simplex[n].1 - simplex[0].1;
        if spread < opts.f_tol && diameter(&simplex) < opts.x_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|(v, _)| v[d]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            // centroid + t (centroid − worst)
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(opts.reflection);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(opts.reflection * opts.expansion);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let accepted = if fr < worst.1 {
            let xc = along(opts.reflection * opts.contraction);
            let fc = eval(&xc);
            (fc <= fr).then_some((xc, fc))
        } else {
            let xc = along(-opts.contraction);
            let fc = eval(&xc);
            (fc < worst.1).then_some((xc, fc))
        };
        match accepted {
            Some(v) => simplex[n] = v,
            None => {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best
                        .iter()
                        .zip(&vertex.0)
                        .map(|(b, v)| b + opts.shrink * (v - b))
                        .collect();
                    let fx = eval(&x);
                    *vertex = (x, fx);
                }
            }
        }
    }

    let (x, value) = simplex.swap_remove(0);
    Ok(NMResult {
        x,
        value,
        iterations,
        evaluations,
        converged,
        best_history,
    })
}

/// Largest pairwise Euclidean distance between vertices.
fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let mut d = 0.0f64;
    for (i, (a, _)) in simplex.iter().enumerate() {
        for (b, _) in &simplex[i + 1..] {
            let dist = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            d = d.max(dist);
        }
    }
    d
}
