//! Prior Koopman matrices derived from the governing equations.
//!
//! The adjoint generator `L† = Σ_d f_d(x) ∂/∂x_d` maps a monomial to a
//! polynomial. Restricted to the dictionary span (higher-degree terms are
//! dropped and their absolute mass recorded) it becomes a matrix `G` whose
//! column `ζ''` holds the coefficients of `L† x^{ζ''}`. The coefficient
//! vectors of time-evolved monomials then obey `dC/dt = G C` with `C(0) = I`,
//! and column `ζ` of `C(dt)` expands `x^ζ(dt)` over the dictionary. Because
//! `ψ(x(dt)) = C(dt)ᵀ ψ(x(0))`, the Koopman matrix is the transpose of `C(dt)`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::dictionary::Dictionary;
use crate::dynamics::{PolynomialVectorField, System};
use crate::error::{Error, Result};
use crate::koopman::KoopmanMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    entries: DMatrix<f64>,
    dict: Arc<Dictionary>,
    truncated_mass: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn new(
        entries: DMatrix<f64>,
        dict: Arc<Dictionary>,
        truncated_mass: Vec<f64>,
    ) -> Result<Self> {
        let n = dict.size();
        if entries.shape() != (n, n) || truncated_mass.len() != n {
            return Err(Error::DimensionMismatch {
                context: "generator matrix",
                expected: n,
                got: entries.nrows(),
            });
        }
        Ok(Self {
            entries,
            dict,
            truncated_mass,
        })
    }

    /// Entry `(ζ', ζ'')` is the coefficient of `x^{ζ'}` in `L† x^{ζ''}`.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dictionary(&self) -> &Arc<Dictionary> {
        &self.dict
    }

    /// Per column, the summed absolute coefficients dropped by truncation.
    pub fn truncated_mass(&self) -> &[f64] {
        &self.truncated_mass
    }
}

pub fn build_generator(
    field: &PolynomialVectorField,
    dict: Arc<Dictionary>,
) -> Result<GeneratorMatrix> {
    if field.dim() != dict.dim() {
        return Err(Error::DimensionMismatch {
            context: "field vs dictionary",
            expected: dict.dim(),
            got: field.dim(),
        });
    }
    let n = dict.size();
    let mut entries = DMatrix::zeros(n, n);
    let mut truncated_mass = vec![0.0; n];
    for (col, zeta) in dict.indices().iter().enumerate() {
        for (d, terms) in field.components().iter().enumerate() {
            let Some(lowered) = zeta.lower(d) else {
                continue;
            };
            let factor = zeta.exponents()[d] as f64;
            for term in terms {
                let coeff = factor * term.coeff;
                let target = lowered.add(&term.exponents);
                match dict.position(&target) {
                    Some(row) => entries[(row, col)] += coeff,
                    None => truncated_mass[col] += coeff.abs(),
                }
            }
        }
    }
    Ok(GeneratorMatrix {
        entries,
        dict,
        truncated_mass,
    })
}

/// Integrates `dC/dt = G C` from `C(0) = I` over `dt` with `substeps` RK4
/// steps and returns `K = C(dt)ᵀ`.
pub fn prior_koopman(gen: &GeneratorMatrix, dt: f64, substeps: usize) -> Result<KoopmanMatrix> {
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be >= 1".into()));
    }
    let g = &gen.entries;
    let n = g.nrows();
    let h = dt / substeps as f64;
    let mut c = DMatrix::<f64>::identity(n, n);
    let mut k1 = DMatrix::zeros(n, n);
    let mut k2 = DMatrix::zeros(n, n);
    let mut k3 = DMatrix::zeros(n, n);
    let mut k4 = DMatrix::zeros(n, n);
    let mut tmp = DMatrix::zeros(n, n);
    for _ in 0..substeps {
        g.mul_to(&c, &mut k1);
        offset(&mut tmp, &c, 0.5 * h, &k1);
        g.mul_to(&tmp, &mut k2);
        offset(&mut tmp, &c, 0.5 * h, &k2);
        g.mul_to(&tmp, &mut k3);
        offset(&mut tmp, &c, h, &k3);
        g.mul_to(&tmp, &mut k4);
        for ((((ci, a), b), e), f) in c
            .as_mut_slice()
            .iter_mut()
            .zip(k1.as_slice())
            .zip(k2.as_slice())
            .zip(k3.as_slice())
            .zip(k4.as_slice())
        {
            *ci += h / 6.0 * (a + 2.0 * b + 2.0 * e + f);
        }
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prior Koopman matrix"));
    }
    KoopmanMatrix::new(c.transpose(), gen.dict.clone(), dt)
}

/// `out = base + scale · dir`
fn offset(out: &mut DMatrix<f64>, base: &DMatrix<f64>, scale: f64, dir: &DMatrix<f64>) {
    for ((o, b), d) in out
        .as_mut_slice()
        .iter_mut()
        .zip(base.as_slice())
        .zip(dir.as_slice())
    {
        *o = b + scale * d;
    }
}

/// Field instantiation, generator build, and coefficient integration in one call.
pub fn prior_for_params(
    system: &System,
    theta: &[f64],
    dict: Arc<Dictionary>,
    dt: f64,
    substeps: usize,
) -> Result<KoopmanMatrix> {
    let field = system.field(theta)?;
    let gen = build_generator(&field, dict)?;
    prior_koopman(&gen, dt, substeps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::MultiIndex;
    use crate::dynamics::{duffing_field, vdp_field, Term};

    fn decay_field() -> PolynomialVectorField {
        PolynomialVectorField::new(vec![vec![Term::new(-1.0, vec![1])]], vec![], vec![]).unwrap()
    }

    #[test]
    fn zero_field_generator() {
        let dict = Arc::new(Dictionary::new(2, 4).unwrap());
        let g = build_generator(&PolynomialVectorField::zero(2), dict.clone()).unwrap();
        assert_eq!(g.entries(), &DMatrix::zeros(15, 15));
        let k = prior_koopman(&g, 0.1, 10).unwrap();
        assert_eq!(k.entries(), &DMatrix::identity(15, 15));
    }

    #[test]
    fn euler_operator() {
        let dict = Arc::new(Dictionary::new(1, 3).unwrap());
        let g = build_generator(&decay_field(), dict).unwrap();
        let want =
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, -1.0, -2.0, -3.0]));
        assert_eq!(g.entries(), &want);
        assert!(g.truncated_mass().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn decay_prior_is_analytic() {
        let dict = Arc::new(Dictionary::new(1, 3).unwrap());
        let g = build_generator(&decay_field(), dict).unwrap();
        let k = prior_koopman(&g, 0.1, 100).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { (-0.1 * i as f64).exp() } else { 0.0 };
                assert!((k.entries()[(i, j)] - want).abs() < 1e-9);
            }
        }
        assert_eq!(
            prior_koopman(&g, 0.0, 10).unwrap().entries(),
            &DMatrix::identity(4, 4)
        );
    }

    #[test]
    fn duffing_x1_column() {
        let dict = Arc::new(Dictionary::new(2, 5).unwrap());
        let g = build_generator(&duffing_field(1.9, -1.9, 1.4), dict.clone()).unwrap();
        let col = dict.position(&MultiIndex::new(vec![1, 0])).unwrap();
        let row = dict.position(&MultiIndex::new(vec![0, 1])).unwrap();
        for r in 0..dict.size() {
            let want = if r == row { 1.0 } else { 0.0 };
            assert_eq!(g.entries()[(r, col)], want);
        }
    }

    #[test]
    fn truncation_bookkeeping() {
        let dict = Arc::new(Dictionary::new(2, 5).unwrap());
        for field in [duffing_field(1.9, -1.9, 1.4), vdp_field(1.3)] {
            let g = build_generator(&field, dict.clone()).unwrap();
            for (m, mass) in dict.indices().iter().zip(g.truncated_mass()) {
                if m.degree() <= 3 {
                    assert_eq!(*mass, 0.0, "{m}");
                }
            }
            // x2^5: L† contributes -5α x1³ x2⁴ (Duffing) or 5μ x1² x2⁵ (vdp)
            let top = dict.position(&MultiIndex::new(vec![0, 5])).unwrap();
            assert!(g.truncated_mass()[top] > 0.0);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let dict = Arc::new(Dictionary::new(3, 2).unwrap());
        assert!(build_generator(&vdp_field(1.0), dict).is_err());
    }

    #[test]
    fn harmonic_prior_is_rotation() {
        let dict = Arc::new(Dictionary::new(2, 5).unwrap());
        let k = prior_for_params(&System::VanDerPol, &[0.0], dict, 0.1, 100).unwrap();
        let block = k.entries().view((1, 1), (2, 2)).into_owned();
        let gram = block.transpose() * &block;
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn prior_rejects_bad_theta() {
        let dict = Arc::new(Dictionary::new(2, 5).unwrap());
        assert!(prior_for_params(&System::Duffing, &[1.0], dict, 0.1, 100).is_err());
    }
}
