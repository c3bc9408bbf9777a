//! Polynomial vector fields, fixed-step RK4 integration, and snapshot data.

use nalgebra::DMatrix;

use crate::dictionary::MultiIndex;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// RK4 substeps per observation interval used throughout unless overridden.
pub const DEFAULT_SUBSTEPS: usize = 100;

/// Any state component above this magnitude aborts integration.
pub const BLOW_UP_LIMIT: f64 = 1e12;

/// One monomial term `coeff · x^exponents` of a vector-field component.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub exponents: MultiIndex,
}

impl Term {
    pub fn new(coeff: f64, exponents: Vec<u32>) -> Self {
        Self {
            coeff,
            exponents: MultiIndex::new(exponents),
        }
    }
}

/// A concrete polynomial right-hand side `ẋ = f(x; θ)` with all parameters
/// already substituted into the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialVectorField {
    dim: usize,
    components: Vec<Vec<Term>>,
    param_names: Vec<String>,
    param_values: Vec<f64>,
}

impl PolynomialVectorField {
    pub fn new(
        components: Vec<Vec<Term>>,
        param_names: Vec<String>,
        param_values: Vec<f64>,
    ) -> Result<Self> {
        let dim = components.len();
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "vector field needs at least one component".into(),
            ));
        }
        for term in components.iter().flatten() {
            if term.exponents.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "vector field term exponents",
                    expected: dim,
                    got: term.exponents.dim(),
                });
            }
            if !term.coeff.is_finite() {
                return Err(Error::NonFinite("vector field coefficient"));
            }
        }
        if param_names.len() != param_values.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter names vs values",
                expected: param_names.len(),
                got: param_values.len(),
            });
        }
        Ok(Self {
            dim,
            components,
            param_names,
            param_values,
        })
    }

    /// The field `ẋ = 0` in `dim` dimensions.
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            components: vec![Vec::new(); dim],
            param_names: Vec::new(),
            param_values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Vec<Term>] {
        &self.components
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn param_values(&self) -> &[f64] {
        &self.param_values
    }

    /// `f(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "vector field evaluation",
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        Ok(out)
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, terms) in out.iter_mut().zip(&self.components) {
            *o = terms.iter().map(|t| t.coeff * t.exponents.eval(x)).sum();
        }
    }

    /// Sum of two fields over the same dimension. Parameters are not carried.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                context: "vector field sum",
                expected: self.dim,
                got: other.dim,
            });
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().chain(b).cloned().collect())
            .collect();
        Ok(Self {
            dim: self.dim,
            components,
            param_names: Vec::new(),
            param_values: Vec::new(),
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        let components = self
            .components
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| Term {
                        coeff: c * t.coeff,
                        exponents: t.exponents.clone(),
                    })
                    .collect()
            })
            .collect();
        Self {
            dim: self.dim,
            components,
            param_names: Vec::new(),
            param_values: Vec::new(),
        }
    }

    /// Advances `x0` by `t_span` with `substeps` classical RK4 steps.
    pub fn integrate(&self, x0: &[f64], t_span: f64, substeps: usize) -> Result<Vec<f64>> {
        if x0.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "integrate initial state",
                expected: self.dim,
                got: x0.len(),
            });
        }
        if substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be >= 1".into()));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("integrate initial state"));
        }
        let n = self.dim;
        let h = t_span / substeps as f64;
        let mut x = x0.to_vec();
        let (mut k1, mut k2, mut k3, mut k4) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        for step in 0..substeps {
            self.eval_into(&x, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            self.eval_into(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            self.eval_into(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            self.eval_into(&tmp, &mut k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if x.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP_LIMIT) {
                return Err(Error::BlowUp {
                    step,
                    limit: BLOW_UP_LIMIT,
                });
            }
        }
        Ok(x)
    }
}

/// `ẋ1 = x2`, `ẋ2 = −δ x2 − β x1 − α x1³`.
pub fn duffing_field(alpha: f64, beta: f64, delta: f64) -> PolynomialVectorField {
    PolynomialVectorField {
        dim: 2,
        components: vec![
            vec![Term::new(1.0, vec![0, 1])],
            vec![
                Term::new(-delta, vec![0, 1]),
                Term::new(-beta, vec![1, 0]),
                Term::new(-alpha, vec![3, 0]),
            ],
        ],
        param_names: vec!["alpha".into(), "beta".into(), "delta".into()],
        param_values: vec![alpha, beta, delta],
    }
}

/// `ẋ1 = x2`, `ẋ2 = −μ(1 − x1²) x2 − x1`, expanded term by term.
pub fn vdp_field(mu: f64) -> PolynomialVectorField {
    PolynomialVectorField {
        dim: 2,
        components: vec![
            vec![Term::new(1.0, vec![0, 1])],
            vec![
                Term::new(-mu, vec![0, 1]),
                Term::new(mu, vec![2, 1]),
                Term::new(-1.0, vec![1, 0]),
            ],
        ],
        param_names: vec!["mu".into()],
        param_values: vec![mu],
    }
}

/// A term of a parametric polynomial system. Its coefficient is
/// `constant + Σ_k weights[k] · θ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateTerm {
    pub component: usize,
    pub exponents: Vec<u32>,
    pub constant: f64,
    pub weights: Vec<f64>,
}

/// User-defined polynomial system whose coefficients are affine in the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialTemplate {
    pub dim: usize,
    pub param_names: Vec<String>,
    pub terms: Vec<TemplateTerm>,
}

impl PolynomialTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument(
                "generic system dim must be >= 1".into(),
            ));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if t.component >= self.dim {
                return Err(Error::InvalidArgument(format!(
                    "term {i}: component {} out of range for dim {}",
                    t.component, self.dim
                )));
            }
            if t.exponents.len() != self.dim {
                return Err(Error::InvalidArgument(format!(
                    "term {i}: {} exponents for dim {}",
                    t.exponents.len(),
                    self.dim
                )));
            }
            if t.weights.len() > self.param_names.len() {
                return Err(Error::InvalidArgument(format!(
                    "term {i}: {} parameter weights but only {} parameters",
                    t.weights.len(),
                    self.param_names.len()
                )));
            }
        }
        Ok(())
    }
}

/// Parametric system family: the functional form is known, `θ` is not.
#[derive(Debug, Clone, PartialEq)]
pub enum System {
    /// `θ = (α, β, δ)`.
    Duffing,
    /// `θ = (μ)`.
    VanDerPol,
    Polynomial(PolynomialTemplate),
}

impl System {
    pub fn arity(&self) -> usize {
        match self {
            System::Duffing => 3,
            System::VanDerPol => 1,
            System::Polynomial(t) => t.param_names.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            System::Duffing | System::VanDerPol => 2,
            System::Polynomial(t) => t.dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            System::Duffing => "duffing",
            System::VanDerPol => "vdp",
            System::Polynomial(_) => "generic",
        }
    }

    pub fn field(&self, theta: &[f64]) -> Result<PolynomialVectorField> {
        if theta.len() != self.arity() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.arity(),
                got: theta.len(),
            });
        }
        match self {
            System::Duffing => Ok(duffing_field(theta[0], theta[1], theta[2])),
            System::VanDerPol => Ok(vdp_field(theta[0])),
            System::Polynomial(tpl) => {
                tpl.validate()?;
                let mut components = vec![Vec::new(); tpl.dim];
                for t in &tpl.terms {
                    let coeff =
                        t.constant + t.weights.iter().zip(theta).map(|(w, p)| w * p).sum::<f64>();
                    components[t.component].push(Term::new(coeff, t.exponents.clone()));
                }
                PolynomialVectorField::new(components, tpl.param_names.clone(), theta.to_vec())
            }
        }
    }
}

/// Paired pre- and post-states, one pair per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    dt_obs: f64,
    seed: u64,
}

impl SnapshotDataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, dt_obs: f64, seed: u64) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(Error::InvalidArgument(format!(
                "X is {:?} but Y is {:?}",
                x.shape(),
                y.shape()
            )));
        }
        if !(dt_obs > 0.0) {
            return Err(Error::InvalidArgument("dt_obs must be positive".into()));
        }
        Ok(Self { x, y, dt_obs, seed })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn dt_obs(&self) -> f64 {
        self.dt_obs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The i-th pair `(x_i, y_i)`.
    pub fn pair(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        (
            self.x.column(i).iter().copied().collect(),
            self.y.column(i).iter().copied().collect(),
        )
    }

    /// Pairs `start..end` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            x: self.x.columns(start, end - start).into_owned(),
            y: self.y.columns(start, end - start).into_owned(),
            dt_obs: self.dt_obs,
            seed: self.seed,
        }
    }
}

/// Draws `count` initial states uniformly in the box and pairs each with its
/// `dt_obs` flow.
pub fn generate_snapshots(
    field: &PolynomialVectorField,
    count: usize,
    box_low: &[f64],
    box_high: &[f64],
    dt_obs: f64,
    seed: u64,
    substeps: usize,
) -> Result<SnapshotDataset> {
    let dim = field.dim();
    if count == 0 {
        return Err(Error::InvalidArgument("snapshot count must be >= 1".into()));
    }
    if box_low.len() != dim || box_high.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "sampling box",
            expected: dim,
            got: box_low.len().min(box_high.len()),
        });
    }
    if box_low.iter().zip(box_high).any(|(l, h)| !(l < h)) {
        return Err(Error::InvalidArgument(
            "box_low must be < box_high componentwise".into(),
        ));
    }
    let mut rng = SeededRng::new(seed);
    let mut x = DMatrix::zeros(dim, count);
    let mut y = DMatrix::zeros(dim, count);
    for i in 0..count {
        let x0: Vec<f64> = (0..dim)
            .map(|d| rng.uniform_in(box_low[d], box_high[d]))
            .collect();
        let x1 = field.integrate(&x0, dt_obs, substeps)?;
        x.column_mut(i).copy_from_slice(&x0);
        y.column_mut(i).copy_from_slice(&x1);
    }
    SnapshotDataset::new(x, y, dt_obs, seed)
}

/// Cartesian grid with `n_per_axis` equispaced points per axis, endpoints
/// included. The first axis varies slowest.
pub fn grid_initial_states(
    low: f64,
    high: f64,
    n_per_axis: usize,
    dim: usize,
) -> Result<DMatrix<f64>> {
    if n_per_axis < 2 {
        return Err(Error::InvalidArgument(
            "grid needs at least 2 points per axis".into(),
        ));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("grid dimension must be >= 1".into()));
    }
    let axis: Vec<f64> = (0..n_per_axis)
        .map(|k| low + (high - low) * k as f64 / (n_per_axis - 1) as f64)
        .collect();
    let total = n_per_axis.pow(dim as u32);
    let mut out = DMatrix::zeros(dim, total);
    for col in 0..total {
        let mut rem = col;
        for d in (0..dim).rev() {
            out[(d, col)] = axis[rem % n_per_axis];
            rem /= n_per_axis;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn decay() -> PolynomialVectorField {
        PolynomialVectorField::new(vec![vec![Term::new(-1.0, vec![1])]], vec![], vec![]).unwrap()
    }

    #[test]
    fn field_definitions() {
        let f = duffing_field(1.9, -1.9, 1.4);
        assert_eq!(f.eval(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(f.eval(&[1.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let free = duffing_field(0.0, 0.0, 0.0);
        assert_eq!(free.eval(&[0.3, 0.7]).unwrap(), vec![0.7, 0.0]);
        assert_eq!(vdp_field(1.0).eval(&[2.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(
            duffing_field(1.0, -1.0, 0.5).param_values(),
            &[1.0, -1.0, 0.5]
        );
    }

    #[test]
    fn eval_dimension_mismatch() {
        assert!(vdp_field(1.0).eval(&[1.0]).is_err());
        assert!(vdp_field(1.0).integrate(&[1.0, 2.0, 3.0], 0.1, 10).is_err());
    }

    #[test]
    fn zero_field_is_exact() {
        let f = PolynomialVectorField::zero(3);
        let x0 = [0.1, -2.5, 7.0];
        assert_eq!(f.integrate(&x0, 3.7, 13).unwrap(), x0.to_vec());
    }

    #[test]
    fn free_motion() {
        let f = duffing_field(0.0, 0.0, 0.0);
        let x = f.integrate(&[0.2, 0.5], 1.0, 10).unwrap();
        assert_abs_diff_eq!(x[0], 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn exponential_decay() {
        let x = decay().integrate(&[1.0], 0.1, 100).unwrap();
        assert_abs_diff_eq!(x[0], (-0.1f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn step_halving_consistency() {
        let f = duffing_field(1.9, -1.9, 1.4);
        let a = f.integrate(&[0.5, 0.5], 0.1, 100).unwrap();
        let b = f.integrate(&[0.5, 0.5], 0.1, 200).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn rk4_fourth_order() {
        let exact = (-0.1f64).exp();
        let e1 = (decay().integrate(&[1.0], 0.1, 1).unwrap()[0] - exact).abs();
        let e2 = (decay().integrate(&[1.0], 0.1, 2).unwrap()[0] - exact).abs();
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn harmonic_energy() {
        let f = vdp_field(0.0);
        let x = f.integrate(&[0.6, -0.8], 1.0, 1000).unwrap();
        assert!((x[0] * x[0] + x[1] * x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn blow_up_detected() {
        // ẋ = x³ from x = 10 escapes in finite time 1/(2·100)
        let f = PolynomialVectorField::new(vec![vec![Term::new(1.0, vec![3])]], vec![], vec![])
            .unwrap();
        match f.integrate(&[10.0], 1.0, 1000) {
            Err(Error::BlowUp { step, .. }) => assert!(step < 1000),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn snapshots_in_box_and_reproducible() {
        let f = duffing_field(1.9, -1.9, 1.4);
        let ds = generate_snapshots(
            &f,
            10,
            &[-1.0, -1.0],
            &[1.0, 1.0],
            0.1,
            42,
            DEFAULT_SUBSTEPS,
        )
        .unwrap();
        assert_eq!(ds.len(), 10);
        assert!(ds.x().iter().all(|v| (-1.0..=1.0).contains(v)));
        let again = generate_snapshots(
            &f,
            10,
            &[-1.0, -1.0],
            &[1.0, 1.0],
            0.1,
            42,
            DEFAULT_SUBSTEPS,
        )
        .unwrap();
        assert_eq!(ds, again);
        for i in 0..ds.len() {
            let (x, y) = ds.pair(i);
            assert_eq!(f.integrate(&x, 0.1, DEFAULT_SUBSTEPS).unwrap(), y);
        }
    }

    #[test]
    fn snapshot_preconditions() {
        let f = vdp_field(1.0);
        assert!(generate_snapshots(&f, 0, &[-1.0, -1.0], &[1.0, 1.0], 0.1, 0, 100).is_err());
        assert!(generate_snapshots(&f, 5, &[1.0, -1.0], &[1.0, 1.0], 0.1, 0, 100).is_err());
        assert!(generate_snapshots(&f, 5, &[-1.0], &[1.0], 0.1, 0, 100).is_err());
    }

    #[test]
    fn grids() {
        let g = grid_initial_states(-1.0, 1.0, 5, 2).unwrap();
        assert_eq!(g.ncols(), 25);
        let pts: Vec<(f64, f64)> = g.column_iter().map(|c| (c[0], c[1])).collect();
        assert!(pts.contains(&(-1.0, -1.0)));
        assert!(pts.contains(&(0.0, 0.0)));
        assert!(pts.contains(&(1.0, 1.0)));
        assert_eq!(pts[1], (-1.0, -0.5));

        let g1 = grid_initial_states(-1.0, 1.0, 2, 1).unwrap();
        assert_eq!(g1.as_slice(), &[-1.0, 1.0]);
        let g2 = grid_initial_states(0.0, 2.0, 3, 1).unwrap();
        assert_eq!(g2.as_slice(), &[0.0, 1.0, 2.0]);
        assert!(grid_initial_states(0.0, 1.0, 1, 2).is_err());
    }

    #[test]
    fn system_templates() {
        assert_eq!(
            System::Duffing.field(&[1.9, -1.9, 1.4]).unwrap(),
            duffing_field(1.9, -1.9, 1.4)
        );
        assert!(System::VanDerPol.field(&[1.0, 2.0]).is_err());
        let tpl = PolynomialTemplate {
            dim: 1,
            param_names: vec!["k".into()],
            terms: vec![TemplateTerm {
                component: 0,
                exponents: vec![1],
                constant: 0.5,
                weights: vec![-2.0],
            }],
        };
        let f = System::Polynomial(tpl).field(&[1.0]).unwrap();
        assert_eq!(f.eval(&[2.0]).unwrap(), vec![-3.0]);
    }
}
