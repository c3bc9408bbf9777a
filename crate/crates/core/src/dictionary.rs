//! Monomial dictionaries.
//!
//! A [`Dictionary`] holds every monomial `x^ζ` over `dim` variables with total
//! degree `|ζ| <= max_degree`. Indices are graded: ascending total degree, and
//! within one degree, descending exponent of `x_1`, then `x_2`, and so on. For
//! two variables and degree 2 this gives `[1, x1, x2, x1², x1x2, x2²]`.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Exponent vector `ζ` of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// The degree-one index `e_d`.
    pub fn unit(dim: usize, d: usize) -> Self {
        let mut e = vec![0; dim];
        e[d] = 1;
        Self(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// Exponent-wise sum, i.e. the index of the product monomial.
    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.dim(), other.dim());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Index of `∂/∂x_d x^ζ` divided by its prefactor `ζ_d`; `None` if `ζ_d = 0`.
    pub fn lower(&self, d: usize) -> Option<MultiIndex> {
        if self.0[d] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[d] -= 1;
        Some(MultiIndex(e))
    }

    /// `Π_d x_d^{ζ_d}` by repeated multiplication.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (&xd, &k) in x.iter().zip(&self.0) {
            let mut pw = 1.0;
            for _ in 0..k {
                pw *= xd;
            }
            acc *= pw;
        }
        acc
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Debug, Clone)]
pub struct Dictionary {
    dim: usize,
    max_degree: u32,
    indices: Vec<MultiIndex>,
    positions: HashMap<MultiIndex, usize>,
}

impl PartialEq for Dictionary {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.max_degree == other.max_degree
            && self.indices == other.indices
    }
}

impl Dictionary {
    /// All monomials over `dim` variables with total degree at most `max_degree`.
    pub fn new(dim: usize, max_degree: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "dictionary dimension must be >= 1".into(),
            ));
        }
        let mut indices = Vec::new();
        for degree in 0..=max_degree {
            let mut current = vec![0u32; dim];
            push_compositions(degree, 0, &mut current, &mut indices);
        }
        let positions = indices
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, m)| (m, i))
            .collect();
        Ok(Self {
            dim,
            max_degree,
            indices,
            positions,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// Number of dictionary functions, `N_dic`.
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, index: &MultiIndex) -> Option<usize> {
        self.positions.get(index).copied()
    }

    /// Lifted vector `ψ(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "dictionary evaluate",
                expected: self.dim,
                got: x.len(),
            });
        }
        // powers[d][k] = x_d^k, built by repeated multiplication
        let p = self.max_degree as usize;
        let powers: Vec<Vec<f64>> = x
            .iter()
            .map(|&xd| {
                let mut pw = Vec::with_capacity(p + 1);
                pw.push(1.0);
                for k in 1..=p {
                    pw.push(pw[k - 1] * xd);
                }
                pw
            })
            .collect();
        Ok(self
            .indices
            .iter()
            .map(|m| {
                m.exponents()
                    .iter()
                    .zip(&powers)
                    .fold(1.0, |acc, (&k, pw)| acc * pw[k as usize])
            })
            .collect())
    }

    /// Lifts every column of a `dim × m` state matrix.
    pub fn lift_batch(&self, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if states.nrows() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "dictionary lift_batch",
                expected: self.dim,
                got: states.nrows(),
            });
        }
        let mut out = DMatrix::zeros(self.size(), states.ncols());
        for (i, col) in states.column_iter().enumerate() {
            let x: Vec<f64> = col.iter().copied().collect();
            let psi = self.evaluate(&x)?;
            out.column_mut(i).copy_from_slice(&psi);
        }
        Ok(out)
    }

    /// Rows of the lifted vector holding `x_1, ..., x_D`.
    pub fn state_rows(&self) -> Result<Vec<usize>> {
        if self.max_degree == 0 {
            return Err(Error::InvalidArgument(
                "a degree-0 dictionary has no state rows".into(),
            ));
        }
        Ok((0..self.dim)
            .map(|d| self.positions[&MultiIndex::unit(self.dim, d)])
            .collect())
    }
}

/// Appends all exponent vectors with the given remaining degree, filling
/// positions `from..` in descending lexicographic order.
fn push_compositions(remaining: u32, from: usize, current: &mut [u32], out: &mut Vec<MultiIndex>) {
    let last = current.len() - 1;
    if from == last {
        current[last] = remaining;
        out.push(MultiIndex(current.to_vec()));
        current[last] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        current[from] = k;
        push_compositions(remaining - k, from + 1, current, out);
    }
    current[from] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
    }

    #[test]
    fn sizes() {
        assert_eq!(Dictionary::new(2, 5).unwrap().size(), 21);
        assert_eq!(Dictionary::new(2, 0).unwrap().size(), 1);
        assert_eq!(Dictionary::new(3, 2).unwrap().size(), 10);
        for d in 1..=4 {
            for p in 0..=6 {
                let dict = Dictionary::new(d, p).unwrap();
                assert_eq!(dict.size() as u64, binomial(d as u64 + p as u64, d as u64));
            }
        }
    }

    #[test]
    fn zero_dim_rejected() {
        assert!(Dictionary::new(0, 3).is_err());
    }

    #[test]
    fn graded_ordering() {
        let dict = Dictionary::new(2, 3).unwrap();
        let got: Vec<Vec<u32>> = dict
            .indices()
            .iter()
            .map(|m| m.exponents().to_vec())
            .collect();
        let want = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
            vec![3, 0],
            vec![2, 1],
            vec![1, 2],
            vec![0, 3],
        ];
        assert_eq!(got, want);

        let dict3 = Dictionary::new(3, 2).unwrap();
        let deg2: Vec<Vec<u32>> = dict3.indices()[4..]
            .iter()
            .map(|m| m.exponents().to_vec())
            .collect();
        assert_eq!(
            deg2,
            vec![
                vec![2, 0, 0],
                vec![1, 1, 0],
                vec![1, 0, 1],
                vec![0, 2, 0],
                vec![0, 1, 1],
                vec![0, 0, 2]
            ]
        );
    }

    #[test]
    fn no_duplicates_and_constant_first() {
        let dict = Dictionary::new(3, 4).unwrap();
        let mut sorted = dict.indices().to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), dict.size());
        assert_eq!(dict.indices()[0].degree(), 0);
        assert!(dict
            .indices()
            .windows(2)
            .all(|w| w[0].degree() <= w[1].degree()));
    }

    #[test]
    fn evaluate_examples() {
        let d25 = Dictionary::new(2, 5).unwrap();
        let psi = d25.evaluate(&[0.0, 0.0]).unwrap();
        assert_eq!(psi[0], 1.0);
        assert!(psi[1..].iter().all(|&v| v == 0.0));

        let d22 = Dictionary::new(2, 2).unwrap();
        assert_eq!(
            d22.evaluate(&[2.0, 3.0]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]
        );

        let psi = d25.evaluate(&[-1.0, 1.0]).unwrap();
        for (m, v) in d25.indices().iter().zip(&psi) {
            let sign = if m.exponents()[0] % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(*v, sign);
        }
    }

    #[test]
    fn evaluate_wrong_length() {
        let dict = Dictionary::new(2, 2).unwrap();
        assert!(matches!(
            dict.evaluate(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1,
                ..
            })
        ));
        assert!(dict.lift_batch(&DMatrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn lift_batch_edges() {
        let dict = Dictionary::new(2, 5).unwrap();
        let empty = dict.lift_batch(&DMatrix::zeros(2, 0)).unwrap();
        assert_eq!(empty.shape(), (21, 0));
        let single = dict.lift_batch(&DMatrix::zeros(2, 1)).unwrap();
        let mut e0 = DMatrix::zeros(21, 1);
        e0[(0, 0)] = 1.0;
        assert_eq!(single, e0);
    }

    #[test]
    fn state_rows_examples() {
        assert_eq!(
            Dictionary::new(2, 5).unwrap().state_rows().unwrap(),
            vec![1, 2]
        );
        assert_eq!(
            Dictionary::new(3, 2).unwrap().state_rows().unwrap(),
            vec![1, 2, 3]
        );
        assert!(Dictionary::new(2, 0).unwrap().state_rows().is_err());
    }

    #[test]
    fn multi_index_eval_matches_dictionary() {
        let dict = Dictionary::new(3, 4).unwrap();
        let x = [0.3, -1.7, 2.2];
        let psi = dict.evaluate(&x).unwrap();
        for (m, v) in dict.indices().iter().zip(&psi) {
            assert_eq!(m.eval(&x), *v);
        }
    }
}
