//! Singular value spectra of discrete operators.

use std::collections::BTreeMap;

use nalgebra::{SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator::{DiscreteOperator, Representation};

pub use crate::lanczos::{lanczos_topk, LanczosConfig, Reorthogonalization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    DenseSvd,
    SymmetricEig,
    LanczosPartial,
}

/// Descending singular values with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<f64>,
    method: SpectrumMethod,
    rows: usize,
    cols: usize,
    requested_k: usize,
    tolerance: f64,
    numerical_rank: usize,
    converged: Vec<bool>,
    metadata: BTreeMap<String, String>,
}

/// `max(rows, cols) * eps`, relative to the largest value.
pub fn default_rank_tolerance(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

impl Spectrum {
    /// Validates ordering, sign and length; every value is marked converged.
    pub fn new(
        values: Vec<f64>,
        method: SpectrumMethod,
        rows: usize,
        cols: usize,
        requested_k: usize,
        tolerance: f64,
    ) -> Result<Self> {
        let expected = requested_k.min(rows.min(cols));
        if values.len() != expected {
            return Err(invalid(format!(
                "spectrum has {} values, expected min({requested_k}, {rows}, {cols}) = {expected}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(*v >= 0.0)) {
            return Err(invalid(format!("singular value {} at index {} is negative or NaN", values[i], i + 1)));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(invalid("singular values are not in descending order"));
        }
        let numerical_rank = count_above(&values, default_rank_tolerance(rows, cols));
        let converged = vec![true; values.len()];
        Ok(Self {
            values,
            method,
            rows,
            cols,
            requested_k,
            tolerance,
            numerical_rank,
            converged,
            metadata: BTreeMap::new(),
        })
    }

    pub(crate) fn with_convergence(mut self, converged: Vec<bool>) -> Self {
        debug_assert_eq!(converged.len(), self.values.len());
        self.converged = converged;
        self
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.metadata.insert(key.into(), value.to_string());
        self
    }

    /// The first `k` values with the same provenance.
    pub fn truncated(&self, k: usize) -> Spectrum {
        let k = k.min(self.values.len());
        let values = self.values[..k].to_vec();
        let numerical_rank = count_above(&values, default_rank_tolerance(self.rows, self.cols));
        Spectrum {
            values,
            requested_k: k,
            numerical_rank,
            converged: self.converged[..k].to_vec(),
            metadata: self.metadata.clone(),
            ..*self
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// 1-based access, `sigma(1)` is the largest value.
    pub fn sigma(&self, index: usize) -> Option<f64> {
        index.checked_sub(1).and_then(|i| self.values.get(i).copied())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn method(&self) -> SpectrumMethod {
        self.method
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn requested_k(&self) -> usize {
        self.requested_k
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Numerical rank at the default tolerance.
    pub fn numerical_rank(&self) -> usize {
        self.numerical_rank
    }

    /// Per-value convergence flags; only Lanczos can report `false`.
    pub fn converged(&self) -> &[bool] {
        &self.converged
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|c| *c)
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    /// Absolute floor below which values are indistinguishable from roundoff.
    pub fn rank_floor(&self) -> f64 {
        default_rank_tolerance(self.rows, self.cols) * self.values.first().copied().unwrap_or(0.0)
    }
}

fn count_above(values: &[f64], rel_tol: f64) -> usize {
    match values.first() {
        Some(&top) if top > 0.0 => values.iter().filter(|&&v| v > rel_tol * top).count(),
        _ => 0,
    }
}

/// Count of `sigma_i > rel_tol * sigma_1`; `None` uses `max(rows, cols) * eps`.
pub fn numerical_rank(s: &Spectrum, rel_tol: Option<f64>) -> usize {
    let tol = rel_tol.unwrap_or_else(|| default_rank_tolerance(s.rows, s.cols));
    count_above(&s.values, tol)
}

fn sort_descending(values: &mut [f64]) {
    values.sort_by(|a, b| b.total_cmp(a));
}

fn tagged(s: Spectrum, op: &DiscreteOperator) -> Spectrum {
    s.with_metadata("operator", op.name())
        .with_metadata("representation", op.representation().kind())
}

/// All singular values. Diagonal operators are handled exactly by sorting
/// absolute values; everything else goes through a dense SVD.
pub fn full_svd(op: &DiscreteOperator) -> Result<Spectrum> {
    let (rows, cols) = (op.rows(), op.cols());
    let min_dim = rows.min(cols);
    if let Representation::Diagonal(d) = op.representation() {
        let mut values: Vec<f64> = d.iter().map(|v| v.abs()).collect();
        sort_descending(&mut values);
        let s = Spectrum::new(values, SpectrumMethod::DenseSvd, rows, cols, min_dim, 0.0)?;
        return Ok(tagged(s, op).with_metadata("exact", "decreasing rearrangement"));
    }
    let dense = op.to_dense().map_err(|e| match e {
        Error::TooLarge { what, rows, cols, limit, .. } => Error::TooLarge {
            what,
            rows,
            cols,
            limit,
            alternative: "lanczos_topk",
        },
        other => other,
    })?;
    let mut values = if min_dim == 0 {
        Vec::new()
    } else {
        SVD::new(dense, false, false).singular_values.as_slice().to_vec()
    };
    sort_descending(&mut values);
    let s = Spectrum::new(values, SpectrumMethod::DenseSvd, rows, cols, min_dim, f64::EPSILON)?;
    Ok(tagged(s, op))
}

/// Eigenvalues of a symmetric operator, clamped at zero. Negative roundoff
/// eigenvalues are counted in the `clamped_negative` metadata entry.
pub fn sym_eigs(op: &DiscreteOperator) -> Result<Spectrum> {
    let m = op.symmetric_dense()?;
    let n = m.nrows();
    let mut values: Vec<f64> = if n == 0 {
        Vec::new()
    } else {
        SymmetricEigen::new(m).eigenvalues.as_slice().to_vec()
    };
    let clamped = values.iter().filter(|v| **v < 0.0).count();
    let most_negative = values.iter().copied().fold(0.0f64, f64::min);
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    sort_descending(&mut values);
    let s = Spectrum::new(values, SpectrumMethod::SymmetricEig, n, n, n, f64::EPSILON)?;
    Ok(tagged(s, op)
        .with_metadata("clamped_negative", clamped)
        .with_metadata("most_negative", format!("{most_negative:e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::hilbert_matrix;
    use nalgebra::DMatrix;

    #[test]
    fn identity_spectrum() {
        let op = DiscreteOperator::from_dense("I", DMatrix::identity(5, 5));
        let s = full_svd(&op).unwrap();
        assert_eq!(s.values(), &[1.0; 5]);
        assert_eq!(s.numerical_rank(), 5);
        assert_eq!(numerical_rank(&s, None), 5);
    }

    #[test]
    fn diagonal_is_rearranged() {
        let op = DiscreteOperator::diagonal("D", vec![3.0, 1.0, 2.0]);
        assert_eq!(full_svd(&op).unwrap().values(), &[3.0, 2.0, 1.0]);
        let dense = DiscreteOperator::from_dense("D", DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 2.0])));
        let s = full_svd(&dense).unwrap();
        for (a, b) in s.values().iter().zip([3.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn truncation_keeps_provenance() {
        let s = full_svd(&DiscreteOperator::diagonal("D", vec![3.0, 1.0, 2.0])).unwrap();
        let t = s.truncated(2);
        assert_eq!(t.values(), &[3.0, 2.0]);
        assert_eq!(t.requested_k(), 2);
        assert_eq!(t.metadata(), s.metadata());
        assert_eq!(s.truncated(10).len(), 3);
    }

    #[test]
    fn rank_with_tiny_value() {
        let s = Spectrum::new(vec![1.0, 1e-20], SpectrumMethod::DenseSvd, 2, 2, 2, 0.0).unwrap();
        assert_eq!(numerical_rank(&s, None), 1);
        assert_eq!(numerical_rank(&s, Some(1e-25)), 2);
        let z = Spectrum::new(vec![0.0, 0.0], SpectrumMethod::DenseSvd, 2, 2, 2, 0.0).unwrap();
        assert_eq!(numerical_rank(&z, None), 0);
    }

    #[test]
    fn spectrum_rejects_bad_values() {
        assert!(Spectrum::new(vec![1.0, 2.0], SpectrumMethod::DenseSvd, 2, 2, 2, 0.0).is_err());
        assert!(Spectrum::new(vec![1.0, -1.0], SpectrumMethod::DenseSvd, 2, 2, 2, 0.0).is_err());
        assert!(Spectrum::new(vec![1.0], SpectrumMethod::DenseSvd, 2, 2, 2, 0.0).is_err());
        assert!(Spectrum::new(vec![f64::NAN], SpectrumMethod::DenseSvd, 1, 1, 1, 0.0).is_err());
    }

    #[test]
    fn sym_eigs_matches_svd_on_hilbert() {
        let op = hilbert_matrix(3).unwrap().to_operator();
        let a = full_svd(&op).unwrap();
        let b = sym_eigs(&op).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(b.method(), SpectrumMethod::SymmetricEig);
    }

    #[test]
    fn sym_eigs_zero_and_asymmetric() {
        let z = DiscreteOperator::from_dense("0", DMatrix::zeros(4, 4));
        assert_eq!(sym_eigs(&z).unwrap().values(), &[0.0; 4]);
        let a = DiscreteOperator::from_dense("A", DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]));
        assert!(matches!(sym_eigs(&a), Err(Error::NotSymmetric { .. })));
        let rect = DiscreteOperator::from_dense("R", DMatrix::zeros(2, 3));
        assert!(matches!(sym_eigs(&rect), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn dense_svd_squares_match_gram_eigenvalues() {
        let m = DMatrix::from_fn(7, 5, |i, j| ((i * 5 + j) as f64).sin() + if i == j { 2.0 } else { 0.0 });
        let mut gram: Vec<f64> = SymmetricEigen::new(m.transpose() * &m).eigenvalues.as_slice().to_vec();
        gram.sort_by(|a, b| b.total_cmp(a));
        let s = full_svd(&DiscreteOperator::from_dense("M", m)).unwrap();
        for (sv, ev) in s.values().iter().zip(&gram) {
            assert!((sv * sv - ev).abs() <= 1e-12 * gram[0]);
        }
    }
}
