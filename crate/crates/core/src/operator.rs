//! Discrete linear operators with structured, matrix-free representations.
//!
//! Every operator supports `apply` and `apply_adjoint`; `to_dense` is only
//! available while the matrix fits inside [`DENSE_ENTRY_LIMIT`].

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{trapezoid_weights, Grid, WeightingMode};

/// Largest `rows * cols` for which dense storage is allowed.
pub const DENSE_ENTRY_LIMIT: usize = 16_000_000;

/// Rows generated per block by the moment kernels. Powers are re-seeded with
/// `powi` at every block start, so entries and sums are a fixed function of
/// this constant.
pub(crate) const ROW_CHUNK: usize = 64;

/// Row kernel of a [`MomentRows`] operator, indexed by the 1-based row `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKernel {
    /// `t^(j-1)`, with `0^0 = 1`.
    Power,
    /// `(1 - t^j) / j`.
    Composite,
}

impl MomentKernel {
    /// Kernel value for row `j` given `power = t^(j-1)`.
    #[inline]
    fn eval(self, j: usize, t: f64, power: f64) -> f64 {
        match self {
            MomentKernel::Power => power,
            MomentKernel::Composite => (1.0 - power * t) / j as f64,
        }
    }
}

/// Rows `j = 1..=rows` of `col_scale[i] * kernel_j(t_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRows {
    kernel: MomentKernel,
    points: Vec<f64>,
    col_scale: Vec<f64>,
    rows: usize,
}

impl MomentRows {
    pub fn kernel(&self) -> MomentKernel {
        self.kernel
    }

    /// Calls `f(j0, row)` for every row of the block starting at 0-based row `j0`.
    fn for_each_row_in_block(&self, j0: usize, buf: &mut [f64], mut f: impl FnMut(usize, &[f64])) {
        let j1 = (j0 + ROW_CHUNK).min(self.rows);
        let mut powers: Vec<f64> = self.points.iter().map(|&t| t.powi(j0 as i32)).collect();
        for j in j0..j1 {
            for ((b, (&t, &c)), p) in buf
                .iter_mut()
                .zip(self.points.iter().zip(&self.col_scale))
                .zip(powers.iter_mut())
            {
                *b = c * self.kernel.eval(j + 1, t, *p);
                *p *= t;
            }
            f(j, buf);
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        y.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(block, out)| {
            let j0 = block * ROW_CHUNK;
            let mut buf = vec![0.0; self.points.len()];
            self.for_each_row_in_block(j0, &mut buf, |j, row| {
                out[j - j0] = row.iter().zip(x).map(|(a, b)| a * b).sum();
            });
        });
        y
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let kernel = self.kernel;
        let rows = self.rows;
        self.points
            .par_iter()
            .zip(self.col_scale.par_iter())
            .map(|(&t, &c)| {
                let mut acc = 0.0;
                let mut j0 = 0;
                while j0 < rows {
                    let j1 = (j0 + ROW_CHUNK).min(rows);
                    let mut p = t.powi(j0 as i32);
                    for (j, yj) in y.iter().enumerate().take(j1).skip(j0) {
                        acc += (c * kernel.eval(j + 1, t, p)) * yj;
                        p *= t;
                    }
                    j0 = j1;
                }
                acc
            })
            .collect()
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let cols = self.points.len();
        let mut m = DMatrix::zeros(self.rows, cols);
        let mut buf = vec![0.0; cols];
        for j0 in (0..self.rows).step_by(ROW_CHUNK) {
            self.for_each_row_in_block(j0, &mut buf, |j, row| {
                for (i, v) in row.iter().enumerate() {
                    m[(j, i)] = *v;
                }
            });
        }
        m
    }
}

/// Lower-triangular 0/1 pattern `[t_i <= s_j]` with row and column scales.
/// Matvecs are prefix sums.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularPrefix {
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    /// `cut[j]` = number of input points `t_i <= s_j`.
    cut: Vec<usize>,
}

impl TriangularPrefix {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut prefix = Vec::with_capacity(x.len() + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for (c, xi) in self.col_scale.iter().zip(x) {
            acc += c * xi;
            prefix.push(acc);
        }
        self.cut
            .iter()
            .zip(&self.row_scale)
            .map(|(&k, r)| r * prefix[k])
            .collect()
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let n = self.col_scale.len();
        // bucket[k] collects rows whose prefix length is k
        let mut bucket = vec![0.0; n + 1];
        for ((&k, r), yj) in self.cut.iter().zip(&self.row_scale).zip(y) {
            bucket[k] += r * yj;
        }
        let mut out = vec![0.0; n];
        let mut suffix = 0.0;
        for i in (0..n).rev() {
            suffix += bucket[i + 1];
            out[i] = self.col_scale[i] * suffix;
        }
        out
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.cut.len(), self.col_scale.len());
        for (j, (&k, r)) in self.cut.iter().zip(&self.row_scale).enumerate() {
            for i in 0..k {
                m[(j, i)] = r * self.col_scale[i];
            }
        }
        m
    }
}

/// Storage of a symmetric kernel matrix `K(s_a, t_b)`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelStorage {
    /// Fully assembled symmetric kernel.
    Assembled(DMatrix<f64>),
    /// `K = sum_j g_j g_j^T` with `g_j(i) = (1 - t_i^j) / j`, never formed.
    Factored,
}

/// Discretized `A*A` integral operator with a Gram kernel.
///
/// PaperFaithful applies `K diag(w)`, L2Consistent applies
/// `diag(sqrt w) K diag(sqrt w)`. Both are similar to the symmetric form
/// `W^(1/2) K W^(1/2)` and share its eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct GramKernel {
    pub(crate) points: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    pub(crate) mode: WeightingMode,
    pub(crate) j_max: usize,
    pub(crate) storage: KernelStorage,
}

impl GramKernel {
    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn mode(&self) -> WeightingMode {
        self.mode
    }

    pub fn storage(&self) -> &KernelStorage {
        &self.storage
    }

    /// Unweighted kernel matrix, if assembled.
    pub fn kernel_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.storage {
            KernelStorage::Assembled(k) => Some(k),
            KernelStorage::Factored => None,
        }
    }

    fn kernel_apply(&self, z: &[f64]) -> Vec<f64> {
        match &self.storage {
            KernelStorage::Assembled(k) => {
                let v = k * DVector::from_column_slice(z);
                v.as_slice().to_vec()
            }
            KernelStorage::Factored => crate::kernel::factored_kernel_apply(&self.points, self.j_max, z),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self.mode {
            WeightingMode::PaperFaithful => {
                let z: Vec<f64> = self.weights.iter().zip(x).map(|(w, v)| w * v).collect();
                self.kernel_apply(&z)
            }
            WeightingMode::L2Consistent => self.sqrt_weighted_apply(x),
        }
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        match self.mode {
            WeightingMode::PaperFaithful => {
                let ky = self.kernel_apply(y);
                self.weights.iter().zip(ky).map(|(w, v)| w * v).collect()
            }
            WeightingMode::L2Consistent => self.sqrt_weighted_apply(y),
        }
    }

    /// `W^(1/2) K W^(1/2) x`, the symmetric form in either mode.
    pub(crate) fn sqrt_weighted_apply(&self, x: &[f64]) -> Vec<f64> {
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let z: Vec<f64> = sw.iter().zip(x).map(|(s, v)| s * v).collect();
        let kz = self.kernel_apply(&z);
        sw.iter().zip(kz).map(|(s, v)| s * v).collect()
    }

    fn symmetric_form(&self) -> Option<DMatrix<f64>> {
        let k = self.kernel_matrix()?;
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        Some(DMatrix::from_fn(k.nrows(), k.ncols(), |a, b| sw[a] * k[(a, b)] * sw[b]))
    }

    fn to_dense(&self) -> Option<DMatrix<f64>> {
        let k = self.kernel_matrix()?;
        Some(match self.mode {
            WeightingMode::PaperFaithful => {
                DMatrix::from_fn(k.nrows(), k.ncols(), |a, b| k[(a, b)] * self.weights[b])
            }
            WeightingMode::L2Consistent => self.symmetric_form()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Dense(DMatrix<f64>),
    TriangularPrefix(TriangularPrefix),
    MomentRows(MomentRows),
    Diagonal(Vec<f64>),
    /// Factors ordered outermost first: `[F1, F2]` is `F1 * F2`.
    Product(Vec<DiscreteOperator>),
    GramKernel(GramKernel),
}

impl Representation {
    pub fn kind(&self) -> &'static str {
        match self {
            Representation::Dense(_) => "dense",
            Representation::TriangularPrefix(_) => "triangular_prefix",
            Representation::MomentRows(_) => "moment_rows",
            Representation::Diagonal(_) => "diagonal",
            Representation::Product(_) => "product",
            Representation::GramKernel(_) => "gram_kernel",
        }
    }
}

/// A real linear map `R^cols -> R^rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    name: String,
    rows: usize,
    cols: usize,
    repr: Representation,
}

impl DiscreteOperator {
    pub fn from_dense(name: impl Into<String>, matrix: DMatrix<f64>) -> Self {
        Self {
            name: name.into(),
            rows: matrix.nrows(),
            cols: matrix.ncols(),
            repr: Representation::Dense(matrix),
        }
    }

    pub fn diagonal(name: impl Into<String>, diag: Vec<f64>) -> Self {
        let n = diag.len();
        Self {
            name: name.into(),
            rows: n,
            cols: n,
            repr: Representation::Diagonal(diag),
        }
    }

    /// Composition `factors[0] * factors[1] * ...`.
    pub fn product(name: impl Into<String>, factors: Vec<DiscreteOperator>) -> Result<Self> {
        let (first, last) = match (factors.first(), factors.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(invalid("product needs at least one factor")),
        };
        for pair in factors.windows(2) {
            if pair[0].cols != pair[1].rows {
                return Err(Error::DimensionMismatch(format!(
                    "{} has {} columns but {} has {} rows",
                    pair[0].name, pair[0].cols, pair[1].name, pair[1].rows
                )));
            }
        }
        let (rows, cols) = (first.rows, last.cols);
        Ok(Self {
            name: name.into(),
            rows,
            cols,
            repr: Representation::Product(factors),
        })
    }

    pub(crate) fn from_gram(name: impl Into<String>, gram: GramKernel) -> Self {
        let n = gram.points.len();
        Self {
            name: name.into(),
            rows: n,
            cols: n,
            repr: Representation::GramKernel(gram),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}: input length {} but {} columns",
                self.name,
                x.len(),
                self.cols
            )));
        }
        Ok(self.apply_unchecked(x))
    }

    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}: adjoint input length {} but {} rows",
                self.name,
                y.len(),
                self.rows
            )));
        }
        Ok(self.apply_adjoint_unchecked(y))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match &self.repr {
            Representation::Dense(m) => dense_matvec(m, x),
            Representation::TriangularPrefix(t) => t.apply(x),
            Representation::MomentRows(mr) => mr.apply(x),
            Representation::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            Representation::Product(factors) => factors
                .iter()
                .rev()
                .fold(x.to_vec(), |v, f| f.apply_unchecked(&v)),
            Representation::GramKernel(g) => g.apply(x),
        }
    }

    pub(crate) fn apply_adjoint_unchecked(&self, y: &[f64]) -> Vec<f64> {
        match &self.repr {
            Representation::Dense(m) => dense_matvec_transpose(m, y),
            Representation::TriangularPrefix(t) => t.apply_adjoint(y),
            Representation::MomentRows(mr) => mr.apply_adjoint(y),
            Representation::Diagonal(d) => d.iter().zip(y).map(|(a, b)| a * b).collect(),
            Representation::Product(factors) => factors
                .iter()
                .fold(y.to_vec(), |v, f| f.apply_adjoint_unchecked(&v)),
            Representation::GramKernel(g) => g.apply_adjoint(y),
        }
    }

    fn check_dense_budget(&self, alternative: &'static str) -> Result<()> {
        if self.rows.saturating_mul(self.cols) > DENSE_ENTRY_LIMIT {
            return Err(Error::TooLarge {
                what: format!("operator {}", self.name),
                rows: self.rows,
                cols: self.cols,
                limit: DENSE_ENTRY_LIMIT,
                alternative,
            });
        }
        Ok(())
    }

    /// Explicit matrix of the operator.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        self.check_dense_budget("matrix-free apply / lanczos_topk")?;
        Ok(match &self.repr {
            Representation::Dense(m) => m.clone(),
            Representation::TriangularPrefix(t) => t.to_dense(),
            Representation::MomentRows(mr) => mr.to_dense(),
            Representation::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            Representation::Product(factors) => {
                let mut acc = factors[0].to_dense()?;
                for f in &factors[1..] {
                    acc = match f.representation() {
                        Representation::Diagonal(d) => {
                            let mut a = acc;
                            for (c, s) in d.iter().enumerate() {
                                a.column_mut(c).scale_mut(*s);
                            }
                            a
                        }
                        _ => acc * f.to_dense()?,
                    };
                }
                acc
            }
            Representation::GramKernel(g) => g.to_dense().ok_or_else(|| Error::TooLarge {
                what: format!("operator {} (factored kernel)", self.name),
                rows: self.rows,
                cols: self.cols,
                limit: DENSE_ENTRY_LIMIT,
                alternative: "lanczos_topk on the matrix-free operator",
            })?,
        })
    }

    /// Dense symmetric matrix sharing this operator's eigenvalues. Gram
    /// kernels return `W^(1/2) K W^(1/2)`; everything else must already be
    /// symmetric to `1e-12` componentwise relative.
    pub fn symmetric_dense(&self) -> Result<DMatrix<f64>> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{} is {}x{}, not square",
                self.name, self.rows, self.cols
            )));
        }
        self.check_dense_budget("lanczos_topk")?;
        if let Representation::GramKernel(g) = &self.repr {
            return g.symmetric_form().ok_or_else(|| Error::TooLarge {
                what: format!("operator {} (factored kernel)", self.name),
                rows: self.rows,
                cols: self.cols,
                limit: DENSE_ENTRY_LIMIT,
                alternative: "lanczos_topk on the matrix-free operator",
            });
        }
        let m = self.to_dense()?;
        check_symmetric(&m, 1e-12)?;
        Ok(m)
    }
}

fn dense_matvec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let y = m * DVector::from_column_slice(x);
    y.as_slice().to_vec()
}

fn dense_matvec_transpose(m: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let x = m.tr_mul(&DVector::from_column_slice(y));
    x.as_slice().to_vec()
}

/// Fails with the worst relative asymmetry when it exceeds `rel_tol`.
/// Entries below `eps * max|a|` count as zero.
pub fn check_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> Result<()> {
    let n = m.nrows();
    let scale = m.amax();
    let floor = f64::EPSILON * scale;
    let mut worst = (0.0, 0, 0);
    for a in 0..n {
        for b in (a + 1)..n {
            let (x, y) = (m[(a, b)], m[(b, a)]);
            let diff = (x - y).abs();
            if diff <= floor {
                continue;
            }
            let rel = diff / x.abs().max(y.abs());
            if rel > worst.0 {
                worst = (rel, a, b);
            }
        }
    }
    if worst.0 > rel_tol {
        return Err(Error::NotSymmetric {
            max_asymmetry: worst.0,
            row: worst.1,
            col: worst.2,
        });
    }
    Ok(())
}

fn row_col_scales(
    g_in: &Grid,
    g_out: &Grid,
    mode: WeightingMode,
) -> (Vec<f64>, Vec<f64>) {
    let w_in = trapezoid_weights(g_in);
    let col = mode.column_scale(&w_in);
    let row = match mode {
        WeightingMode::PaperFaithful => vec![1.0; g_out.len()],
        WeightingMode::L2Consistent => trapezoid_weights(g_out).sqrt(),
    };
    (row, col)
}

/// Integration operator `(Jx)(s) = int_0^s x(t) dt` on input grid `g_in`
/// (columns) and output grid `g_out` (rows).
pub fn build_j(g_in: &Grid, g_out: &Grid, mode: WeightingMode) -> DiscreteOperator {
    let (row_scale, col_scale) = row_col_scales(g_in, g_out, mode);
    let t = g_in.points();
    let cut = g_out
        .points()
        .iter()
        .map(|&s| t.partition_point(|&ti| ti <= s))
        .collect();
    DiscreteOperator {
        name: "J".into(),
        rows: g_out.len(),
        cols: g_in.len(),
        repr: Representation::TriangularPrefix(TriangularPrefix {
            row_scale,
            col_scale,
            cut,
        }),
    }
}

fn moment_rows(
    name: &str,
    kernel: MomentKernel,
    num_moments: usize,
    g: &Grid,
    mode: WeightingMode,
) -> Result<DiscreteOperator> {
    if num_moments == 0 {
        return Err(invalid("num_moments must be at least 1"));
    }
    if num_moments > i32::MAX as usize {
        return Err(invalid(format!("num_moments {num_moments} too large")));
    }
    let col_scale = mode.column_scale(&trapezoid_weights(g));
    Ok(DiscreteOperator {
        name: name.into(),
        rows: num_moments,
        cols: g.len(),
        repr: Representation::MomentRows(MomentRows {
            kernel,
            points: g.points().to_vec(),
            col_scale,
            rows: num_moments,
        }),
    })
}

/// Hausdorff moment operator: row `j` integrates against `t^(j-1)`.
/// Moments are sequences, so no row weights are applied in either mode.
pub fn build_bh(num_moments: usize, g: &Grid, mode: WeightingMode) -> Result<DiscreteOperator> {
    moment_rows("B^H", MomentKernel::Power, num_moments, g, mode)
}

/// Moment operator composed with integration, assembled directly from the
/// single kernel `(1 - t^j) / j`.
pub fn build_composite_a(
    num_moments: usize,
    g: &Grid,
    mode: WeightingMode,
) -> Result<DiscreteOperator> {
    moment_rows("A", MomentKernel::Composite, num_moments, g, mode)
}

/// Pointwise multiplication by `m(s) = s^kappa` on the grid.
pub fn build_bm(kappa: f64, g: &Grid) -> Result<DiscreteOperator> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(invalid(format!("kappa must be positive and finite, got {kappa}")));
    }
    let diag = g.points().iter().map(|&t| multiplier(t, kappa)).collect();
    Ok(DiscreteOperator::diagonal("B^M", diag))
}

/// `t^kappa`, exact for integer exponents.
pub(crate) fn multiplier(t: f64, kappa: f64) -> f64 {
    if kappa.fract() == 0.0 && kappa <= i32::MAX as f64 {
        t.powi(kappa as i32)
    } else {
        t.powf(kappa)
    }
}
