//! The `A*A` kernel `k(s, t) = sum_j (1 - s^j)(1 - t^j) / j^2` and its
//! discretization.
//!
//! Entries are evaluated through the partial dilogarithm
//! `S_J(x) = sum_{j <= J} x^j / j^2` as `S(1) - S(s) - S(t) + S(st)`, which
//! needs only a handful of terms for `st` away from 1. The direct rank-one
//! accumulation is kept as an independent route.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{trapezoid_weights, Grid, WeightingMode};
use crate::operator::{DiscreteOperator, GramKernel, KernelStorage, DENSE_ENTRY_LIMIT};

/// Truncation order meaning "sum the whole series".
pub const UNBOUNDED: usize = usize::MAX;

/// Series tail tolerance used when assembling kernel matrices. Far below
/// double rounding of the entries, so assembly noise is pure roundoff.
pub const ASSEMBLY_TOL: f64 = 1e-18;

const BASEL: f64 = PI * PI / 6.0;

/// Above this order the partial Basel sum switches to the trigamma tail.
const DIRECT_BASEL_MAX: usize = 1_000_000;

/// Neumaier compensated sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

/// `sum_{j > n} 1/j^2 = psi'(n + 1)`, asymptotic series; accurate to far
/// below `f64` resolution for `n >= 1e6`.
fn basel_tail(n: usize) -> f64 {
    let z = n as f64 + 1.0;
    let z2 = z * z;
    1.0 / z + 1.0 / (2.0 * z2) + 1.0 / (6.0 * z2 * z) - 1.0 / (30.0 * z2 * z2 * z)
        + 1.0 / (42.0 * z2 * z2 * z2 * z)
}

/// `sum_{j <= n} 1/j^2`.
pub fn partial_basel(n: usize) -> f64 {
    if n == UNBOUNDED {
        return BASEL;
    }
    if n > DIRECT_BASEL_MAX {
        return BASEL - basel_tail(n);
    }
    // smallest terms first
    let mut acc = CompensatedSum::default();
    for j in (1..=n).rev() {
        let jf = j as f64;
        acc.add(1.0 / (jf * jf));
    }
    acc.value()
}

/// Power series of `Li2` with geometric tail cut-off.
fn dilog_series(x: f64, j_max: usize, tol: f64) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut p = 1.0;
    let one_minus = 1.0 - x;
    let mut j = 1usize;
    loop {
        p *= x;
        let jf = j as f64;
        acc.add(p / (jf * jf));
        if j >= j_max {
            break;
        }
        let next = (j + 1) as f64;
        // sum_{i > j} x^i / i^2 <= x^(j+1) / ((j+1)^2 (1 - x))
        if p * x / (next * next * one_minus) < tol {
            break;
        }
        j += 1;
    }
    acc.value()
}

/// Partial dilogarithm `S_J(x) = sum_{j=1}^{J} x^j / j^2` for `x` in `[0, 1]`,
/// with absolute error at most `tol`. Pass [`UNBOUNDED`] for the full `Li2`.
pub fn partial_dilog(x: f64, j_max: usize, tol: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid(format!("partial_dilog argument {x} outside [0, 1]")));
    }
    if j_max == 0 {
        return Err(invalid("j_max must be at least 1"));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    Ok(partial_dilog_unchecked(x, j_max, tol))
}

pub(crate) fn partial_dilog_unchecked(x: f64, j_max: usize, tol: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x == 1.0 {
        partial_basel(j_max)
    } else if j_max == UNBOUNDED && x > 0.5 {
        // Li2(x) = pi^2/6 - ln(x) ln(1-x) - Li2(1-x)
        BASEL - x.ln() * (-x).ln_1p() - dilog_series(1.0 - x, UNBOUNDED, tol)
    } else {
        dilog_series(x, j_max, tol)
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

/// Truncated kernel `sum_{j <= j_max} (1 - s^j)(1 - t^j) / j^2`.
pub fn kernel_k(s: f64, t: f64, j_max: usize, tol: f64) -> Result<f64> {
    check_unit("s", s)?;
    check_unit("t", t)?;
    let q = tol / 4.0;
    let s1 = partial_dilog(1.0, j_max, q)?;
    let ss = partial_dilog(s, j_max, q)?;
    let st = partial_dilog(t, j_max, q)?;
    let sst = partial_dilog(s * t, j_max, q)?;
    Ok(combine(s1, ss, st, sst))
}

/// `(S(1) - S(s)) - (S(t) - S(st))`; both brackets are non-negative sums.
#[inline]
fn combine(s1: f64, ss: f64, st: f64, sst: f64) -> f64 {
    (s1 - ss) - (st - sst)
}

/// Discretized `A*A` with the kernel matrix assembled by the dilogarithm split.
pub fn build_astar_a(g: &Grid, j_max: usize, mode: WeightingMode) -> Result<DiscreteOperator> {
    if j_max == 0 {
        return Err(invalid("j_max must be at least 1"));
    }
    let n = g.len();
    if n.saturating_mul(n) > DENSE_ENTRY_LIMIT {
        return Err(Error::TooLarge {
            what: "A*A kernel".into(),
            rows: n,
            cols: n,
            limit: DENSE_ENTRY_LIMIT,
            alternative: "build_astar_a_matrix_free",
        });
    }
    let kernel = assemble_kernel_dilog(g.points(), j_max);
    Ok(gram_operator(g, j_max, mode, KernelStorage::Assembled(kernel)))
}

/// Discretized `A*A` that never forms the kernel; each apply costs
/// `O(N * j_max)`.
pub fn build_astar_a_matrix_free(g: &Grid, j_max: usize, mode: WeightingMode) -> Result<DiscreteOperator> {
    if j_max == 0 {
        return Err(invalid("j_max must be at least 1"));
    }
    if j_max > i32::MAX as usize {
        return Err(invalid(format!("j_max {j_max} too large for the factored kernel")));
    }
    Ok(gram_operator(g, j_max, mode, KernelStorage::Factored))
}

fn gram_operator(g: &Grid, j_max: usize, mode: WeightingMode, storage: KernelStorage) -> DiscreteOperator {
    DiscreteOperator::from_gram(
        "A*A",
        GramKernel {
            points: g.points().to_vec(),
            weights: trapezoid_weights(g).weights().to_vec(),
            mode,
            j_max,
            storage,
        },
    )
}

fn assemble_kernel_dilog(points: &[f64], j_max: usize) -> DMatrix<f64> {
    let n = points.len();
    let s1 = partial_dilog_unchecked(1.0, j_max, ASSEMBLY_TOL);
    let single: Vec<f64> = points
        .par_iter()
        .map(|&t| partial_dilog_unchecked(t, j_max, ASSEMBLY_TOL))
        .collect();
    let lower: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            (0..=a)
                .map(|b| {
                    let prod = partial_dilog_unchecked(points[a] * points[b], j_max, ASSEMBLY_TOL);
                    combine(s1, single[a], single[b], prod)
                })
                .collect()
        })
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for (a, row) in lower.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

const GRAM_CHUNK: usize = 256;

/// Kernel matrix by chunked rank-one accumulation `sum_j g_j g_j^T`,
/// `g_j(i) = (1 - t_i^j) / j`. Costs `O(N^2 j_max)`.
pub fn gram_kernel_rank_one(g: &Grid, j_max: usize) -> DMatrix<f64> {
    let t = g.points();
    let n = t.len();
    let mut k = DMatrix::zeros(n, n);
    let mut j0 = 0;
    while j0 < j_max {
        let j1 = (j0 + GRAM_CHUNK).min(j_max);
        let block = DMatrix::from_fn(j1 - j0, n, |r, i| {
            let j = j0 + r + 1;
            (1.0 - t[i].powi(j as i32)) / j as f64
        });
        k.gemm_tr(1.0, &block, &block, 1.0);
        j0 = j1;
    }
    k
}

/// `K z` without forming `K`. Chunks over `j` run in parallel and are
/// combined in chunk order.
pub(crate) fn factored_kernel_apply(points: &[f64], j_max: usize, z: &[f64]) -> Vec<f64> {
    let n = points.len();
    let chunks = j_max.div_ceil(GRAM_CHUNK);
    let partials: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let j0 = c * GRAM_CHUNK;
            let j1 = (j0 + GRAM_CHUNK).min(j_max);
            let mut powers: Vec<f64> = points.iter().map(|&t| t.powi(j0 as i32 + 1)).collect();
            let mut g = vec![0.0; n];
            let mut acc = vec![0.0; n];
            for j in (j0 + 1)..=j1 {
                let jf = j as f64;
                for ((gi, p), &t) in g.iter_mut().zip(powers.iter_mut()).zip(points) {
                    *gi = (1.0 - *p) / jf;
                    *p *= t;
                }
                let coef: f64 = g.iter().zip(z).map(|(a, b)| a * b).sum();
                for (a, gi) in acc.iter_mut().zip(&g) {
                    *a += coef * gi;
                }
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; n];
    for part in partials {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    out
}
