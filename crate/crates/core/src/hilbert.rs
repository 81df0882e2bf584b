//! Truncated Hilbert matrices `H_n(i, j) = 1 / (i + j - 1)` and the closed-form
//! Cholesky factor `L_n` with `L_n L_n^T = H_n`.
//!
//! Orders up to [`EXACT_MAX_ORDER`] also have an exact rational mode.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{invalid, Result};
use crate::operator::DiscreteOperator;

/// Largest order for which rational arithmetic is offered.
pub const EXACT_MAX_ORDER: usize = 12;

fn check_order(n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("Hilbert order must be at least 1"));
    }
    Ok(())
}

fn check_exact(n: usize) -> Result<()> {
    if n > EXACT_MAX_ORDER {
        return Err(invalid(format!(
            "rational mode supports orders up to {EXACT_MAX_ORDER}, got {n}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HilbertTruncation {
    matrix: DMatrix<f64>,
}

pub fn hilbert_matrix(n: usize) -> Result<HilbertTruncation> {
    check_order(n)?;
    let matrix = DMatrix::from_fn(n, n, |i, j| 1.0 / (i + j + 1) as f64);
    Ok(HilbertTruncation { matrix })
}

impl HilbertTruncation {
    pub fn order(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Exact entries, orders up to [`EXACT_MAX_ORDER`].
    pub fn exact_entries(&self) -> Result<Vec<Vec<BigRational>>> {
        let n = self.order();
        check_exact(n)?;
        Ok((0..n)
            .map(|i| {
                (0..n)
                    .map(|j| BigRational::new(BigInt::one(), BigInt::from(i + j + 1)))
                    .collect()
            })
            .collect())
    }

    pub fn to_operator(&self) -> DiscreteOperator {
        DiscreteOperator::from_dense(format!("H_{}", self.order()), self.matrix.clone())
    }
}

/// Lower-triangular factor, entries
/// `L(i, j) = sqrt(2j - 1) ((i-1)!)^2 / ((i-j)! (i+j-1)!)` for `j <= i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    matrix: DMatrix<f64>,
}

/// Evaluated in the log domain, so large orders do not overflow; entries that
/// fall below the smallest subnormal come out as zero.
pub fn hilbert_cholesky(n: usize) -> Result<CholeskyFactor> {
    check_order(n)?;
    // ln_fact[k] = ln k!
    let mut ln_fact = Vec::with_capacity(2 * n);
    ln_fact.push(0.0f64);
    for k in 1..2 * n {
        let prev = ln_fact[k - 1];
        ln_fact.push(prev + (k as f64).ln());
    }
    let matrix = DMatrix::from_fn(n, n, |r, c| {
        if c > r {
            return 0.0;
        }
        // 1-based i = r + 1, j = c + 1
        let log = 0.5 * ((2 * c + 1) as f64).ln() + 2.0 * ln_fact[r] - ln_fact[r - c] - ln_fact[r + c + 1];
        log.exp()
    });
    Ok(CholeskyFactor { matrix })
}

impl CholeskyFactor {
    pub fn order(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn to_operator(&self) -> DiscreteOperator {
        DiscreteOperator::from_dense(format!("L_{}", self.order()), self.matrix.clone())
    }

    /// Exact form of the same closed formula.
    pub fn exact(&self) -> Result<ExactCholesky> {
        ExactCholesky::new(self.order())
    }
}

fn factorial(k: usize) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, v| acc * BigInt::from(v))
}

/// `L(i, j) = sqrt(2j - 1) * r(i, j)` with rational `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactCholesky {
    rational: Vec<Vec<BigRational>>,
}

impl ExactCholesky {
    pub fn new(n: usize) -> Result<Self> {
        check_order(n)?;
        check_exact(n)?;
        let rational = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| {
                        if c > r {
                            BigRational::zero()
                        } else {
                            let num = factorial(r) * factorial(r);
                            let den = factorial(r - c) * factorial(r + c + 1);
                            BigRational::new(num, den)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { rational })
    }

    pub fn order(&self) -> usize {
        self.rational.len()
    }

    /// `L(i, j)^2`, 0-based indices.
    pub fn squared_entry(&self, r: usize, c: usize) -> BigRational {
        let v = &self.rational[r][c];
        v * v * BigRational::from_integer(BigInt::from(2 * c + 1))
    }

    /// `L L^T`, exactly.
    pub fn gram(&self) -> Vec<Vec<BigRational>> {
        let n = self.order();
        (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        (0..=a.min(b)).fold(BigRational::zero(), |acc, c| {
                            let scale = BigRational::from_integer(BigInt::from(2 * c + 1));
                            acc + &self.rational[a][c] * &self.rational[b][c] * scale
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

/// Exact `H_n = U D U^T` with unit lower-triangular `U`, by rational Gaussian
/// elimination. Independent of the closed form.
pub fn exact_hilbert_ldl(n: usize) -> Result<(Vec<Vec<BigRational>>, Vec<BigRational>)> {
    let h = hilbert_matrix(n)?.exact_entries()?;
    let mut a = h;
    let mut unit = vec![vec![BigRational::zero(); n]; n];
    let mut d = Vec::with_capacity(n);
    for k in 0..n {
        let pivot = a[k][k].clone();
        unit[k][k] = BigRational::one();
        for i in (k + 1)..n {
            let factor = &a[i][k] / &pivot;
            for j in (k + 1)..n {
                let delta = &factor * &a[k][j];
                a[i][j] -= delta;
            }
            unit[i][k] = factor;
        }
        d.push(pivot);
    }
    Ok((unit, d))
}

/// Number of sign changes in the leading principal minors of
/// `c (H_n - x I)` with `x = num / 2^shift`, i.e. the number of eigenvalues
/// below `x`. `None` when a minor vanishes.
fn eigenvalues_below(n: usize, lcm: &BigInt, num: &BigInt, shift: u32) -> Option<usize> {
    let scale = lcm << shift;
    let mut m: Vec<Vec<BigInt>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let base = &scale / BigInt::from(i + j + 1);
                    if i == j {
                        base - num * lcm
                    } else {
                        base
                    }
                })
                .collect()
        })
        .collect();
    // Bareiss: after step k, m[k][k] is the (k+1)-th leading minor
    let mut prev = BigInt::one();
    let mut prev_sign_negative = false;
    let mut changes = 0;
    for k in 0..n {
        if m[k][k].is_zero() {
            return None;
        }
        let negative = m[k][k].is_negative();
        if negative != prev_sign_negative {
            changes += 1;
        }
        prev_sign_negative = negative;
        for i in (k + 1)..n {
            for j in (k + 1)..n {
                let v = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
                m[i][j] = v;
            }
        }
        prev = m[k][k].clone();
    }
    Some(changes)
}

fn count_below(n: usize, lcm: &BigInt, num: &BigInt, shift: u32) -> usize {
    match eigenvalues_below(n, lcm, num, shift) {
        Some(c) => c,
        None => {
            // x hits an eigenvalue of a leading block; nudge it up by 2^-(shift+64)
            let nudged = (num << 64u32) + BigInt::one();
            count_below(n, lcm, &nudged, shift + 64)
        }
    }
}

fn dyadic_to_f64(num: &BigInt, shift: u32) -> f64 {
    let bits = num.bits();
    if bits > 900 {
        let excess = (bits - 900) as u32;
        let trimmed: BigInt = num >> excess;
        trimmed.to_f64().unwrap_or(f64::NAN) * 2f64.powi(excess as i32 - shift as i32)
    } else {
        num.to_f64().unwrap_or(f64::NAN) * 2f64.powi(-(shift as i32))
    }
}

/// Eigenvalues of `H_n`, descending, each bracketed in exact arithmetic to
/// relative width `rel_tol`. Orders up to [`EXACT_MAX_ORDER`].
pub fn exact_hilbert_eigenvalues(n: usize, rel_tol: f64) -> Result<Vec<f64>> {
    check_order(n)?;
    check_exact(n)?;
    if !(rel_tol > 0.0) {
        return Err(invalid("rel_tol must be positive"));
    }
    let lcm = (1..=(2 * n - 1)).fold(BigInt::one(), |acc, k| acc.lcm(&BigInt::from(k)));
    // all eigenvalues lie in (0, n]
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let mut shift = 0u32;
        let mut lo = BigInt::zero();
        let mut hi = BigInt::from(n);
        loop {
            if lo.is_positive() {
                let width = dyadic_to_f64(&(&hi - &lo), shift);
                if width <= rel_tol * dyadic_to_f64(&lo, shift) {
                    break;
                }
            }
            shift += 1;
            lo <<= 1u32;
            hi <<= 1u32;
            let mid = (&lo + &hi) >> 1u32;
            if count_below(n, &lcm, &mid, shift) >= k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let centre = &lo + &hi;
        out.push(dyadic_to_f64(&centre, shift + 1));
    }
    out.reverse();
    Ok(out)
}
