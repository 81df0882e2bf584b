//! Decay fits, singular value bounds and convergence studies over spectra.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator::multiplier;
use crate::spectra::Spectrum;

/// Inclusive 1-based index interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub lo: usize,
    pub hi: usize,
}

impl IndexRange {
    pub fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> usize {
        (self.hi + 1).saturating_sub(self.lo)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> {
        self.lo..=self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `sigma_i = C i^(-p)`
    Polynomial,
    /// `sigma_i = C exp(-c i)`
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub amplitude: f64,
    pub rate: f64,
    /// Residual sum of squares of `ln sigma_i`.
    pub residual_sum_squares: f64,
    pub r_squared: f64,
    pub range: IndexRange,
}

impl DecayFit {
    pub fn predict(&self, i: usize) -> f64 {
        let x = i as f64;
        match self.model {
            DecayModel::Polynomial => self.amplitude * x.powf(-self.rate),
            DecayModel::Exponential => self.amplitude * (-self.rate * x).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayComparison {
    pub polynomial: DecayFit,
    pub exponential: DecayFit,
    /// `None` when the two `r^2` values are within [`R2_TIE_MARGIN`].
    pub preferred: Option<DecayModel>,
}

pub const R2_TIE_MARGIN: f64 = 1e-6;
pub const MIN_FIT_POINTS: usize = 5;

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let sst: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let r2 = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else if ssr == 0.0 {
        1.0
    } else {
        0.0
    };
    (slope, intercept, ssr, r2)
}

/// Fits `ln sigma_i` against `i` (exponential) and `ln i` (polynomial) on
/// `range`, preferring the model with the larger `r^2`.
pub fn fit_decay(s: &Spectrum, range: IndexRange) -> Result<DecayComparison> {
    if range.lo == 0 || range.hi < range.lo || range.hi > s.len() {
        return Err(invalid(format!(
            "fit range [{}, {}] not inside spectrum of length {}",
            range.lo,
            range.hi,
            s.len()
        )));
    }
    if range.len() < MIN_FIT_POINTS {
        return Err(invalid(format!(
            "fit range has {} points, need at least {MIN_FIT_POINTS}",
            range.len()
        )));
    }
    let mut logs = Vec::with_capacity(range.len());
    for i in range.indices() {
        let v = s.values()[i - 1];
        if !(v > 0.0) {
            return Err(Error::NonPositive { index: i, value: v });
        }
        logs.push(v.ln());
    }
    let idx: Vec<f64> = range.indices().map(|i| i as f64).collect();
    let log_idx: Vec<f64> = idx.iter().map(|i| i.ln()).collect();

    let (slope, intercept, ssr, r2) = least_squares(&idx, &logs);
    let exponential = DecayFit {
        model: DecayModel::Exponential,
        amplitude: intercept.exp(),
        rate: -slope,
        residual_sum_squares: ssr,
        r_squared: r2,
        range,
    };
    let (slope, intercept, ssr, r2) = least_squares(&log_idx, &logs);
    let polynomial = DecayFit {
        model: DecayModel::Polynomial,
        amplitude: intercept.exp(),
        rate: -slope,
        residual_sum_squares: ssr,
        r_squared: r2,
        range,
    };
    let diff = exponential.r_squared - polynomial.r_squared;
    let preferred = if diff.abs() <= R2_TIE_MARGIN {
        None
    } else if diff > 0.0 {
        Some(DecayModel::Exponential)
    } else {
        Some(DecayModel::Polynomial)
    };
    Ok(DecayComparison {
        polynomial,
        exponential,
        preferred,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    /// `lhs` sits below the roundoff floor of its spectrum and was not judged.
    pub below_floor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub records: Vec<BoundRecord>,
    pub overall_satisfied: bool,
    pub n: usize,
    pub checked: usize,
    pub floor: f64,
}

impl BoundReport {
    fn from_records(bound_name: &str, n: usize, floor: f64, records: Vec<BoundRecord>) -> Self {
        let overall_satisfied = records.iter().all(|r| r.satisfied);
        let checked = records.iter().filter(|r| !r.below_floor).count();
        Self {
            bound_name: bound_name.to_string(),
            records,
            overall_satisfied,
            n,
            checked,
            floor,
        }
    }

    pub fn violations(&self) -> impl Iterator<Item = &BoundRecord> {
        self.records.iter().filter(|r| !r.satisfied)
    }
}

/// `exp(pi^2 / (2 ln(8n - 4)))`, accepting real `n >= 1` so that orders
/// beyond `u64` can be sampled.
pub fn beckermann_rho(n: f64) -> Result<f64> {
    if !(n.is_finite() && n >= 1.0) {
        return Err(invalid(format!("beckermann_rho needs n >= 1, got {n}")));
    }
    Ok((PI * PI / (2.0 * (8.0 * n - 4.0).ln())).exp())
}

/// `sigma_{i+1}(H_n) <= 4 rho(n)^(-2i) sigma_1(H_n)` for `1 <= i <= n - 1`.
pub fn check_beckermann(s: &Spectrum, n: usize) -> Result<BoundReport> {
    if n == 0 || s.rows() != n || s.cols() != n || s.len() != n {
        return Err(invalid(format!(
            "spectrum is {}x{} with {} values, expected the full spectrum of H_{n}",
            s.rows(),
            s.cols(),
            s.len()
        )));
    }
    let rho = beckermann_rho(n as f64)?;
    let sigma1 = s.values()[0];
    let floor = s.rank_floor();
    let records = (1..n)
        .map(|i| {
            let lhs = s.values()[i];
            let rhs = 4.0 * rho.powi(-2 * i as i32) * sigma1;
            let below_floor = lhs <= floor;
            BoundRecord {
                index: i,
                lhs,
                rhs,
                satisfied: below_floor || lhs <= rhs,
                below_floor,
            }
        })
        .collect();
    Ok(BoundReport::from_records("beckermann", n, floor, records))
}

/// `sigma_{2i}(AB) <= sigma_i(A) sigma_i(B)` for every `i` with all three
/// values available. Values of `AB` below its roundoff floor are not judged.
pub fn check_product_inequality(sa: &Spectrum, sb: &Spectrum, sab: &Spectrum) -> Result<BoundReport> {
    if sa.cols() != sb.rows() || sab.rows() != sa.rows() || sab.cols() != sb.cols() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, B is {}x{}, AB is {}x{}",
            sa.rows(),
            sa.cols(),
            sb.rows(),
            sb.cols(),
            sab.rows(),
            sab.cols()
        )));
    }
    let floor = sab.rank_floor();
    let last = (sab.len() / 2).min(sa.len()).min(sb.len());
    let records = (1..=last)
        .map(|i| {
            let lhs = sab.values()[2 * i - 1];
            let rhs = sa.values()[i - 1] * sb.values()[i - 1];
            let below_floor = lhs <= floor;
            BoundRecord {
                index: i,
                lhs,
                rhs,
                satisfied: below_floor || lhs <= rhs,
                below_floor,
            }
        })
        .collect();
    Ok(BoundReport::from_records("product", sab.rows().max(sab.cols()), floor, records))
}

pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedIndex {
    pub index: usize,
    pub values: Vec<f64>,
    /// Non-decreasing up to a relative slack of [`MONOTONE_SLACK`].
    pub monotone: bool,
    pub limit_candidate: f64,
    /// `|v_last - v_prev| / |v_prev|`.
    pub relative_last_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub levels: Vec<usize>,
    pub tracked: Vec<TrackedIndex>,
}

impl ConvergenceStudy {
    pub fn all_monotone(&self) -> bool {
        self.tracked.iter().all(|t| t.monotone)
    }

    pub fn index(&self, index: usize) -> Option<&TrackedIndex> {
        self.tracked.iter().find(|t| t.index == index)
    }
}

pub fn convergence_study(levels: &[usize], spectra: &[Spectrum], tracked: &[usize]) -> Result<ConvergenceStudy> {
    if levels.len() < 2 {
        return Err(invalid("a convergence study needs at least two levels"));
    }
    if spectra.len() != levels.len() {
        return Err(invalid(format!("{} levels but {} spectra", levels.len(), spectra.len())));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("levels must be strictly ascending"));
    }
    let mut out = Vec::with_capacity(tracked.len());
    for &index in tracked {
        let mut values = Vec::with_capacity(levels.len());
        for (level, s) in levels.iter().zip(spectra) {
            let v = s.sigma(index).ok_or_else(|| Error::IndexNotCovered {
                index,
                reason: format!("level {level} has only {} values", s.len()),
            })?;
            values.push(v);
        }
        let monotone = values
            .windows(2)
            .all(|w| w[1] >= w[0] - MONOTONE_SLACK * w[0].abs());
        let last = values[values.len() - 1];
        let prev = values[values.len() - 2];
        let relative_last_step = if prev != 0.0 {
            (last - prev).abs() / prev.abs()
        } else if last == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        out.push(TrackedIndex {
            index,
            values,
            monotone,
            limit_candidate: last,
            relative_last_step,
        });
    }
    Ok(ConvergenceStudy {
        levels: levels.to_vec(),
        tracked: out,
    })
}

/// `sigma_i(M_K) = ((K - i) / (K - 1))^kappa`, the `i`-th largest of
/// `s_k^kappa` on the `K`-point grid.
pub fn multiplication_singular_value(kappa: f64, k_points: usize, i: usize) -> Result<f64> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(invalid(format!("kappa must be positive, got {kappa}")));
    }
    if k_points < 2 {
        return Err(invalid(format!("K must be at least 2, got {k_points}")));
    }
    if i == 0 || i > k_points {
        return Err(invalid(format!("index {i} outside 1..={k_points}")));
    }
    let s = (k_points - i) as f64 / (k_points - 1) as f64;
    Ok(multiplier(s, kappa))
}

/// Whether `sigma_i(M_K) > m_max - epsilon` with `m_max = 1` for `s^kappa`.
pub fn multiplication_limit_check(kappa: f64, k_points: usize, i: usize, epsilon: f64) -> Result<bool> {
    Ok(multiplication_singular_value(kappa, k_points, i)? > 1.0 - epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub index: usize,
    pub ratio: f64,
}

/// `sigma_i(C) / (sigma_i(F1) sigma_i(F2))` per index; diagnostic only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionalityTable {
    pub rows: Vec<RatioRow>,
    /// Indices skipped because the denominator vanished.
    pub excluded: Vec<usize>,
    pub min: f64,
    pub max: f64,
    pub geometric_mean: f64,
}

pub fn proportionality_diagnostic(
    composite: &Spectrum,
    factor1: &Spectrum,
    factor2: &Spectrum,
    range: IndexRange,
) -> Result<ProportionalityTable> {
    let covered = composite.len().min(factor1.len()).min(factor2.len());
    if range.is_empty() || range.lo == 0 || range.hi > covered {
        return Err(invalid(format!(
            "range [{}, {}] not covered by all three spectra (common length {covered})",
            range.lo, range.hi
        )));
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for i in range.indices() {
        let denom = factor1.values()[i - 1] * factor2.values()[i - 1];
        if denom == 0.0 {
            excluded.push(i);
        } else {
            rows.push(RatioRow {
                index: i,
                ratio: composite.values()[i - 1] / denom,
            });
        }
    }
    if rows.is_empty() {
        return Err(invalid("every index in the range has a zero denominator"));
    }
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let geometric_mean = if min > 0.0 {
        (rows.iter().map(|r| r.ratio.ln()).sum::<f64>() / rows.len() as f64).exp()
    } else {
        f64::NAN
    };
    Ok(ProportionalityTable {
        rows,
        excluded,
        min,
        max,
        geometric_mean,
    })
}
