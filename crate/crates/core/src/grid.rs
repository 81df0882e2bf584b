//! Uniform grids on `[0, 1]`, trapezoid weights and the weighting convention
//! used when turning an integral operator into a matrix.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform partition `t_i = (i - 1) / (n - 1)`, `i = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("grid needs at least 2 points, got {n}")));
        }
        let denom = (n - 1) as f64;
        let points = (0..n).map(|i| i as f64 / denom).collect();
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; a grid has at least two points.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.len() - 1) as f64
    }
}

/// Shorthand for [`Grid::new`].
pub fn make_grid(n: usize) -> Result<Grid> {
    Grid::new(n)
}

/// Composite trapezoid weights aligned with a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureWeights {
    weights: Vec<f64>,
}

impl QuadratureWeights {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Quadrature of sampled values.
    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        if samples.len() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for {} weights",
                samples.len(),
                self.weights.len()
            )));
        }
        Ok(self.weights.iter().zip(samples).map(|(w, x)| w * x).sum())
    }

    pub fn sqrt(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }
}

pub fn trapezoid_weights(grid: &Grid) -> QuadratureWeights {
    let n = grid.len();
    let h = grid.spacing();
    let mut weights = vec![h; n];
    weights[0] = 0.5 * h;
    weights[n - 1] = 0.5 * h;
    QuadratureWeights { weights }
}

/// How quadrature weights enter a discretized operator.
///
/// `PaperFaithful` puts the full trapezoid weight on each column and leaves
/// rows unweighted. `L2Consistent` uses square-root weights on both sides of
/// function-space variables so that matrix singular values approximate the
/// singular values of the operator between `L^2` / `l^2` spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    #[default]
    #[serde(alias = "paper")]
    PaperFaithful,
    #[serde(alias = "l2")]
    L2Consistent,
}

impl WeightingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightingMode::PaperFaithful => "paper",
            WeightingMode::L2Consistent => "l2",
        }
    }

    /// Column scaling applied to input samples.
    pub(crate) fn column_scale(self, weights: &QuadratureWeights) -> Vec<f64> {
        match self {
            WeightingMode::PaperFaithful => weights.weights().to_vec(),
            WeightingMode::L2Consistent => weights.sqrt(),
        }
    }
}

impl fmt::Display for WeightingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" | "paper_faithful" | "paper-faithful" => Ok(WeightingMode::PaperFaithful),
            "l2" | "l2_consistent" | "l2-consistent" => Ok(WeightingMode::L2Consistent),
            other => Err(invalid(format!("unknown weighting mode `{other}` (expected paper|l2)"))),
        }
    }
}
