//! Discretized integration, moment and multiplication operators on `[0, 1]`,
//! their singular value spectra, and diagnostics over those spectra.

pub mod analysis;
pub mod error;
pub mod grid;
pub mod hilbert;
pub mod kernel;
mod lanczos;
pub mod operator;
pub mod spectra;

pub use error::{Error, Result};
pub use grid::{make_grid, trapezoid_weights, Grid, QuadratureWeights, WeightingMode};
pub use operator::{build_bh, build_bm, build_composite_a, build_j, DiscreteOperator, Representation};
pub use spectra::{full_svd, lanczos_topk, numerical_rank, sym_eigs, LanczosConfig, Spectrum, SpectrumMethod};
