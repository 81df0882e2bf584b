//! Experiment runner for momentlab: figure reproductions, ad-hoc spectra and
//! bound checks, with cached results, CSV/JSON output and gnuplot scripts.

pub mod cache;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod result;

pub use cache::run_and_emit;
pub use config::{Engine, ExperimentConfig, ExperimentId, OperatorKind};
pub use error::{CliError, CliResult};
pub use experiments::run_experiment;
pub use result::ExperimentResult;
