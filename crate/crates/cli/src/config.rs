//! Experiment configuration: presets per figure, a flat TOML file, and guards.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use momentlab_core::operator::DENSE_ENTRY_LIMIT;
use momentlab_core::WeightingMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "MOMENTLAB_OUT";
pub const DEFAULT_OUT: &str = "results";

/// Largest sizes accepted without `--full-scale`.
pub const DESK_MAX_GRID: usize = 4000;
pub const DESK_MAX_J_MAX: usize = 20_000;
pub const DESK_MAX_DIAGONAL: usize = 100_000;
pub const DESK_MAX_HILBERT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    /// Ad-hoc spectrum of one operator.
    Spectrum,
    /// Bound reports only.
    Check,
}

impl ExperimentId {
    pub const FIGURES: [ExperimentId; 7] = [
        Self::Fig1,
        Self::Fig2,
        Self::Fig3,
        Self::Fig4,
        Self::Fig5,
        Self::Fig6,
        Self::Fig7,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fig1 => "fig1",
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
            Self::Fig6 => "fig6",
            Self::Fig7 => "fig7",
            Self::Spectrum => "spectrum",
            Self::Check => "check",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Self::FIGURES
            .iter()
            .chain(&[Self::Spectrum, Self::Check])
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment id {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Lanczos for partial spectra, dense SVD when every value is wanted.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// Operators available to the `spectrum` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// Integration operator.
    J,
    /// Moment operator.
    Bh,
    /// Multiplication by `s^kappa`.
    Bm,
    /// Moment operator composed with integration.
    #[default]
    A,
    /// Multiplication composed with integration.
    BmJ,
    /// Fredholm kernel of `A*A`.
    AstarA,
    /// Truncated Hilbert matrix.
    Hilbert,
    /// Closed-form Cholesky factor of the Hilbert matrix.
    Cholesky,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    /// Input grid size `N` (Hilbert order for the `spectrum` subcommand).
    pub n: usize,
    /// Output grid size / moment count `M`.
    pub m: usize,
    pub kappa: f64,
    pub j_max: Vec<usize>,
    /// Sweep levels: `n` for fig5, `M` for fig6, `K` for fig7, `n` samples for fig4.
    pub levels: Vec<usize>,
    pub tracked: Vec<usize>,
    pub weighting: WeightingMode,
    pub engine: Engine,
    pub k: usize,
    pub seed: u64,
    pub operator: OperatorKind,
    pub full_scale: bool,
    /// Not part of the cache key.
    pub out_dir: PathBuf,
    /// Not part of the cache key.
    pub use_cache: bool,
}

impl ExperimentConfig {
    /// Desk-scale defaults, or the published sizes with `full_scale`.
    pub fn preset(id: ExperimentId, full_scale: bool) -> Self {
        let mut cfg = Self {
            id,
            n: 2000,
            m: 2000,
            kappa: 4.0,
            j_max: Vec::new(),
            levels: Vec::new(),
            tracked: Vec::new(),
            weighting: WeightingMode::PaperFaithful,
            engine: Engine::Auto,
            k: 20,
            seed: 0,
            operator: OperatorKind::A,
            full_scale,
            out_dir: PathBuf::from(DEFAULT_OUT),
            use_cache: true,
        };
        match id {
            ExperimentId::Fig1 => {
                if full_scale {
                    (cfg.n, cfg.m) = (10_000, 10_000);
                }
            }
            ExperimentId::Fig2 => {
                cfg.k = 50;
                if full_scale {
                    (cfg.n, cfg.m) = (10_000, 10_000);
                }
            }
            ExperimentId::Fig3 => {
                cfg.n = 1000;
                cfg.m = 1000;
                cfg.k = 40;
                cfg.j_max = vec![100, 1000, 10_000, 20_000];
                if full_scale {
                    cfg.n = 5000;
                    cfg.j_max = vec![100, 1000, 10_000, 200_000];
                }
            }
            ExperimentId::Fig4 => {
                // exponents of 10 for the sampled n
                cfg.levels = (0..=30).collect();
            }
            ExperimentId::Fig5 => {
                cfg.levels = vec![20, 40, 80, 160, 320];
                cfg.tracked = (1..=10).collect();
            }
            ExperimentId::Fig6 => {
                cfg.levels = vec![500, 1000, 2000, 4000];
                cfg.tracked = vec![1, 10, 20];
                if full_scale {
                    cfg.n = 5000;
                    cfg.levels = vec![500, 1000, 2000, 5000, 10_000];
                }
            }
            ExperimentId::Fig7 => {
                cfg.levels = vec![100, 400, 1600, 6400];
                cfg.tracked = vec![1, 2, 10, 50];
            }
            ExperimentId::Spectrum => {
                cfg.n = 500;
                cfg.m = 500;
                cfg.j_max = vec![1000];
            }
            ExperimentId::Check => {
                cfg.n = 1000;
                cfg.m = 1000;
                cfg.levels = vec![8, 16, 32, 64, 128, 256];
            }
        }
        cfg
    }

    /// Refuses configurations that are malformed or, without `full_scale`,
    /// beyond desk scale. The error names the violated guard.
    pub fn validate(&self) -> CliResult<()> {
        let guard = |name: &str, detail: String| Err(CliError::Guard { guard: name.to_string(), detail });
        if self.n < 2 || self.m < 2 {
            return guard("min_size", format!("N = {} and M = {} must both be at least 2", self.n, self.m));
        }
        if self.k == 0 {
            return guard("min_size", "k must be at least 1".into());
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return guard("kappa", format!("kappa must be positive, got {}", self.kappa));
        }
        if self.j_max.iter().any(|&j| j == 0) {
            return guard("min_size", "j_max values must be at least 1".into());
        }
        if self.tracked.iter().any(|&i| i == 0) {
            return guard("min_size", "tracked indices are 1-based".into());
        }
        let needs_levels = matches!(
            self.id,
            ExperimentId::Fig4 | ExperimentId::Fig5 | ExperimentId::Fig6 | ExperimentId::Fig7
        );
        if needs_levels && self.levels.len() < 2 {
            return guard("levels", format!("{} needs at least two sweep levels", self.id));
        }
        if self.id == ExperimentId::Fig3 && self.j_max.is_empty() {
            return guard("levels", "fig3 needs at least one j_max".into());
        }
        if !ascending(&self.levels) || !ascending(&self.j_max) {
            return guard("levels", "sweep levels must be strictly ascending".into());
        }
        if self.id != ExperimentId::Fig4 && self.levels.iter().any(|&l| l < 2) {
            return guard("min_size", "sweep levels must be at least 2".into());
        }
        if self.engine == Engine::Dense {
            for (rows, cols) in self.dense_shapes() {
                if rows.saturating_mul(cols) > DENSE_ENTRY_LIMIT {
                    return guard(
                        "dense_threshold",
                        format!("{rows}x{cols} exceeds {DENSE_ENTRY_LIMIT} dense entries; use --engine lanczos"),
                    );
                }
            }
        }
        if !self.full_scale {
            let grid = self.grid_sizes().into_iter().max().unwrap_or(0);
            if grid > DESK_MAX_GRID {
                return guard("full_scale", format!("grid size {grid} exceeds desk limit {DESK_MAX_GRID}"));
            }
            if let Some(&j) = self.j_max.iter().max() {
                if j > DESK_MAX_J_MAX {
                    return guard("full_scale", format!("j_max {j} exceeds desk limit {DESK_MAX_J_MAX}"));
                }
            }
            if self.id == ExperimentId::Fig7 {
                if let Some(&k) = self.levels.last() {
                    if k > DESK_MAX_DIAGONAL {
                        return guard("full_scale", format!("K = {k} exceeds desk limit {DESK_MAX_DIAGONAL}"));
                    }
                }
            }
            let hilbert = match self.id {
                ExperimentId::Fig5 | ExperimentId::Check => self.levels.last().copied().unwrap_or(0),
                ExperimentId::Spectrum if matches!(self.operator, OperatorKind::Hilbert | OperatorKind::Cholesky) => {
                    self.n
                }
                _ => 0,
            };
            if hilbert > DESK_MAX_HILBERT {
                return guard("full_scale", format!("Hilbert order {hilbert} exceeds desk limit {DESK_MAX_HILBERT}"));
            }
        }
        if self.id == ExperimentId::Fig4 && self.levels.iter().any(|&e| e > 300) {
            return guard("levels", "fig4 levels are decimal exponents up to 300".into());
        }
        Ok(())
    }

    fn grid_sizes(&self) -> Vec<usize> {
        match self.id {
            ExperimentId::Fig4 | ExperimentId::Fig5 | ExperimentId::Fig7 => Vec::new(),
            ExperimentId::Fig6 => {
                let mut v = vec![self.n];
                v.extend(&self.levels);
                v
            }
            ExperimentId::Spectrum if matches!(self.operator, OperatorKind::Hilbert | OperatorKind::Cholesky) => {
                Vec::new()
            }
            _ => vec![self.n, self.m],
        }
    }

    fn dense_shapes(&self) -> Vec<(usize, usize)> {
        match self.id {
            ExperimentId::Fig6 => self.levels.iter().map(|&m| (m, self.n)).collect(),
            ExperimentId::Fig4 | ExperimentId::Fig5 | ExperimentId::Fig7 => Vec::new(),
            _ => vec![(self.m, self.n), (self.n, self.n)],
        }
    }

    /// Content hash of every field that changes results; the output
    /// directory and cache toggle are excluded.
    pub fn cache_key(&self) -> String {
        #[derive(Serialize)]
        struct Semantic<'a> {
            id: ExperimentId,
            n: usize,
            m: usize,
            kappa: f64,
            j_max: &'a [usize],
            levels: &'a [usize],
            tracked: &'a [usize],
            weighting: WeightingMode,
            engine: Engine,
            k: usize,
            seed: u64,
            operator: OperatorKind,
            full_scale: bool,
            version: &'static str,
        }
        let semantic = Semantic {
            id: self.id,
            n: self.n,
            m: self.m,
            kappa: self.kappa,
            j_max: &self.j_max,
            levels: &self.levels,
            tracked: &self.tracked,
            weighting: self.weighting,
            engine: self.engine,
            k: self.k,
            seed: self.seed,
            operator: self.operator,
            full_scale: self.full_scale,
            version: env!("CARGO_PKG_VERSION"),
        };
        let bytes = serde_json::to_vec(&semantic).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Directory receiving this experiment's files.
    pub fn experiment_dir(&self) -> PathBuf {
        self.out_dir.join(self.id.as_str())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.out_dir.join(".cache")
    }
}

fn ascending(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Flat key-value file; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub kappa: Option<f64>,
    pub j_max: Option<Vec<usize>>,
    pub levels: Option<Vec<usize>>,
    pub tracked: Option<Vec<usize>>,
    pub weighting: Option<WeightingMode>,
    pub engine: Option<Engine>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub operator: Option<OperatorKind>,
    pub out: Option<PathBuf>,
    pub cache: Option<bool>,
    pub full_scale: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Overlays the file onto `cfg`.
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$target = v.clone(); })*
            };
        }
        set!(n => n, m => m, kappa => kappa, j_max => j_max, levels => levels, tracked => tracked,
             weighting => weighting, engine => engine, k => k, seed => seed, operator => operator,
             out => out_dir, cache => use_cache, full_scale => full_scale);
    }
}
