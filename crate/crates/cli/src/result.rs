use std::collections::BTreeMap;

use momentlab_core::analysis::{BoundReport, ConvergenceStudy, DecayComparison, ProportionalityTable};
use momentlab_core::Spectrum;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSpectrum {
    pub label: String,
    /// File stem of the emitted CSV.
    pub stem: String,
    /// Sweep level the spectrum belongs to, if any.
    pub level: Option<usize>,
    pub spectrum: Spectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFit {
    pub label: String,
    pub comparison: DecayComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBound {
    pub label: String,
    pub report: BoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStudy {
    pub label: String,
    pub study: ConvergenceStudy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRatios {
    pub label: String,
    pub table: ProportionalityTable,
}

/// Sampled scalar function, e.g. `rho(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub stem: String,
    pub x_name: String,
    pub y_name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub cache_key: String,
    pub spectra: Vec<LabeledSpectrum>,
    pub fits: Vec<LabeledFit>,
    pub bounds: Vec<LabeledBound>,
    pub studies: Vec<LabeledStudy>,
    pub diagnostics: Vec<LabeledRatios>,
    pub curves: Vec<Curve>,
    pub scalars: BTreeMap<String, f64>,
    /// Seconds per stage; not part of cached content.
    pub timings: BTreeMap<String, f64>,
    pub from_cache: bool,
    pub manifest: Vec<ManifestEntry>,
}

impl ExperimentResult {
    pub fn new(config: ExperimentConfig) -> Self {
        let cache_key = config.cache_key();
        Self {
            config,
            cache_key,
            spectra: Vec::new(),
            fits: Vec::new(),
            bounds: Vec::new(),
            studies: Vec::new(),
            diagnostics: Vec::new(),
            curves: Vec::new(),
            scalars: BTreeMap::new(),
            timings: BTreeMap::new(),
            from_cache: false,
            manifest: Vec::new(),
        }
    }

    pub fn spectrum(&self, label: &str) -> Option<&Spectrum> {
        self.spectra.iter().find(|s| s.label == label).map(|s| &s.spectrum)
    }

    pub fn spectrum_at(&self, label: &str, level: usize) -> Option<&Spectrum> {
        self.spectra
            .iter()
            .find(|s| s.label == label && s.level == Some(level))
            .map(|s| &s.spectrum)
    }

    pub fn fit(&self, label: &str) -> Option<&DecayComparison> {
        self.fits.iter().find(|f| f.label == label).map(|f| &f.comparison)
    }

    pub fn bound(&self, label: &str) -> Option<&BoundReport> {
        self.bounds.iter().find(|b| b.label == label).map(|b| &b.report)
    }

    pub fn study(&self, label: &str) -> Option<&ConvergenceStudy> {
        self.studies.iter().find(|s| s.label == label).map(|s| &s.study)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.get(name).copied()
    }

    /// Labels of swept spectra in first-seen order.
    pub fn sweep_labels(&self) -> Vec<&str> {
        let mut labels: Vec<&str> = Vec::new();
        for s in self.spectra.iter().filter(|s| s.level.is_some()) {
            if !labels.contains(&s.label.as_str()) {
                labels.push(&s.label);
            }
        }
        labels
    }
}
