//! CSV, JSON, plot script and manifest emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use momentlab_core::analysis::{BoundReport, ConvergenceStudy, DecayFit, DecayModel, ProportionalityTable};
use momentlab_core::Spectrum;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExperimentId};
use crate::error::{CliError, CliResult};
use crate::result::{ExperimentResult, ManifestEntry};

pub const REPORT_FILE: &str = "report.json";
pub const PLOT_FILE: &str = "plot.gp";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SWEEP_FILE: &str = "sweep.csv";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn spectrum_csv(s: &Spectrum) -> String {
    let mut out = String::from("index,sigma\n");
    for (i, v) in s.values().iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, format_value(*v));
    }
    out
}

pub fn emit_spectrum_csv(s: &Spectrum, path: &Path) -> CliResult<()> {
    write_file(path, &spectrum_csv(s))
}

/// Values of an `index,sigma` file in row order.
pub fn parse_spectrum_csv(text: &str) -> CliResult<Vec<f64>> {
    let mut lines = text.lines();
    if lines.next() != Some("index,sigma") {
        return Err(CliError::Config("missing index,sigma header".into()));
    }
    lines
        .enumerate()
        .map(|(row, line)| {
            let (index, value) = line
                .split_once(',')
                .ok_or_else(|| CliError::Config(format!("row {}: expected two fields", row + 1)))?;
            if index.parse::<usize>().ok() != Some(row + 1) {
                return Err(CliError::Config(format!("row {}: bad index {index:?}", row + 1)));
            }
            value
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("row {}: {e}", row + 1)))
        })
        .collect()
}

fn sweep_csv<'a>(rows: impl Iterator<Item = (usize, &'a Spectrum)>) -> String {
    let mut out = String::from("level,index,sigma\n");
    for (level, s) in rows {
        for (i, v) in s.values().iter().enumerate() {
            let _ = writeln!(out, "{level},{},{}", i + 1, format_value(*v));
        }
    }
    out
}

#[derive(Serialize)]
struct FitRecord<'a> {
    label: &'a str,
    model: DecayModel,
    #[serde(rename = "C")]
    amplitude: f64,
    rate: f64,
    r2: f64,
    rss: f64,
    range: [usize; 2],
    preferred: bool,
}

impl<'a> FitRecord<'a> {
    fn new(label: &'a str, fit: &DecayFit, preferred: Option<DecayModel>) -> Self {
        Self {
            label,
            model: fit.model,
            amplitude: fit.amplitude,
            rate: fit.rate,
            r2: fit.r_squared,
            rss: fit.residual_sum_squares,
            range: [fit.range.lo, fit.range.hi],
            preferred: preferred == Some(fit.model),
        }
    }
}

#[derive(Serialize)]
struct SpectrumRecord<'a> {
    label: &'a str,
    file: String,
    level: Option<usize>,
    method: momentlab_core::SpectrumMethod,
    rows: usize,
    cols: usize,
    requested_k: usize,
    length: usize,
    tolerance: f64,
    numerical_rank: usize,
    converged: usize,
    metadata: &'a BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Report<'a> {
    experiment: ExperimentId,
    config: &'a ExperimentConfig,
    cache_key: &'a str,
    from_cache: bool,
    spectra: Vec<SpectrumRecord<'a>>,
    fits: Vec<FitRecord<'a>>,
    bounds: BTreeMap<&'a str, &'a BoundReport>,
    studies: BTreeMap<&'a str, &'a ConvergenceStudy>,
    diagnostics: BTreeMap<&'a str, &'a ProportionalityTable>,
    scalars: &'a BTreeMap<String, f64>,
    timings: &'a BTreeMap<String, f64>,
}

pub fn report_json(res: &ExperimentResult) -> CliResult<String> {
    let report = Report {
        experiment: res.config.id,
        config: &res.config,
        cache_key: &res.cache_key,
        from_cache: res.from_cache,
        spectra: res
            .spectra
            .iter()
            .map(|l| SpectrumRecord {
                label: &l.label,
                file: format!("{}.csv", l.stem),
                level: l.level,
                method: l.spectrum.method(),
                rows: l.spectrum.rows(),
                cols: l.spectrum.cols(),
                requested_k: l.spectrum.requested_k(),
                length: l.spectrum.len(),
                tolerance: l.spectrum.tolerance(),
                numerical_rank: l.spectrum.numerical_rank(),
                converged: l.spectrum.converged().iter().filter(|c| **c).count(),
                metadata: l.spectrum.metadata(),
            })
            .collect(),
        fits: res
            .fits
            .iter()
            .flat_map(|f| {
                let c = &f.comparison;
                [
                    FitRecord::new(&f.label, &c.polynomial, c.preferred),
                    FitRecord::new(&f.label, &c.exponential, c.preferred),
                ]
            })
            .collect(),
        bounds: res.bounds.iter().map(|b| (b.label.as_str(), &b.report)).collect(),
        studies: res.studies.iter().map(|s| (s.label.as_str(), &s.study)).collect(),
        diagnostics: res.diagnostics.iter().map(|d| (d.label.as_str(), &d.table)).collect(),
        scalars: &res.scalars,
        timings: &res.timings,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    Ok(text)
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

/// Gnuplot script reading the emitted CSVs and writing `plot.png`.
pub fn plot_script(res: &ExperimentResult) -> String {
    let id = res.config.id;
    let mut out = String::new();
    let _ = writeln!(out, "# {id}: run with `gnuplot {PLOT_FILE}` inside this directory");
    out.push_str("set datafile separator ','\n");
    out.push_str("set terminal pngcairo size 900,650\n");
    out.push_str("set output 'plot.png'\n");
    out.push_str("set key outside right\n");
    out.push_str("set grid\n");
    let mut series: Vec<String> = Vec::new();
    let single = |stem: &str, title: &str, series: &mut Vec<String>| {
        series.push(format!(
            "{} using 1:2 skip 1 with linespoints title {}",
            quote(&format!("{stem}.csv")),
            quote(title)
        ));
    };
    match id {
        ExperimentId::Fig4 => {
            out.push_str("set logscale x\nset format x '10^{%L}'\nset xlabel 'n'\nset ylabel 'rho(n)'\n");
            for c in &res.curves {
                series.push(format!(
                    "{} using 1:2 skip 1 with lines title {}",
                    quote(&format!("{}.csv", c.stem)),
                    quote(&c.y_name)
                ));
            }
        }
        ExperimentId::Fig2 => {
            out.push_str("set logscale xy\nset xlabel 'i'\nset ylabel 'sigma_i'\n");
            for l in &res.spectra {
                single(&l.stem, &l.label, &mut series);
            }
            series.push("1/x with lines dashtype 2 title 'i^{-1}'".into());
        }
        ExperimentId::Fig5 | ExperimentId::Fig6 | ExperimentId::Fig7 => {
            let xlabel = match id {
                ExperimentId::Fig5 => "n",
                ExperimentId::Fig6 => "M",
                _ => "K",
            };
            if id == ExperimentId::Fig7 {
                out.push_str("set logscale x\n");
            } else {
                out.push_str("set logscale xy\n");
            }
            let _ = writeln!(out, "set xlabel '{xlabel}'\nset ylabel 'sigma_i'");
            let indices: Vec<usize> = res
                .studies
                .first()
                .map(|s| s.study.tracked.iter().map(|t| t.index).collect())
                .unwrap_or_default();
            for i in indices {
                series.push(format!(
                    "{} using ($2=={i} ? $1 : 1/0):3 skip 1 with linespoints title 'i = {i}'",
                    quote(SWEEP_FILE)
                ));
            }
            if id == ExperimentId::Fig5 {
                series.push("pi with lines dashtype 2 title 'pi'".into());
            }
        }
        _ => {
            out.push_str("set logscale y\nset format y '10^{%L}'\nset xlabel 'i'\nset ylabel 'sigma_i'\n");
            for l in &res.spectra {
                let title = match l.level {
                    Some(level) if id == ExperimentId::Fig3 => format!("j_max = {level}"),
                    _ => l.label.clone(),
                };
                single(&l.stem, &title, &mut series);
            }
            if id == ExperimentId::Fig1 {
                series.push("exp(-x) with lines dashtype 2 title 'exp(-i)'".into());
                series.push("1/x with lines dashtype 3 title 'i^{-1}'".into());
            }
            if id == ExperimentId::Fig3 {
                series.push("x**(-3) with lines dashtype 2 title 'i^{-3}'".into());
            }
        }
    }
    if series.is_empty() {
        out.push_str("# no data series\n");
    } else {
        let _ = writeln!(out, "plot {}", series.join(", \\\n     "));
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes every file for `res` into its experiment directory, then the
/// manifest, then re-reads and verifies every hash.
pub fn emit_all(res: &mut ExperimentResult) -> CliResult<PathBuf> {
    let dir = res.config.experiment_dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut files: Vec<(String, String)> = Vec::new();
    for l in &res.spectra {
        files.push((format!("{}.csv", l.stem), spectrum_csv(&l.spectrum)));
    }
    for label in res.sweep_labels() {
        let rows = res
            .spectra
            .iter()
            .filter(|s| s.label == label)
            .filter_map(|s| s.level.map(|lv| (lv, &s.spectrum)));
        let name = if res.sweep_labels().len() == 1 {
            SWEEP_FILE.to_string()
        } else {
            let safe: String = label.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
            format!("sweep_{safe}.csv")
        };
        files.push((name, sweep_csv(rows)));
    }
    for c in &res.curves {
        let mut text = format!("{},{}\n", c.x_name, c.y_name);
        for (x, y) in &c.points {
            let _ = writeln!(text, "{},{}", format_value(*x), format_value(*y));
        }
        files.push((format!("{}.csv", c.stem), text));
    }
    if !res.spectra.is_empty() || !res.curves.is_empty() {
        files.push((PLOT_FILE.to_string(), plot_script(res)));
    }
    res.manifest.clear();
    for (name, contents) in &files {
        write_file(&dir.join(name), contents)?;
        res.manifest.push(ManifestEntry {
            path: name.clone(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len() as u64,
        });
    }
    // the report lists the data files; the manifest then covers the report too
    let report = report_json(res)?;
    write_file(&dir.join(REPORT_FILE), &report)?;
    res.manifest.push(ManifestEntry {
        path: REPORT_FILE.to_string(),
        sha256: sha256_hex(report.as_bytes()),
        bytes: report.len() as u64,
    });
    let manifest = serde_json::to_string_pretty(&res.manifest)? + "\n";
    write_file(&dir.join(MANIFEST_FILE), &manifest)?;
    verify_manifest(&dir)?;
    Ok(dir)
}

/// Re-hashes every file listed in `dir/manifest.json`.
pub fn verify_manifest(dir: &Path) -> CliResult<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    for e in &entries {
        let file = dir.join(&e.path);
        let bytes = fs::read(&file).map_err(|err| CliError::io(&file, err))?;
        let found = sha256_hex(&bytes);
        if found != e.sha256 {
            return Err(CliError::Manifest {
                path: file,
                expected: e.sha256.clone(),
                found,
            });
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use momentlab_core::SpectrumMethod;

    fn spectrum(values: Vec<f64>) -> Spectrum {
        let n = values.len();
        Spectrum::new(values, SpectrumMethod::DenseSvd, n.max(1), n.max(1), n, 0.0).unwrap()
    }

    #[test]
    fn csv_layout() {
        let text = spectrum_csv(&spectrum(vec![1.0, 0.5]));
        assert_eq!(text, "index,sigma\n1,1.0000000000000000e0\n2,5.0000000000000000e-1\n");
        assert_eq!(spectrum_csv(&spectrum(vec![])), "index,sigma\n");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let values = vec![std::f64::consts::PI, 0.1 + 0.2, 1e-300, 5e-324, 0.0];
        let parsed = parse_spectrum_csv(&spectrum_csv(&spectrum(values.clone()))).unwrap();
        assert_eq!(parsed.len(), values.len());
        for (a, b) in parsed.iter().zip(&values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(parse_spectrum_csv("x,y\n").is_err());
        assert!(parse_spectrum_csv("index,sigma\n2,1.0\n").is_err());
    }
}
