//! Result cache keyed by configuration hash, and the output-directory lock.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::sha256_hex;
use crate::result::ExperimentResult;

pub const LOCK_FILE: &str = ".lock";

fn entry_paths(cfg: &ExperimentConfig) -> (PathBuf, PathBuf) {
    let key = cfg.cache_key();
    let dir = cfg.cache_dir();
    (dir.join(format!("{key}.json")), dir.join(format!("{key}.sha256")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheLookup {
    Hit,
    Miss,
    /// Entry present but unreadable or failing its hash; recomputed.
    Invalid(String),
}

/// Cached result for `cfg`, if a valid entry exists. Invalid entries are
/// reported so the caller can warn and recompute.
pub fn load(cfg: &ExperimentConfig) -> (Option<ExperimentResult>, CacheLookup) {
    let (data, digest) = entry_paths(cfg);
    let Ok(bytes) = fs::read(&data) else {
        return (None, CacheLookup::Miss);
    };
    let expected = fs::read_to_string(&digest).unwrap_or_default();
    let found = sha256_hex(&bytes);
    if expected.trim() != found {
        return (None, CacheLookup::Invalid(format!("hash mismatch for {}", data.display())));
    }
    match serde_json::from_slice::<ExperimentResult>(&bytes) {
        Ok(mut res) if res.cache_key == cfg.cache_key() => {
            res.config.out_dir = cfg.out_dir.clone();
            res.config.use_cache = cfg.use_cache;
            res.from_cache = true;
            (Some(res), CacheLookup::Hit)
        }
        Ok(_) => (None, CacheLookup::Invalid("cache key mismatch".into())),
        Err(e) => (None, CacheLookup::Invalid(format!("unreadable entry: {e}"))),
    }
}

pub fn store(res: &ExperimentResult) -> CliResult<()> {
    let (data, digest) = entry_paths(&res.config);
    let dir = res.config.cache_dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut stored = res.clone();
    stored.manifest.clear();
    stored.timings.clear();
    let bytes = serde_json::to_vec(&stored)?;
    fs::write(&data, &bytes).map_err(|e| CliError::io(&data, e))?;
    fs::write(&digest, sha256_hex(&bytes)).map_err(|e| CliError::io(&digest, e))?;
    Ok(())
}

/// Removes `<out>/.cache`; returns whether anything was removed.
pub fn clean(out_dir: &Path) -> CliResult<bool> {
    let dir = out_dir.join(".cache");
    match fs::remove_dir_all(&dir) {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
        Err(e) => Err(CliError::io(&dir, e)),
    }
}

/// Exclusive lock on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(out_dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
        let path = out_dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(out_dir.to_path_buf())),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Cached or freshly computed result, with files emitted and verified.
pub fn run_and_emit(cfg: &ExperimentConfig) -> CliResult<ExperimentResult> {
    cfg.validate()?;
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    let cached = if cfg.use_cache {
        match load(cfg) {
            (Some(res), _) => Some(res),
            (None, CacheLookup::Invalid(why)) => {
                warn!("ignoring cache entry for {}: {why}; recomputing", cfg.id);
                None
            }
            (None, _) => None,
        }
    } else {
        None
    };
    let mut res = match cached {
        Some(res) => res,
        None => {
            let res = crate::experiments::run_experiment(cfg)?;
            if cfg.use_cache {
                store(&res)?;
            }
            res
        }
    };
    crate::output::emit_all(&mut res)?;
    Ok(res)
}
