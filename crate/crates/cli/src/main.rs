use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use momentlab_cli::cache;
use momentlab_cli::config::{ConfigFile, DEFAULT_OUT, OUT_ENV};
use momentlab_cli::{run_and_emit, CliError, CliResult, Engine, ExperimentConfig, ExperimentId, OperatorKind};
use momentlab_core::WeightingMode;

#[derive(Parser)]
#[command(name = "momentlab", version, about = "Singular value spectra of moment, integration and multiplication operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalFlags,
}

#[derive(Args)]
struct GlobalFlags {
    /// Output directory (default: $MOMENTLAB_OUT, then the config file, then ./results).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_weighting)]
    weighting: Option<WeightingMode>,
    /// Accept the published problem sizes.
    #[arg(long, global = true)]
    full_scale: bool,
    /// Always recompute and do not write the cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Flat TOML file with parameter overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Args, Default)]
struct Params {
    /// Input grid size N (Hilbert order for hilbert/cholesky).
    #[arg(long)]
    n: Option<usize>,
    /// Moment count / output grid size M.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    j_max: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    tracked: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    engine: Option<Engine>,
}

#[derive(Subcommand)]
enum Command {
    /// Spectra of J, B^H and their composite with decay fits.
    Fig1(Params),
    /// Multiplication composed with integration.
    Fig2(Params),
    /// Eigenvalues of the A*A kernel across truncation indices.
    Fig3(Params),
    /// Beckermann rate term over log-spaced n (levels are decimal exponents).
    Fig4(Params),
    /// Hilbert matrix spectra versus truncation order.
    Fig5(Params),
    /// Composite spectrum versus moment count.
    Fig6(Params),
    /// Multiplication operator spectra versus grid size.
    Fig7(Params),
    /// Spectrum of a single operator.
    Spectrum {
        #[arg(long, value_enum, default_value_t = OperatorKind::A)]
        operator: OperatorKind,
        #[command(flatten)]
        params: Params,
    },
    /// Beckermann and product-inequality bound reports.
    Check(Params),
    /// Remove cached results under the output directory.
    CleanCache,
}

fn parse_weighting(s: &str) -> Result<WeightingMode, String> {
    s.parse().map_err(|e: momentlab_core::Error| e.to_string())
}

fn build_config(id: ExperimentId, params: &Params, operator: Option<OperatorKind>, g: &GlobalFlags) -> CliResult<ExperimentConfig> {
    let file = g.config.as_deref().map(ConfigFile::load).transpose()?;
    let full_scale = g.full_scale || file.as_ref().and_then(|f| f.full_scale).unwrap_or(false);
    let mut cfg = ExperimentConfig::preset(id, full_scale);
    if let Some(file) = &file {
        file.apply(&mut cfg);
    }
    cfg.full_scale = full_scale;
    if let Ok(dir) = std::env::var(OUT_ENV) {
        if !dir.is_empty() {
            cfg.out_dir = PathBuf::from(dir);
        }
    }
    macro_rules! flag {
        ($src:expr => $dst:expr) => {
            if let Some(v) = $src.clone() {
                $dst = v;
            }
        };
    }
    flag!(params.n => cfg.n);
    flag!(params.m => cfg.m);
    flag!(params.k => cfg.k);
    flag!(params.kappa => cfg.kappa);
    flag!(params.j_max => cfg.j_max);
    flag!(params.levels => cfg.levels);
    flag!(params.tracked => cfg.tracked);
    flag!(params.engine => cfg.engine);
    flag!(operator => cfg.operator);
    flag!(g.out => cfg.out_dir);
    flag!(g.seed => cfg.seed);
    flag!(g.weighting => cfg.weighting);
    if g.no_cache {
        cfg.use_cache = false;
    }
    Ok(cfg)
}

fn out_dir(g: &GlobalFlags) -> CliResult<PathBuf> {
    if let Some(out) = &g.out {
        return Ok(out.clone());
    }
    if let Some(dir) = std::env::var_os(OUT_ENV).filter(|d| !d.is_empty()) {
        return Ok(PathBuf::from(dir));
    }
    if let Some(path) = &g.config {
        if let Some(out) = ConfigFile::load(path)?.out {
            return Ok(out);
        }
    }
    Ok(PathBuf::from(DEFAULT_OUT))
}

fn run(cli: Cli) -> CliResult<()> {
    let (id, params, operator) = match &cli.command {
        Command::CleanCache => {
            let dir = out_dir(&cli.global)?;
            let removed = cache::clean(&dir)?;
            println!("{}", serde_json::json!({ "cache_removed": removed, "out": dir }));
            return Ok(());
        }
        Command::Fig1(p) => (ExperimentId::Fig1, p, None),
        Command::Fig2(p) => (ExperimentId::Fig2, p, None),
        Command::Fig3(p) => (ExperimentId::Fig3, p, None),
        Command::Fig4(p) => (ExperimentId::Fig4, p, None),
        Command::Fig5(p) => (ExperimentId::Fig5, p, None),
        Command::Fig6(p) => (ExperimentId::Fig6, p, None),
        Command::Fig7(p) => (ExperimentId::Fig7, p, None),
        Command::Spectrum { operator, params } => (ExperimentId::Spectrum, params, Some(*operator)),
        Command::Check(p) => (ExperimentId::Check, p, None),
    };
    let cfg = build_config(id, params, operator, &cli.global)?;
    let res = run_and_emit(&cfg)?;
    let summary = serde_json::json!({
        "experiment": id.as_str(),
        "out": cfg.experiment_dir(),
        "cache_key": res.cache_key,
        "from_cache": res.from_cache,
        "files": res.manifest.len(),
        "scalars": res.scalars,
    });
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(match e {
                CliError::Guard { .. } | CliError::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
