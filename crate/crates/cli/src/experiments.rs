//! The figure experiments and the ad-hoc `spectrum` / `check` runs.

use std::time::Instant;

use log::{debug, info};
use momentlab_core::analysis::{
    beckermann_rho, check_beckermann, check_product_inequality, convergence_study, fit_decay,
    multiplication_limit_check, proportionality_diagnostic, IndexRange,
};
use momentlab_core::hilbert::{hilbert_cholesky, hilbert_matrix};
use momentlab_core::kernel::{build_astar_a, build_astar_a_matrix_free};
use momentlab_core::operator::{Representation, DENSE_ENTRY_LIMIT};
use momentlab_core::{
    build_bh, build_bm, build_composite_a, build_j, full_svd, lanczos_topk, sym_eigs, DiscreteOperator, Grid,
    LanczosConfig, Spectrum, WeightingMode,
};

use crate::config::{Engine, ExperimentConfig, ExperimentId, OperatorKind};
use crate::error::CliResult;
use crate::result::{Curve, ExperimentResult, LabeledBound, LabeledFit, LabeledRatios, LabeledSpectrum, LabeledStudy};

/// Fit range for composite spectra with exponential-looking decay.
pub const COMPOSITE_FIT_HI: usize = 15;
/// Samples per decade of `n` for the `rho` curve.
pub const RHO_SAMPLES_PER_DECADE: usize = 10;
/// Sub-unit tolerance for the multiplication limit check.
pub const LIMIT_EPSILON: f64 = 0.01;

/// Runs the computation for `cfg` without touching the filesystem.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<ExperimentResult> {
    cfg.validate()?;
    let mut res = ExperimentResult::new(cfg.clone());
    let start = Instant::now();
    info!("running {} (key {})", cfg.id, &res.cache_key[..12]);
    match cfg.id {
        ExperimentId::Fig1 => fig1(cfg, &mut res)?,
        ExperimentId::Fig2 => fig2(cfg, &mut res)?,
        ExperimentId::Fig3 => fig3(cfg, &mut res)?,
        ExperimentId::Fig4 => fig4(cfg, &mut res)?,
        ExperimentId::Fig5 => fig5(cfg, &mut res)?,
        ExperimentId::Fig6 => fig6(cfg, &mut res)?,
        ExperimentId::Fig7 => fig7(cfg, &mut res)?,
        ExperimentId::Spectrum => adhoc_spectrum(cfg, &mut res)?,
        ExperimentId::Check => check(cfg, &mut res)?,
    }
    res.timings.insert("total".into(), start.elapsed().as_secs_f64());
    Ok(res)
}

/// Top `k` singular values with the configured engine. Diagonal operators
/// always use the exact rearrangement.
pub fn compute_spectrum(op: &DiscreteOperator, k: usize, engine: Engine, seed: u64) -> CliResult<Spectrum> {
    let min_dim = op.rows().min(op.cols());
    let k = k.min(min_dim);
    let dense_fits = op.rows().saturating_mul(op.cols()) <= DENSE_ENTRY_LIMIT;
    let use_dense = match engine {
        _ if matches!(op.representation(), Representation::Diagonal(_)) => true,
        Engine::Dense => true,
        Engine::Lanczos => false,
        Engine::Auto => k == min_dim && dense_fits,
    };
    debug!("{}: {}x{} k={k} dense={use_dense}", op.name(), op.rows(), op.cols());
    if use_dense {
        Ok(full_svd(op)?.truncated(k))
    } else {
        Ok(lanczos_topk(op, &LanczosConfig::new(k).with_seed(seed))?)
    }
}

fn timed<T>(res: &mut ExperimentResult, stage: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
    let start = Instant::now();
    let out = f()?;
    res.timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
    Ok(out)
}

fn push_spectrum(res: &mut ExperimentResult, label: &str, stem: &str, level: Option<usize>, spectrum: Spectrum) {
    res.spectra.push(LabeledSpectrum {
        label: label.to_string(),
        stem: stem.to_string(),
        level,
        spectrum,
    });
}

fn push_fit(res: &mut ExperimentResult, label: &str, s: &Spectrum, hi: usize) -> CliResult<()> {
    let hi = hi.min(s.len());
    let comparison = fit_decay(s, IndexRange::new(1, hi))?;
    res.fits.push(LabeledFit {
        label: label.to_string(),
        comparison,
    });
    Ok(())
}

fn fig1(cfg: &ExperimentConfig, res: &mut ExperimentResult) -> CliResult<()> {
    let g = Grid::new(cfg.n)?;
    let mode = cfg.weighting;
    let j = build_j(&g, &g, mode);
    let bh = build_bh(cfg.m, &g, mode)?;
    let a = build_composite_a(cfg.m, &g, mode)?;
    let sj = timed(res, "J", || compute_spectrum(&j, cfg.k, cfg.engine, cfg.seed))?;
    let sbh = timed(res, "B^H", || compute_spectrum(&bh, cfg.k, cfg.engine, cfg.seed))?;
    let sa = timed(res, "A", || compute_spectrum(&a, cfg.k, cfg.engine, cfg.seed))?;
    push_fit(res, "J", &sj, cfg.k)?;
    push_fit(res, "A", &sa, COMPOSITE_FIT_HI)?;
    let hi = COMPOSITE_FIT_HI.min(sa.len()).min(sbh.len()).min(sj.len());
    res.diagnostics.push(LabeledRatios {
        label: "A / (B^H J)".into(),
        table: proportionality_diagnostic(&sa, &sbh, &sj, IndexRange::new(1, hi))?,
    });
    push_spectrum(res, "J", "J", None, sj);
    push_spectrum(res, "B^H", "BH", None, sbh);
    push_spectrum(res, "A", "A", None, sa);
    Ok(())
}

fn fig2(cfg: &ExperimentConfig, res: &mut ExperimentResult) -> CliResult<()> {
    let g = Grid::new(cfg.n)?;
    let go = Grid::new(cfg.m)?;
    let j = build_j(&g, &go, cfg.weighting);
    let bm = build_bm(cfg.kappa, &go)?;
    let composite = DiscreteOperator::product("B^M J", vec![bm.clone(), j.clone()])?;
    let sj = timed(res, "J", || compute_spectrum(&j, cfg.k, cfg.engine, cfg.seed))?;
    let sbm = timed(res, "B^M", || compute_spectrum(&bm, cfg.k, cfg.engine, cfg.seed))?;
    let sc = timed(res, "B^M J", || compute_spectrum(&composite, cfg.k, cfg.engine, cfg.seed))?;
    push_fit(res, "J", &sj, cfg.k)?;
    push_fit(res, "B^M J", &sc, cfg.k)?;
    push_spectrum(res, "J", "J", None, sj);
    push_spectrum(res, "B^M", "BM", None, sbm);
    push_spectrum(res, "B^M J", "BMJ", None, sc);
    Ok(())
}

fn fig3(cfg: &ExperimentConfig, res: &mut ExperimentResult) -> CliResult<()> {
    let g = Grid::new(cfg.n)?;
    let dense = cfg.n.saturating_mul(cfg.n) <= DENSE_ENTRY_LIMIT && cfg.engine != Engine::Lanczos;
    let mut spectra = Vec::with_capacity(cfg.j_max.len());
    for &j_max in &cfg.j_max {
        let s = timed(res, &format!("A*A j_max={j_max}"), || {
            if dense {
                let op = build_astar_a(&g, j_max, cfg.weighting)?;
                Ok(sym_eigs(&op)?)
            } else {
                // the symmetric form has the same eigenvalues in either mode
                let op = build_astar_a_matrix_free(&g, j_max, WeightingMode::L2Consistent)?;
                Ok(lanczos_topk(&op, &LanczosConfig::new(cfg.k.min(cfg.n)).with_seed(cfg.seed))?)
            }
        })?;
        res.scalars
            .insert(format!("numerical_rank j_max={j_max}"), s.numerical_rank() as f64);
        spectra.push(s);
    }
    // indices above every level's roundoff floor
    let judged = spectra
        .iter()
        .map(|s| s.values().iter().filter(|&&v| v > s.rank_floor()).count())
        .min()
        .unwrap_or(0);
    if spectra.len() >= 2 && judged > 0 {
        let tracked: Vec<usize> = (1..=judged).collect();
        res.studies.push(LabeledStudy {
            label: "A*A vs j_max".into(),
            study: convergence_study(&cfg.j_max, &spectra, &tracked)?,
        });
    }

    // Overlay: squared singular values of the moment-composite operator in
    // the l2-consistent scaling, which matches the symmetric kernel form.
    let a = build_composite_a(cfg.m, &g, WeightingMode::L2Consistent)?;
    let sa = timed(res, "A overlay", || compute_spectrum(&a, cfg.k, cfg.engine, cfg.seed))?;
    let squared: Vec<f64> = sa.values().iter().map(|v| v * v).collect();
    let sq = Spectrum::new(squared, sa.method(), sa.rows(), sa.cols(), sa.len(), sa.tolerance())?
        .with_metadata("operator", "A squared")
        .with_metadata("weighting", WeightingMode::L2Consistent);
    if let Some(pos) = cfg.j_max.iter().position(|&j| j == cfg.m) {
        let matched = &spectra[pos];
        let n = 10.min(sq.len()).min(matched.len());
        let gap = (0..n)
            .map(|i| (sq.values()[i] - matched.values()[i]).abs() / sq.values()[i])
            .fold(0.0f64, f64::max);
        res.scalars.insert("square_relation_max_rel_gap".into(), gap);
    }
    for (s, &j_max) in spectra.into_iter().zip(&cfg.j_max) {
        let stem = format!("AstarA_j{j_max}");
        push_spectrum(res, "A*A", &stem, Some(j_max), s);
    }
    push_spectrum(res, "A^2", "A_squared", None, sq);
    Ok(())
}

fn fig4(cfg: &ExperimentConfig, res: &mut ExperimentResult) -> CliResult<()> {
    let lo = cfg.levels[0] * RHO_SAMPLES_PER_DECADE;
    let hi = cfg.levels[cfg.levels.len() - 1] * RHO_SAMPLES_PER_DECADE;
    let mut points = Vec::with_capacity(hi - lo + 1);
    for step in lo..=hi {
        let n = 10f64.powf(step as f64 / RHO_SAMPLES_PER_DECADE as f64);
        points.push((n, beckermann_rho(n)?));
    }
    let (n_end, rho_end) = points[points.len() - 1];
    res.scalars.insert("rho_at_max_n".into(), rho_end);
    res.scalars.insert("max_n".into(), n_end);
    let decreasing = points.windows(2).all(|w| w[1].1 < w[0].1);
    res.scalars.insert("strictly_decreasing".into(), f64::from(u8::from(decreasing)));
    res.curves.push(Curve {
        stem: "rho".into(),
        x_name: "n".into(),
        y_name: "rho".into(),
        points,
    });
    Ok(())
}

fn fig5(cfg: &ExperimentConfig, res: &mut ExperimentResult) -> CliResult<()> {
    let mut spectra = Vec::with_capacity(cfg.levels.len());
    for &n in &cfg.levels {
        let s = timed(res, &format!("H_{n}"), || Ok(full_svd(&hilbert_matrix(n)?.to_operator())?))?;
        res.bounds.push(LabeledBound {
            label: format!("beckermann n={n}"),
            report: check_beckermann(&s, n)?,
        });
        spectra.push(s);
    }
    let sigma1_max = spectra.iter().map(|s| s.values()[0]).fold(0.0f64, f64::max);
    res.scalars.insert("sigma1_max".into(), sigma1_max);
    let tracked: Vec<usize> = cfg.tracked.iter().copied().filter(|&i| i <= cfg.levels[0]).collect();
    res.studies.push(LabeledStudy {
        label: "H_n vs n".into(),
        study: convergence_study(&cfg.levels, &spectra, &tracked)?,
    });
    for (s, &n) in spectra.into_iter().zip(&cfg.levels) {
        push_spectrum(res, "H_n", &format!("H_{n}"), Some(n), s);
    }
    Ok(())
}

fn fig6(cfg: &ExperimentConfig, res: &mut ExperimentResult) -> CliResult<()> {
    let g = Grid::new(cfg.n)?;
    let k = cfg.k.max(cfg.tracked.iter().copied().max().unwrap_or(1));
    let mut spectra = Vec::with_capacity(cfg.levels.len());
    for &m in &cfg.levels {
        let a = build_composite_a(m, &g, cfg.weighting)?;
        let s = timed(res, &format!("A M={m}"), || compute_spectrum(&a, k, cfg.engine, cfg.seed))?;
        spectra.push(s);
    }
    res.studies.push(LabeledStudy {
        label: "A vs M".into(),
        study: convergence_study(&cfg.levels, &spectra, &cfg.tracked)?,
    });
    for (s, &m) in spectra.into_iter().zip(&cfg.levels) {
        push_spectrum(res, "A", &format!("A_M{m}"), Some(m), s);
    }
    Ok(())
}

fn fig7(cfg: &ExperimentConfig, res: &mut ExperimentResult) -> CliResult<()> {
    let mut spectra = Vec::with_capacity(cfg.levels.len());
    for &k_points in &cfg.levels {
        let op = build_bm(cfg.kappa, &Grid::new(k_points)?)?;
        spectra.push(full_svd(&op)?);
    }
    let tracked: Vec<usize> = cfg.tracked.iter().copied().filter(|&i| i <= cfg.levels[0]).collect();
    for &i in &tracked {
        for &k_points in &cfg.levels {
            let hit = multiplication_limit_check(cfg.kappa, k_points, i, LIMIT_EPSILON)?;
            res.scalars
                .insert(format!("limit_check i={i} K={k_points}"), f64::from(u8::from(hit)));
        }
    }
    res.studies.push(LabeledStudy {
        label: "M_K vs K".into(),
        study: convergence_study(&cfg.levels, &spectra, &tracked)?,
    });
    for (s, &k_points) in spectra.into_iter().zip(&cfg.levels) {
        push_spectrum(res, "M_K", &format!("M_K{k_points}"), Some(k_points), s);
    }
    Ok(())
}

fn adhoc_spectrum(cfg: &ExperimentConfig, res: &mut ExperimentResult) -> CliResult<()> {
    let mode = cfg.weighting;
    let j_max = cfg.j_max.first().copied().unwrap_or(1000);
    let op = match cfg.operator {
        OperatorKind::Hilbert => hilbert_matrix(cfg.n)?.to_operator(),
        OperatorKind::Cholesky => hilbert_cholesky(cfg.n)?.to_operator(),
        kind => {
            let g = Grid::new(cfg.n)?;
            match kind {
                OperatorKind::J => build_j(&g, &Grid::new(cfg.m)?, mode),
                OperatorKind::Bh => build_bh(cfg.m, &g, mode)?,
                OperatorKind::Bm => build_bm(cfg.kappa, &g)?,
                OperatorKind::A => build_composite_a(cfg.m, &g, mode)?,
                OperatorKind::BmJ => {
                    let go = Grid::new(cfg.m)?;
                    DiscreteOperator::product("B^M J", vec![build_bm(cfg.kappa, &go)?, build_j(&g, &go, mode)])?
                }
                OperatorKind::AstarA if cfg.n.saturating_mul(cfg.n) <= DENSE_ENTRY_LIMIT => {
                    build_astar_a(&g, j_max, mode)?
                }
                OperatorKind::AstarA => build_astar_a_matrix_free(&g, j_max, WeightingMode::L2Consistent)?,
                OperatorKind::Hilbert | OperatorKind::Cholesky => unreachable!(),
            }
        }
    };
    let s = timed(res, op.name(), || {
        if matches!(op.representation(), Representation::GramKernel(_)) && cfg.engine != Engine::Lanczos {
            Ok(sym_eigs(&op)?.truncated(cfg.k))
        } else {
            compute_spectrum(&op, cfg.k, cfg.engine, cfg.seed)
        }
    })?;
    res.scalars.insert("numerical_rank".into(), s.numerical_rank() as f64);
    if s.len() >= 5 && s.values()[s.len() - 1] > 0.0 {
        push_fit(res, op.name(), &s, s.len())?;
    }
    push_spectrum(res, op.name(), "spectrum", None, s);
    Ok(())
}

fn check(cfg: &ExperimentConfig, res: &mut ExperimentResult) -> CliResult<()> {
    for &n in &cfg.levels {
        let s = full_svd(&hilbert_matrix(n)?.to_operator())?;
        res.bounds.push(LabeledBound {
            label: format!("beckermann n={n}"),
            report: check_beckermann(&s, n)?,
        });
    }
    let g = Grid::new(cfg.n)?;
    let bh = build_bh(cfg.m, &g, cfg.weighting)?;
    let j = build_j(&g, &g, cfg.weighting);
    let product = DiscreteOperator::product("B^H J", vec![bh.clone(), j.clone()])?;
    let report = timed(res, "product inequality", || {
        let (sa, sb, sab) = (full_svd(&bh)?, full_svd(&j)?, full_svd(&product)?);
        Ok(check_product_inequality(&sa, &sb, &sab)?)
    })?;
    res.bounds.push(LabeledBound {
        label: "product B^H J".into(),
        report,
    });
    let all = res.bounds.iter().all(|b| b.report.overall_satisfied);
    res.scalars.insert("all_satisfied".into(), f64::from(u8::from(all)));
    Ok(())
}
