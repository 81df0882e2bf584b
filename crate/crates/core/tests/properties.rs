use momentlab_core::analysis::{
    beckermann_rho, check_beckermann, check_product_inequality, convergence_study, fit_decay,
    multiplication_singular_value, DecayModel, IndexRange,
};
use momentlab_core::hilbert::hilbert_matrix;
use momentlab_core::kernel::build_astar_a;
use momentlab_core::spectra::SpectrumMethod;
use momentlab_core::{
    build_bh, build_bm, build_composite_a, build_j, full_svd, lanczos_topk, sym_eigs, trapezoid_weights,
    DiscreteOperator, Grid, LanczosConfig, Spectrum, WeightingMode,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mode_strategy() -> impl Strategy<Value = WeightingMode> {
    prop_oneof![Just(WeightingMode::PaperFaithful), Just(WeightingMode::L2Consistent)]
}

fn assert_adjoint(op: &DiscreteOperator, rng: &mut ChaCha8Rng) {
    let x = random_vec(rng, op.cols());
    let y = random_vec(rng, op.rows());
    let lhs = dot(&op.apply(&x).unwrap(), &y);
    let rhs = dot(&x, &op.apply_adjoint(&y).unwrap());
    assert!(
        (lhs - rhs).abs() <= 1e-12 * norm(&x) * norm(&y),
        "{}: {lhs} vs {rhs}",
        op.name()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjoint_consistency(n in 2usize..200, m in 2usize..200, mode in mode_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Grid::new(n).unwrap();
        let go = Grid::new(m).unwrap();
        let j = build_j(&g, &go, mode);
        let bh = build_bh(m, &go, mode).unwrap();
        let a = build_composite_a(m, &g, mode).unwrap();
        let bm = build_bm(4.0, &go).unwrap();
        let ops = vec![
            DiscreteOperator::product("B^H J", vec![bh.clone(), j.clone()]).unwrap(),
            DiscreteOperator::product("B^M J", vec![bm.clone(), j.clone()]).unwrap(),
            j, bh, a, bm,
        ];
        for op in &ops {
            assert_adjoint(op, &mut rng);
        }
    }

    #[test]
    fn quadrature_integrates_affine_exactly(n in 2usize..5000, a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let g = Grid::new(n).unwrap();
        let w = trapezoid_weights(&g);
        let samples: Vec<f64> = g.points().iter().map(|t| a + b * t).collect();
        let exact = a + 0.5 * b;
        prop_assert!((w.integrate(&samples).unwrap() - exact).abs() <= 1e-15 * 10.0 * (1.0 + a.abs() + b.abs()) * (n as f64).sqrt());
    }

    #[test]
    fn scale_equivariance(rows in 1usize..30, cols in 1usize..30, c in -1e3f64..1e3, seed in any::<u64>()) {
        prop_assume!(c != 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, rows, cols);
        let s = full_svd(&DiscreteOperator::from_dense("A", m.clone())).unwrap();
        let sc = full_svd(&DiscreteOperator::from_dense("cA", m * c)).unwrap();
        for (a, b) in s.values().iter().zip(sc.values()) {
            prop_assert!((b - c.abs() * a).abs() <= 1e-13 * c.abs() * s.values()[0] * 10.0);
        }
    }

    #[test]
    fn spectra_are_sorted_and_nonnegative(rows in 1usize..25, cols in 1usize..25, k in 1usize..25, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = DiscreteOperator::from_dense("A", random_matrix(&mut rng, rows, cols));
        let k = k.min(rows.min(cols));
        let mut all = vec![full_svd(&op).unwrap(), lanczos_topk(&op, &LanczosConfig::new(k).with_seed(seed)).unwrap()];
        if rows == cols {
            let sym = DiscreteOperator::from_dense("S", op.to_dense().unwrap().transpose() * op.to_dense().unwrap());
            all.push(sym_eigs(&sym).unwrap());
        }
        for s in &all {
            prop_assert!(s.values().windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(s.values().iter().all(|v| *v >= 0.0));
            prop_assert!(s.numerical_rank() <= s.len());
        }
    }

    #[test]
    fn planted_exponential_recovered(c in 0.01f64..3.0, amp in 1e-3f64..1e3, lo in 1usize..10, len in 5usize..30) {
        let hi = lo + len - 1;
        let values: Vec<f64> = (1..=hi).map(|i| amp * (-c * i as f64).exp()).collect();
        let s = Spectrum::new(values, SpectrumMethod::DenseSvd, hi, hi, hi, 0.0).unwrap();
        let fit = fit_decay(&s, IndexRange::new(lo, hi)).unwrap();
        prop_assert!((fit.exponential.rate - c).abs() < 1e-12 * (1.0 + c) * 10.0);
        prop_assert!((fit.exponential.r_squared - 1.0).abs() < 1e-12);
        prop_assert_eq!(fit.preferred, Some(DecayModel::Exponential));
    }

    #[test]
    fn planted_polynomial_recovered(p in 0.2f64..4.0, amp in 1e-3f64..1e3, len in 5usize..60) {
        let values: Vec<f64> = (1..=len).map(|i| amp * (i as f64).powf(-p)).collect();
        let s = Spectrum::new(values, SpectrumMethod::DenseSvd, len, len, len, 0.0).unwrap();
        let fit = fit_decay(&s, IndexRange::new(1, len)).unwrap();
        prop_assert!((fit.polynomial.rate - p).abs() < 1e-12 * 10.0);
        prop_assert!((fit.polynomial.r_squared - 1.0).abs() < 1e-12);
        prop_assert_eq!(fit.preferred, Some(DecayModel::Polynomial));
    }

    #[test]
    fn kernel_entries_monotone_in_truncation(n in 2usize..40, j1 in 1usize..300, extra in 1usize..3000) {
        let g = Grid::new(n).unwrap();
        let lo = build_astar_a(&g, j1, WeightingMode::L2Consistent).unwrap();
        let hi = build_astar_a(&g, j1 + extra, WeightingMode::L2Consistent).unwrap();
        let (klo, khi) = (lo.to_dense().unwrap(), hi.to_dense().unwrap());
        prop_assert!(klo.iter().zip(khi.iter()).all(|(a, b)| b >= a));
    }
}

#[test]
fn engine_agreement_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..5 {
        let m = random_matrix(&mut rng, 100, 80);
        let op = DiscreteOperator::from_dense("A", m.clone());
        let dense = full_svd(&op).unwrap();
        let gram = sym_eigs(&DiscreteOperator::from_dense("AtA", m.transpose() * &m)).unwrap();
        let lz = lanczos_topk(&op, &LanczosConfig::new(10).with_seed(trial)).unwrap();
        assert!(lz.all_converged());
        for i in 0..10 {
            let d = dense.values()[i];
            assert!((gram.values()[i].sqrt() - d).abs() <= 1e-8 * d, "gram {i}");
            assert!((lz.values()[i] - d).abs() <= 1e-8 * d, "lanczos {i}");
        }
    }
}

#[test]
fn spectra_are_bitwise_deterministic() {
    let g = Grid::new(600).unwrap();
    let a = build_composite_a(600, &g, WeightingMode::PaperFaithful).unwrap();
    let cfg = LanczosConfig::new(15).with_seed(42);
    assert_eq!(lanczos_topk(&a, &cfg).unwrap().values(), lanczos_topk(&a, &cfg).unwrap().values());
    assert_eq!(full_svd(&a).unwrap().values(), full_svd(&a).unwrap().values());
    let x: Vec<f64> = (0..600).map(|i| (i as f64 * 0.37).sin()).collect();
    assert_eq!(a.apply(&x).unwrap(), a.apply(&x).unwrap());
}

#[test]
fn product_inequality_random_trials() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let a = random_matrix(&mut rng, 50, 50);
        let b = random_matrix(&mut rng, 50, 50);
        let sa = full_svd(&DiscreteOperator::from_dense("A", a.clone())).unwrap();
        let sb = full_svd(&DiscreteOperator::from_dense("B", b.clone())).unwrap();
        let sab = full_svd(&DiscreteOperator::from_dense("AB", a * b)).unwrap();
        let report = check_product_inequality(&sa, &sb, &sab).unwrap();
        assert!(report.overall_satisfied);
        assert_eq!(report.records.len(), 25);
    }
}

#[test]
fn bound_reports_replay_identically() {
    let s = full_svd(&hilbert_matrix(16).unwrap().to_operator()).unwrap();
    assert_eq!(check_beckermann(&s, 16).unwrap(), check_beckermann(&s, 16).unwrap());
}

#[test]
fn rho_strictly_decreasing_above_one() {
    let samples: Vec<f64> = (0..=600).map(|k| 10f64.powf(k as f64 / 100.0)).collect();
    let rho: Vec<f64> = samples.iter().map(|&n| beckermann_rho(n).unwrap()).collect();
    assert!(rho.iter().all(|r| *r > 1.0));
    assert!(rho.windows(2).all(|w| w[1] < w[0]));
    for n in 1..2000 {
        assert!(beckermann_rho(n as f64 + 1.0).unwrap() < beckermann_rho(n as f64).unwrap());
    }
}

#[test]
fn multiplication_study_matches_closed_form() {
    let levels = [100usize, 400, 1600, 6400];
    let spectra: Vec<Spectrum> = levels
        .iter()
        .map(|&k| full_svd(&build_bm(4.0, &Grid::new(k).unwrap()).unwrap()).unwrap())
        .collect();
    let study = convergence_study(&levels, &spectra, &[1, 2, 10, 50]).unwrap();
    assert!(study.all_monotone());
    for t in &study.tracked {
        for (v, &k) in t.values.iter().zip(&levels) {
            let expected = ((k - t.index) as f64 / (k - 1) as f64).powi(4);
            assert_eq!(*v, expected);
            assert_eq!(*v, multiplication_singular_value(4.0, k, t.index).unwrap());
        }
    }
}

/// Roots of `x^3 + a x^2 + b x + c` with three real roots, descending.
fn cubic_roots(a: f64, b: f64, c: f64) -> [f64; 3] {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let r = 2.0 * (-p / 3.0).sqrt();
    let phi = (3.0 * q / (p * r)).acos() / 3.0;
    let mut roots = [0.0; 3];
    for (k, root) in roots.iter_mut().enumerate() {
        *root = r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - a / 3.0;
    }
    roots.sort_by(|x, y| y.total_cmp(x));
    roots
}

#[test]
fn hilbert_three_matches_characteristic_polynomial() {
    // trace, sum of principal 2x2 minors, determinant
    let tr = 1.0 + 1.0 / 3.0 + 1.0 / 5.0;
    let minors = (1.0 / 3.0 - 1.0 / 4.0) + (1.0 / 5.0 - 1.0 / 9.0) + (1.0 / 15.0 - 1.0 / 16.0);
    let det = 1.0 / 2160.0;
    let roots = cubic_roots(-tr, minors, -det);
    let s = full_svd(&hilbert_matrix(3).unwrap().to_operator()).unwrap();
    for (v, r) in s.values().iter().zip(roots) {
        assert!((v - r).abs() <= 1e-10 * r, "{v} vs {r}");
    }
    assert!((s.values()[0] - 1.40832).abs() < 1e-5);
    assert!((s.values()[1] - 0.12233).abs() < 1e-5);
    assert!((s.values()[2] - 0.00269).abs() < 1e-5);
}

#[test]
fn composite_spectrum_matches_factor_product() {
    let g = Grid::new(1000).unwrap();
    let mode = WeightingMode::PaperFaithful;
    let direct = full_svd(&build_composite_a(1000, &g, mode).unwrap()).unwrap();
    let product = DiscreteOperator::product(
        "B^H J",
        vec![build_bh(1000, &g, mode).unwrap(), build_j(&g, &g, mode)],
    )
    .unwrap();
    let composed = full_svd(&product).unwrap();
    for i in 0..10 {
        let (a, b) = (direct.values()[i], composed.values()[i]);
        assert!((a - b).abs() <= 0.05 * a, "index {}: {a} vs {b}", i + 1);
    }
}
