//! Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization.
//!
//! Builds orthonormal bases `U_k`, `V_k` and an upper bidiagonal `B_k` with
//! `A V_k = U_k B_k` and `A^T U_k = V_k B_k^T + beta_k v_{k+1} e_k^T`. Ritz
//! triplets of `B_k` satisfy `A v = sigma u` exactly, so the residual of
//! triplet `i` is `beta_k |p_i(k)|` with `p_i` the left singular vector of
//! `B_k`.

use nalgebra::{DMatrix, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::operator::DiscreteOperator;
use crate::spectra::{Spectrum, SpectrumMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reorthogonalization {
    /// Two classical Gram-Schmidt passes against the whole basis every step.
    #[default]
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanczosConfig {
    pub k: usize,
    /// Defaults to `max(10 k, k + 100)`, capped at `min(rows, cols)`.
    pub max_iterations: Option<usize>,
    /// Triplet `i` is converged when its residual is `<= tolerance * sigma_1`.
    pub tolerance: f64,
    pub reorthogonalization: Reorthogonalization,
    pub seed: u64,
}

impl LanczosConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iterations: None,
            tolerance: 1e-10,
            reorthogonalization: Reorthogonalization::Full,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = Some(max_iterations);
        self
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn scale(v: &mut [f64], s: f64) {
    for x in v.iter_mut() {
        *x *= s;
    }
}

fn reorthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(w, b);
            axpy(-c, b, w);
        }
    }
}

/// Unit vector orthogonal to `basis`, or `None` if the space is exhausted.
fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    if basis.len() >= dim {
        return None;
    }
    for _ in 0..3 {
        let mut w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let before = norm(&w);
        reorthogonalize(&mut w, basis);
        let after = norm(&w);
        if after > 1e-8 * before {
            scale(&mut w, 1.0 / after);
            return Some(w);
        }
    }
    None
}

struct RitzCheck {
    values: Vec<f64>,
    residuals: Vec<f64>,
}

fn ritz(alphas: &[f64], betas: &[f64], beta_next: f64) -> RitzCheck {
    let k = alphas.len();
    let mut b = DMatrix::zeros(k, k);
    for i in 0..k {
        b[(i, i)] = alphas[i];
        if i + 1 < k {
            b[(i, i + 1)] = betas[i];
        }
    }
    // The vector-computing path of the dense SVD can lose accuracy in the
    // values, so values and vectors come from separate runs.
    let mut values: Vec<f64> = SVD::new(b.clone(), false, false).singular_values.as_slice().to_vec();
    values.sort_by(|a, c| c.total_cmp(a));
    let svd = SVD::new(b, true, false);
    let u = svd.u.expect("left vectors requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &c| svd.singular_values[c].total_cmp(&svd.singular_values[a]));
    let residuals = order.iter().map(|&i| beta_next * u[(k - 1, i)].abs()).collect();
    RitzCheck { values, residuals }
}

/// Largest `k` singular values by Golub-Kahan bidiagonalization. Values that
/// miss the residual test within the iteration budget are returned with
/// `converged = false`.
pub fn lanczos_topk(op: &DiscreteOperator, cfg: &LanczosConfig) -> Result<Spectrum> {
    let (rows, cols) = (op.rows(), op.cols());
    let min_dim = rows.min(cols);
    if cfg.k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if cfg.k > min_dim {
        return Err(invalid(format!("k = {} exceeds min(rows, cols) = {min_dim}", cfg.k)));
    }
    if !(cfg.tolerance > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {}", cfg.tolerance)));
    }
    let max_it = cfg
        .max_iterations
        .unwrap_or_else(|| (10 * cfg.k).max(cfg.k + 100))
        .max(cfg.k)
        .min(min_dim);

    // Run in the smaller space so that the right basis exhausts it.
    let transpose = rows < cols;
    let (n_right, n_left) = if transpose { (rows, cols) } else { (cols, rows) };
    let forward = |x: &[f64]| {
        if transpose {
            op.apply_adjoint_unchecked(x)
        } else {
            op.apply_unchecked(x)
        }
    };
    let backward = |y: &[f64]| {
        if transpose {
            op.apply_unchecked(y)
        } else {
            op.apply_adjoint_unchecked(y)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v_basis: Vec<Vec<f64>> = Vec::with_capacity(max_it + 1);
    let mut u_basis: Vec<Vec<f64>> = Vec::with_capacity(max_it);
    let mut alphas: Vec<f64> = Vec::with_capacity(max_it);
    let mut betas: Vec<f64> = Vec::with_capacity(max_it);
    let mut restarts = 0usize;
    let mut scale_est = 0.0f64;
    let breakdown = |s: f64, dim: usize| f64::EPSILON * s * (dim as f64).sqrt();
    let check_stride = (cfg.k / 10).max(1);

    let v0 = random_orthogonal(&mut rng, n_right, &[]).expect("nonempty space");
    v_basis.push(v0);

    loop {
        // left step: u_j = A v_j - beta_{j-1} u_{j-1}
        let j = v_basis.len() - 1;
        let mut u = forward(&v_basis[j]);
        if let (Some(&beta), Some(prev)) = (betas.last(), u_basis.last()) {
            axpy(-beta, prev, &mut u);
        }
        reorthogonalize(&mut u, &u_basis);
        let mut alpha = norm(&u);
        scale_est = scale_est.max(alpha);
        if alpha <= breakdown(scale_est, n_left) {
            restarts += 1;
            alpha = 0.0;
            u = match random_orthogonal(&mut rng, n_left, &u_basis) {
                Some(w) => w,
                None => vec![0.0; n_left],
            };
        } else {
            scale(&mut u, 1.0 / alpha);
        }
        alphas.push(alpha);
        u_basis.push(u);

        // right step: w = A^T u_j - alpha_j v_j
        let mut w = backward(&u_basis[j]);
        axpy(-alpha, &v_basis[j], &mut w);
        reorthogonalize(&mut w, &v_basis);
        let beta = norm(&w);
        scale_est = scale_est.max(beta);

        let dim = alphas.len();
        let last = dim >= max_it;
        if dim >= cfg.k && (last || (dim - cfg.k) % check_stride == 0) {
            let check = ritz(&alphas, &betas, beta);
            let sigma1 = check.values[0];
            let flags: Vec<bool> = check.residuals[..cfg.k]
                .iter()
                .map(|r| *r <= cfg.tolerance * sigma1)
                .collect();
            if last || flags.iter().all(|f| *f) {
                let values: Vec<f64> = check.values[..cfg.k].iter().map(|v| v.max(0.0)).collect();
                let converged_count = flags.iter().filter(|f| **f).count();
                let s = Spectrum::new(values, SpectrumMethod::LanczosPartial, rows, cols, cfg.k, cfg.tolerance)?
                    .with_convergence(flags)
                    .with_metadata("operator", op.name())
                    .with_metadata("representation", op.representation().kind())
                    .with_metadata("iterations", dim)
                    .with_metadata("restarts", restarts)
                    .with_metadata("converged", converged_count)
                    .with_metadata("seed", cfg.seed);
                return Ok(s);
            }
        }

        if beta <= breakdown(scale_est, n_right) {
            restarts += 1;
            betas.push(0.0);
            match random_orthogonal(&mut rng, n_right, &v_basis) {
                Some(v) => v_basis.push(v),
                None => unreachable!("max_it <= min_dim keeps the right space open"),
            }
        } else {
            scale(&mut w, 1.0 / beta);
            betas.push(beta);
            v_basis.push(w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, WeightingMode};
    use crate::operator::build_j;
    use crate::spectra::full_svd;

    #[test]
    fn diagonal_top_two() {
        let op = DiscreteOperator::diagonal("D", vec![1.0, 5.0, 3.0, 4.0, 2.0]);
        let s = lanczos_topk(&op, &LanczosConfig::new(2)).unwrap();
        assert!((s.values()[0] - 5.0).abs() < 1e-12);
        assert!((s.values()[1] - 4.0).abs() < 1e-12);
        assert!(s.all_converged());
    }

    #[test]
    fn full_rank_exhaustion() {
        let op = DiscreteOperator::diagonal("D", vec![1.0, 5.0, 3.0, 4.0, 2.0]);
        let s = lanczos_topk(&op, &LanczosConfig::new(5)).unwrap();
        for (a, b) in s.values().iter().zip([5.0, 4.0, 3.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_operator() {
        let op = DiscreteOperator::diagonal("D", vec![0.0, 2.0, 0.0, 1.0, 0.0, 0.0]);
        let s = lanczos_topk(&op, &LanczosConfig::new(4)).unwrap();
        assert!((s.values()[0] - 2.0).abs() < 1e-12);
        assert!((s.values()[1] - 1.0).abs() < 1e-12);
        assert!(s.values()[2].abs() < 1e-12);
    }

    #[test]
    fn wide_operator_uses_smaller_space() {
        let m = DMatrix::from_fn(6, 40, |i, j| ((i + 1) as f64 * 0.7 + j as f64 * 0.13).cos());
        let op = DiscreteOperator::from_dense("W", m);
        let dense = full_svd(&op).unwrap();
        let s = lanczos_topk(&op, &LanczosConfig::new(6)).unwrap();
        for (a, b) in s.values().iter().zip(dense.values()) {
            assert!((a - b).abs() <= 1e-10 * dense.values()[0], "{:?} {:?}", s.values(), dense.values());
        }
    }

    #[test]
    fn matches_dense_on_integration_operator() {
        let g = Grid::new(300).unwrap();
        let op = build_j(&g, &g, WeightingMode::L2Consistent);
        let dense = full_svd(&op).unwrap();
        let s = lanczos_topk(&op, &LanczosConfig::new(10)).unwrap();
        assert!(s.all_converged());
        for (a, b) in s.values().iter().zip(dense.values()) {
            assert!(((a - b) / b).abs() <= 1e-8);
        }
    }

    #[test]
    fn invalid_requests() {
        let op = DiscreteOperator::diagonal("D", vec![1.0, 2.0]);
        assert!(lanczos_topk(&op, &LanczosConfig::new(0)).is_err());
        assert!(lanczos_topk(&op, &LanczosConfig::new(3)).is_err());
        assert!(lanczos_topk(&op, &LanczosConfig::new(1).with_tolerance(0.0)).is_err());
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let g = Grid::new(400).unwrap();
        let op = build_j(&g, &g, WeightingMode::L2Consistent);
        let cfg = LanczosConfig::new(30).with_max_iterations(30).with_tolerance(1e-14);
        let s = lanczos_topk(&op, &cfg).unwrap();
        assert_eq!(s.len(), 30);
        assert!(!s.all_converged());
        assert_eq!(s.metadata()["iterations"], "30");
    }
}
