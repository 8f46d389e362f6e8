//! FastICA: PCA whitening followed by deflationary fixed-point iterations
//! with the log-cosh contrast (tanh nonlinearity).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// E[log cosh ν] for a standard normal ν.
const GAUSS_LOGCOSH: f64 = 0.374_567_207_491_116_5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IcaError {
    #[error("need at least {required} samples for {dims} dimensions, got {got}")]
    TooFewSamples { got: usize, required: usize, dims: usize },
    #[error("covariance rank {rank} is below the requested {requested} components")]
    RankDeficient { rank: usize, requested: usize },
    #[error("component {component} did not converge after {attempts} attempts")]
    NonConvergence { component: usize, attempts: usize },
    #[error("component {component} is indistinguishable from Gaussian (z = {z:.2})")]
    Degenerate { component: usize, z: f64 },
    #[error("invalid request: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaOptions {
    pub max_iter: usize,
    pub restarts: usize,
    /// Convergence threshold on the change of a unit weight vector.
    pub tolerance: f64,
    pub seed: u64,
    /// Scale every input column to unit variance before whitening.
    pub standardize: bool,
    /// Eigenvalues below this fraction of the largest count as rank loss.
    pub rank_tolerance: f64,
    /// Components whose non-Gaussianity z-scores all fall below this are
    /// reported as degenerate.
    pub gaussianity_z: f64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            restarts: 5,
            tolerance: 1e-12,
            seed: 0,
            standardize: true,
            rank_tolerance: 1e-10,
            gaussianity_z: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaResult {
    /// m×d map from centered input to components: rotation · whitening.
    pub unmixing: DMatrix<f64>,
    /// m×d whitening transform (includes standardization).
    pub whitening: DMatrix<f64>,
    /// m×m orthogonal rotation found by the fixed-point iterations.
    pub rotation: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// Iterations used per component (final attempt).
    pub iterations: Vec<usize>,
}

impl IcaResult {
    /// Components of one input row.
    pub fn transform(&self, x: &[f64]) -> DVector<f64> {
        let v = DVector::from_column_slice(x) - &self.mean;
        &self.unmixing * v
    }
}

/// Separates `n_components` sources from the rows of `samples` (n×d).
pub fn fastica(samples: &DMatrix<f64>, n_components: usize, opts: &IcaOptions) -> Result<IcaResult, IcaError> {
    let (n, d) = samples.shape();
    let m = n_components;
    if m == 0 || m > d {
        return Err(IcaError::Invalid(format!("{m} components from {d} dimensions")));
    }
    if n < 50 * d {
        return Err(IcaError::TooFewSamples { got: n, required: 50 * d, dims: d });
    }
    let mean = DVector::from_fn(d, |j, _| samples.column(j).mean());
    let mut centered = samples.clone();
    for j in 0..d {
        centered.column_mut(j).add_scalar_mut(-mean[j]);
    }
    let scale = DVector::from_fn(d, |j, _| {
        let sd = (centered.column(j).norm_squared() / n as f64).sqrt();
        if opts.standardize && sd > 0.0 {
            sd
        } else {
            1.0
        }
    });
    let mut std = centered.clone();
    for j in 0..d {
        std.column_mut(j).scale_mut(1.0 / scale[j]);
    }
    let cov = std.transpose() * &std / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let rank = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > opts.rank_tolerance * top.max(f64::MIN_POSITIVE))
        .count();
    if !(top > 0.0) || rank < m {
        return Err(IcaError::RankDeficient { rank, requested: m });
    }
    let mut whitening = DMatrix::zeros(m, d);
    for (r, &i) in order.iter().take(m).enumerate() {
        let inv = 1.0 / eig.eigenvalues[i].sqrt();
        for j in 0..d {
            whitening[(r, j)] = eig.eigenvectors[(j, i)] * inv / scale[j];
        }
    }
    // m×n whitened data.
    let z = &whitening * centered.transpose();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rotation = DMatrix::<f64>::zeros(m, m);
    let mut iterations = Vec::with_capacity(m);
    for p in 0..m {
        let mut found = None;
        for _attempt in 0..=opts.restarts {
            let mut w = DVector::from_fn(m, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            deflate(&mut w, &rotation, p);
            if w.normalize_mut() == 0.0 {
                continue;
            }
            if let Some((w, it)) = iterate(&z, w, &rotation, p, opts) {
                found = Some((w, it));
                break;
            }
        }
        let Some((w, it)) = found else {
            return Err(IcaError::NonConvergence { component: p, attempts: opts.restarts + 1 });
        };
        let zscore = non_gaussianity(&(w.transpose() * &z));
        if zscore < opts.gaussianity_z {
            return Err(IcaError::Degenerate { component: p, z: zscore });
        }
        rotation.row_mut(p).copy_from(&w.transpose());
        iterations.push(it);
    }
    Ok(IcaResult {
        unmixing: &rotation * &whitening,
        whitening,
        rotation,
        mean,
        iterations,
    })
}

fn deflate(w: &mut DVector<f64>, rows: &DMatrix<f64>, count: usize) {
    for j in 0..count {
        let r = rows.row(j).transpose();
        let c = w.dot(&r);
        w.axpy(-c, &r, 1.0);
    }
}

fn iterate(
    z: &DMatrix<f64>,
    mut w: DVector<f64>,
    rows: &DMatrix<f64>,
    p: usize,
    opts: &IcaOptions,
) -> Option<(DVector<f64>, usize)> {
    let n = z.ncols() as f64;
    for it in 1..=opts.max_iter {
        let y = w.transpose() * z;
        let g = y.map(f64::tanh);
        let dg = g.map(|v| 1.0 - v * v).mean();
        let mut next = z * g.transpose() / n - &w * dg;
        deflate(&mut next, rows, p);
        if next.normalize_mut() == 0.0 || next.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let change = (&next - &w).norm().min((&next + &w).norm());
        w = next;
        if change < opts.tolerance {
            return Some((w, it));
        }
    }
    None
}

/// Largest of the log-cosh negentropy and excess-kurtosis z-scores of a
/// unit-variance signal, relative to Gaussian sampling error.
fn non_gaussianity(y: &nalgebra::RowDVector<f64>) -> f64 {
    let n = y.len() as f64;
    let g = y.map(|v| v.cosh().ln());
    let gm = g.mean();
    let gsd = (g.map(|v| (v - gm).powi(2)).sum() / n).sqrt();
    let zg = (gm - GAUSS_LOGCOSH).abs() / (gsd / n.sqrt()).max(f64::MIN_POSITIVE);
    let m = y.mean();
    let var = y.map(|v| (v - m).powi(2)).sum() / n;
    let kurt = y.map(|v| (v - m).powi(4)).sum() / n / (var * var) - 3.0;
    let zk = kurt.abs() / (24.0 / n).sqrt();
    zg.max(zk)
}

/// Normalized Amari index of a square matrix P = W·A; 0 iff P is a scaled
/// permutation.
pub fn amari_error(p: &DMatrix<f64>) -> f64 {
    let m = p.nrows();
    assert_eq!(m, p.ncols(), "square matrix required");
    if m < 2 {
        return 0.0;
    }
    let a = p.abs();
    let mut total = 0.0;
    for i in 0..m {
        let row = a.row(i);
        total += row.sum() / row.max() - 1.0;
    }
    for j in 0..m {
        let col = a.column(j);
        total += col.sum() / col.max() - 1.0;
    }
    total / (2.0 * m as f64 * (m as f64 - 1.0))
}
