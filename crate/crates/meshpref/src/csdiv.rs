//! Gaussian-kernel Cauchy-Schwarz divergence: empirical estimator,
//! analytic gradients, the kernel-mean-embedding identity, and a
//! closed-form Gaussian oracle.
//!
//! The estimator over samples X (m x d) and Y (n x d) is
//!
//!   D = log( (1/m^2) sum_ij k(x_i, x_j) )
//!     + log( (1/n^2) sum_ij k(y_i, y_j) )
//!     - 2 log( (1/mn) sum_ij k(x_i, y_j) )
//!
//! with k the Gaussian kernel exp(-|x - y|^2 / (2 sigma^2)). The value is
//! nonnegative, symmetric in (X, Y), and zero when the two samples carry
//! identical kernel mean embeddings.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub rows: Array2<f64>,
}

impl EmbeddingBatch {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::ShapeMismatch("embedding batch needs >= 1 row".into()));
        }
        if !rows.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("embedding batch".into()));
        }
        Ok(Self { rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::ShapeMismatch("embedding batch needs >= 1 row".into()));
        }
        let d = rows[0].len();
        let mut flat = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    left: d,
                    right: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        Self::new(Array2::from_shape_vec((rows.len(), d), flat).expect("shape"))
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelConfig {
    /// Explicit bandwidth sigma > 0.
    Explicit(f64),
    /// Median of nonzero pairwise distances over the pooled sample.
    Median,
}

impl KernelConfig {
    fn resolve(&self, x: &EmbeddingBatch, y: &EmbeddingBatch) -> Result<f64> {
        match *self {
            KernelConfig::Explicit(sigma) => {
                if sigma > 0.0 && sigma.is_finite() {
                    Ok(sigma)
                } else {
                    Err(Error::InvalidBandwidth(sigma))
                }
            }
            KernelConfig::Median => Ok(median_bandwidth(x, y)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSReport {
    pub value: f64,
    pub bandwidth_used: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_x: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_y: Option<Vec<Vec<f64>>>,
    /// (log S_xx, log S_yy, log S_xy) of the normalized kernel sums.
    pub term_logs: (f64, f64, f64),
}

pub fn gaussian_kernel(x: ArrayView1<f64>, y: ArrayView1<f64>, sigma: f64) -> Result<f64> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidBandwidth(sigma));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let sq: f64 = x
        .iter()
        .zip(y.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((-sq / (2.0 * sigma * sigma)).exp())
}

/// Median of all nonzero pairwise Euclidean distances over the pooled
/// X and Y rows; 1.0 when every point coincides.
pub fn median_bandwidth(x: &EmbeddingBatch, y: &EmbeddingBatch) -> f64 {
    let pooled: Vec<ArrayView1<f64>> = x
        .rows
        .rows()
        .into_iter()
        .chain(y.rows.rows())
        .collect();
    let mut dists = Vec::new();
    for i in 0..pooled.len() {
        for j in (i + 1)..pooled.len() {
            let sq: f64 = pooled[i]
                .iter()
                .zip(pooled[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if sq > 0.0 {
                dists.push(sq.sqrt());
            }
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = dists.len();
    if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    }
}

#[inline]
fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Unnormalized kernel sum over all (row of a, row of b) pairs, accumulated
/// in row-major index order.
fn kernel_sum(a: ArrayView2<f64>, b: ArrayView2<f64>, sigma: f64) -> f64 {
    let inv = -1.0 / (2.0 * sigma * sigma);
    let mut total = 0.0;
    for ai in a.rows() {
        let mut row = 0.0;
        for bj in b.rows() {
            row += (sq_dist(ai, bj) * inv).exp();
        }
        total += row;
    }
    total
}

fn check_pair(x: &EmbeddingBatch, y: &EmbeddingBatch) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    if !x.rows.iter().all(|v| v.is_finite()) || !y.rows.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("embedding batch".into()));
    }
    Ok(())
}

fn checked_log(sum: f64, norm: f64) -> Result<f64> {
    let v = sum * norm;
    if v <= 0.0 || !v.is_finite() {
        return Err(Error::NumericDomain(v));
    }
    Ok(v.ln())
}

fn divergence_impl(
    x: &EmbeddingBatch,
    y: &EmbeddingBatch,
    cfg: KernelConfig,
    with_grad: bool,
) -> Result<CSReport> {
    check_pair(x, y)?;
    let sigma = cfg.resolve(x, y)?;
    let m = x.len() as f64;
    let n = y.len() as f64;

    let sxx = kernel_sum(x.rows.view(), x.rows.view(), sigma);
    let syy = kernel_sum(y.rows.view(), y.rows.view(), sigma);
    let sxy = kernel_sum(x.rows.view(), y.rows.view(), sigma);

    let log_sxx = checked_log(sxx, 1.0 / (m * m))?;
    let log_syy = checked_log(syy, 1.0 / (n * n))?;
    let log_sxy = checked_log(sxy, 1.0 / (m * n))?;
    let value = log_sxx + log_syy - 2.0 * log_sxy;

    let (grad_x, grad_y) = if with_grad {
        (
            Some(grad_block(&x.rows, &y.rows, sigma, sxx, sxy)),
            Some(grad_block(&y.rows, &x.rows, sigma, syy, sxy)),
        )
    } else {
        (None, None)
    };

    Ok(CSReport {
        value,
        bandwidth_used: sigma,
        grad_x,
        grad_y,
        term_logs: (log_sxx, log_syy, log_sxy),
    })
}

/// Gradient of the divergence with respect to each row of `a`, where `a`
/// supplies one self-term log S_aa and half of the cross term. Using
/// dk/da = k * (b - a) / sigma^2:
///
///   dD/da_k = (2 / S_aa_sum) sum_j k(a_k, a_j)(a_j - a_k)/sigma^2
///           - (2 / S_ab_sum) sum_j k(a_k, b_j)(b_j - a_k)/sigma^2
fn grad_block(
    a: &Array2<f64>,
    b: &Array2<f64>,
    sigma: f64,
    s_aa: f64,
    s_ab: f64,
) -> Vec<Vec<f64>> {
    let inv2 = 1.0 / (sigma * sigma);
    let neg = -0.5 * inv2;
    let d = a.ncols();
    let mut out = vec![vec![0.0; d]; a.nrows()];
    for (k, ak) in a.rows().into_iter().enumerate() {
        let gk = &mut out[k];
        for aj in a.rows() {
            let kv = (sq_dist(ak, aj) * neg).exp();
            let w = 2.0 * kv * inv2 / s_aa;
            for c in 0..d {
                gk[c] += w * (aj[c] - ak[c]);
            }
        }
        for bj in b.rows() {
            let kv = (sq_dist(ak, bj) * neg).exp();
            let w = 2.0 * kv * inv2 / s_ab;
            for c in 0..d {
                gk[c] -= w * (bj[c] - ak[c]);
            }
        }
    }
    out
}

/// Empirical CS divergence without gradients.
pub fn cs_divergence(
    x: &EmbeddingBatch,
    y: &EmbeddingBatch,
    cfg: KernelConfig,
) -> Result<CSReport> {
    divergence_impl(x, y, cfg, false)
}

/// Empirical CS divergence with analytic gradients for every embedding.
pub fn cs_divergence_grad(
    x: &EmbeddingBatch,
    y: &EmbeddingBatch,
    cfg: KernelConfig,
) -> Result<CSReport> {
    divergence_impl(x, y, cfg, true)
}

/// Absolute difference between the three-log-sum form and the mean-embedding
/// cosine form -2 log(S_xy / sqrt(S_xx S_yy)). The two are algebraically
/// identical, so the result stays at rounding level.
pub fn mean_embedding_identity_check(
    x: &EmbeddingBatch,
    y: &EmbeddingBatch,
    sigma: f64,
) -> Result<f64> {
    let report = cs_divergence(x, y, KernelConfig::Explicit(sigma))?;
    let (lxx, lyy, lxy) = report.term_logs;
    let cosine_form = -2.0 * (lxy - 0.5 * (lxx + lyy));
    Ok((report.value - cosine_form).abs())
}

// ---------------------------------------------------------------------------
// Closed-form Gaussian oracle
// ---------------------------------------------------------------------------

/// Cholesky factor (lower) of a symmetric positive definite matrix.
fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::NotSpd);
    }
    for i in 0..d {
        for j in 0..d {
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-9 * a[[i, i]].abs().max(1.0) {
                return Err(Error::NotSpd);
            }
        }
    }
    let mut l = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::NotSpd);
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

fn log_det_from_chol(l: &Array2<f64>) -> f64 {
    (0..l.nrows()).map(|i| 2.0 * l[[i, i]].ln()).sum()
}

/// Solves L L^T x = b given the lower Cholesky factor.
fn chol_solve(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let d = b.len();
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in (i + 1)..d {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Exact CS divergence between N(mu1, sigma1) and N(mu2, sigma2) via
/// Gaussian product integrals:
///
///   D = log det(S1 + S2) - (1/2) log det(2 S1) - (1/2) log det(2 S2)
///     + delta^T (S1 + S2)^{-1} delta,   delta = mu1 - mu2.
pub fn gaussian_closed_form(
    mu1: &[f64],
    sigma1: &Array2<f64>,
    mu2: &[f64],
    sigma2: &Array2<f64>,
) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d || sigma1.nrows() != d || sigma2.nrows() != d {
        return Err(Error::DimensionMismatch {
            left: d,
            right: mu2.len(),
        });
    }
    let sum = sigma1 + sigma2;
    let l_sum = cholesky(&sum)?;
    let l1 = cholesky(&(sigma1 * 2.0))?;
    let l2 = cholesky(&(sigma2 * 2.0))?;
    let delta: Vec<f64> = mu1.iter().zip(mu2.iter()).map(|(a, b)| a - b).collect();
    let solved = chol_solve(&l_sum, &delta);
    let quad: f64 = delta.iter().zip(solved.iter()).map(|(a, b)| a * b).sum();
    Ok(log_det_from_chol(&l_sum) - 0.5 * log_det_from_chol(&l1) - 0.5 * log_det_from_chol(&l2)
        + quad)
}
