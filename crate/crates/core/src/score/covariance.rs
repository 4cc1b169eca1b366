use std::fmt;
use std::str::FromStr;

use ndarray::{linalg::general_mat_mul, ArrayView2, Array2};

use super::ScoreField;
use crate::error::{Error, Result};
use crate::numeric::{cholesky, pairwise_sum};

/// Default ridge, relative to the mean eigenvalue `trace / d`.
pub const DEFAULT_RIDGE_EPS: f64 = 1e-8;

const BLOCK: usize = 4096;

/// Choice of the positive-definite scaling matrix in the window distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    /// The full sample covariance of the scores.
    Full,
    /// Its diagonal.
    Diag,
}

impl fmt::Display for CovarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovarianceMode::Full => "full",
            CovarianceMode::Diag => "diag",
        })
    }
}

impl FromStr for CovarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CovarianceMode::Full),
            "diag" => Ok(CovarianceMode::Diag),
            other => Err(Error::Config(format!(
                "unknown covariance mode {other:?} (expected full or diag)"
            ))),
        }
    }
}

/// Sample covariance `(1/n) Σ (s_i - s̄)(s_i - s̄)ᵀ` plus its factorization.
#[derive(Debug, Clone)]
pub struct ScoreCovariance {
    pub mode: CovarianceMode,
    pub d: usize,
    /// Unregularized covariance: `d x d` row-major in full mode, the diagonal
    /// in diag mode.
    pub matrix: Vec<f64>,
    /// Jitter actually applied: added to the diagonal (full) or used as the
    /// floor of every variance (diag).
    pub ridge: f64,
    /// Lower Cholesky factor of `matrix + ridge I` (full) or per-component
    /// standard deviations after flooring (diag).
    pub factor: Vec<f64>,
    pub mean: Vec<f64>,
}

impl ScoreCovariance {
    pub fn trace(&self) -> f64 {
        match self.mode {
            CovarianceMode::Full => (0..self.d).map(|j| self.matrix[j * self.d + j]).sum(),
            CovarianceMode::Diag => self.matrix.iter().sum(),
        }
    }

    /// The regularized scaling matrix `A` as a dense `d x d` matrix.
    pub fn regularized_dense(&self) -> Vec<f64> {
        let d = self.d;
        let mut a = vec![0.0; d * d];
        match self.mode {
            CovarianceMode::Full => {
                a.copy_from_slice(&self.matrix);
                for j in 0..d {
                    a[j * d + j] += self.ridge;
                }
            }
            CovarianceMode::Diag => {
                for j in 0..d {
                    a[j * d + j] = self.factor[j] * self.factor[j];
                }
            }
        }
        a
    }
}

pub fn estimate_covariance(
    field: &ScoreField,
    mode: CovarianceMode,
    ridge_eps: f64,
) -> Result<ScoreCovariance> {
    let n = field.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "covariance needs at least two score vectors".into(),
        ));
    }
    if !(ridge_eps >= 0.0 && ridge_eps.is_finite()) {
        return Err(Error::Config(format!("ridge_eps must be >= 0, got {ridge_eps}")));
    }
    let d = field.dim();
    let mean = field.global_mean().to_vec();
    let matrix = match mode {
        CovarianceMode::Diag => (0..d)
            .map(|j| {
                let m = mean[j];
                let sq: Vec<f64> = field
                    .component_plane(j)
                    .into_iter()
                    .map(|v| (v - m) * (v - m))
                    .collect();
                pairwise_sum(&sq) / n as f64
            })
            .collect::<Vec<f64>>(),
        CovarianceMode::Full => full_covariance(field, &mean),
    };
    let trace: f64 = match mode {
        CovarianceMode::Full => (0..d).map(|j| matrix[j * d + j]).sum(),
        CovarianceMode::Diag => matrix.iter().sum(),
    };
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::Numerical(
            "degenerate score field: all score vectors are identical (zero covariance trace)"
                .into(),
        ));
    }
    let ridge = ridge_eps * trace / d as f64;
    let factor = match mode {
        CovarianceMode::Full => {
            let mut a = matrix.clone();
            for j in 0..d {
                a[j * d + j] += ridge;
            }
            cholesky(&a, d).ok_or_else(|| {
                Error::Numerical(
                    "score covariance is not positive definite even after the ridge; \
                     use the diagonal mode or a larger ridge"
                        .into(),
                )
            })?
        }
        CovarianceMode::Diag => matrix.iter().map(|&v| v.max(ridge).sqrt()).collect(),
    };
    Ok(ScoreCovariance {
        mode,
        d,
        matrix,
        ridge,
        factor,
        mean,
    })
}

/// Two-pass covariance accumulated block by block with matrix products.
fn full_covariance(field: &ScoreField, mean: &[f64]) -> Vec<f64> {
    let n = field.len();
    let d = field.dim();
    let mut acc = Array2::<f64>::zeros((d, d));
    let mut start = 0;
    while start < n {
        let len = BLOCK.min(n - start);
        let mut block = field.block(start, len);
        for row in block.chunks_mut(d) {
            for (v, m) in row.iter_mut().zip(mean) {
                *v -= m;
            }
        }
        let view = ArrayView2::from_shape((len, d), &block).expect("block shape");
        general_mat_mul(1.0, &view.t(), &view, 1.0, &mut acc);
        start += len;
    }
    let mut out = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            // symmetrize away rounding asymmetry
            out[a * d + b] = 0.5 * (acc[[a, b]] + acc[[b, a]]) / n as f64;
        }
    }
    out
}
