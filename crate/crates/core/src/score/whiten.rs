use std::ops::Range;

use ndarray::{linalg::general_mat_mul, Array2, ArrayView2};

use super::{CovarianceMode, ScoreCovariance, ScoreField};
use crate::error::{Error, Result};
use crate::numeric::invert_lower;

const PIXEL_BLOCK: usize = 4096;

#[derive(Debug, Clone)]
enum Transform {
    /// Values are used as they are.
    Identity,
    /// `z_j = (s_j - m_j) * inv_std_j`.
    Diag { mean: Vec<f64>, inv_std: Vec<f64> },
    /// `z = L⁻¹ (s - m)` with `L` the lower Cholesky factor; `linv` is
    /// row-major lower triangular.
    Full { mean: Vec<f64>, linv: Vec<f64> },
}

/// Centered and whitened score vectors `z_i = A^{-1/2} (s_i - s̄)`.
///
/// Window means of `z` have squared norm equal to the Mahalanobis distance of
/// the window-mean score from the global mean under `A`.
#[derive(Debug, Clone)]
pub struct WhitenedField {
    field: ScoreField,
    transform: Transform,
}

pub fn whiten(field: &ScoreField, cov: &ScoreCovariance) -> Result<WhitenedField> {
    let d = field.dim();
    if cov.d != d {
        return Err(Error::InvalidInput(format!(
            "covariance has dimension {} but the scores have {d}",
            cov.d
        )));
    }
    let mean = field.global_mean().to_vec();
    let transform = match cov.mode {
        CovarianceMode::Diag => Transform::Diag {
            mean,
            inv_std: cov.factor.iter().map(|s| 1.0 / s).collect(),
        },
        CovarianceMode::Full => {
            let linv = invert_lower(&cov.factor, d);
            if linv.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(
                    "whitening transform is not finite; use the diagonal mode".into(),
                ));
            }
            Transform::Full { mean, linv }
        }
    };
    Ok(WhitenedField {
        field: field.clone(),
        transform,
    })
}

impl WhitenedField {
    /// Treats `values` (row-major `rows * cols * d`) as already whitened.
    pub fn from_values(rows: usize, cols: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        Ok(WhitenedField {
            field: ScoreField::from_dense(rows, cols, d, values)?,
            transform: Transform::Identity,
        })
    }

    pub fn rows(&self) -> usize {
        self.field.rows()
    }

    pub fn cols(&self) -> usize {
        self.field.cols()
    }

    pub fn len(&self) -> usize {
        self.field.len()
    }

    pub fn is_empty(&self) -> bool {
        self.field.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    /// Whitened vector of pixel `i`.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        let s = self.field.score(i);
        match &self.transform {
            Transform::Identity => s,
            Transform::Diag { mean, inv_std } => s
                .iter()
                .zip(mean)
                .zip(inv_std)
                .map(|((v, m), k)| (v - m) * k)
                .collect(),
            Transform::Full { mean, linv } => {
                let d = s.len();
                let c: Vec<f64> = s.iter().zip(mean).map(|(v, m)| v - m).collect();
                (0..d)
                    .map(|a| (0..=a).map(|b| linv[a * d + b] * c[b]).sum())
                    .collect()
            }
        }
    }

    /// Planes of components `range`, each row-major `rows x cols`.
    pub fn component_planes(&self, range: Range<usize>) -> Vec<Vec<f64>> {
        match &self.transform {
            Transform::Identity => range.map(|j| self.field.component_plane(j)).collect(),
            Transform::Diag { mean, inv_std } => range
                .map(|j| {
                    let mut p = self.field.component_plane(j);
                    for v in &mut p {
                        *v = (*v - mean[j]) * inv_std[j];
                    }
                    p
                })
                .collect(),
            Transform::Full { mean, linv } => self.full_block(range, mean, linv),
        }
    }

    fn full_block(&self, range: Range<usize>, mean: &[f64], linv: &[f64]) -> Vec<Vec<f64>> {
        let n = self.len();
        let d = self.dim();
        let (j0, j1) = (range.start, range.end);
        let width = j1 - j0;
        // Only the leading j1 components of s contribute to rows j0..j1 of L⁻¹.
        let mut rows_t = Array2::<f64>::zeros((j1, width));
        for (k, a) in (j0..j1).enumerate() {
            for b in 0..=a {
                rows_t[[b, k]] = linv[a * d + b];
            }
        }
        let mut planes = vec![vec![0.0; n]; width];
        let mut start = 0;
        while start < n {
            let len = PIXEL_BLOCK.min(n - start);
            let mut block = self.field.block(start, len);
            for row in block.chunks_mut(d) {
                for (v, m) in row.iter_mut().zip(mean) {
                    *v -= m;
                }
            }
            let s = ArrayView2::from_shape((len, d), &block).expect("block shape");
            let mut z = Array2::<f64>::zeros((len, width));
            general_mat_mul(1.0, &s.slice(ndarray::s![.., ..j1]), &rows_t, 0.0, &mut z);
            for (k, plane) in planes.iter_mut().enumerate() {
                for (t, v) in plane[start..start + len].iter_mut().enumerate() {
                    *v = z[[t, k]];
                }
            }
            start += len;
        }
        planes
    }
}
