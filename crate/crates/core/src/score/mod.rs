//! Per-pixel Fisher score vectors and their second-moment structure.
//!
//! The score of sample `i` is the gradient of its (regularized) log-likelihood
//! with respect to the model parameters at the fitted values. The penalty
//! gradient is split evenly over the `n` training samples, so summing all
//! scores gives exactly minus `n` times the gradient of the mean training
//! objective.
//!
//! For the network only the output layer is differentiated: the score is
//! `(y - p) * (h, 1) - (lambda / n) * (v, 0)` with `h` the hidden activations.

mod covariance;
mod dump;
mod whiten;

pub use covariance::{estimate_covariance, CovarianceMode, ScoreCovariance, DEFAULT_RIDGE_EPS};
pub use dump::{read_score_dump, write_score_dump};
pub use whiten::{whiten, WhitenedField};

use crate::dataset::{NeighborhoodDataset, Samples};
use crate::error::{Error, Result};
use crate::model::{check_dim, LogisticModel, MlpModel, Model};
use crate::numeric::pairwise_sum;

/// Score of one sample under a logistic model fitted on `n_train` samples.
/// Layout `(weights.., bias)`.
pub fn score_logistic(model: &LogisticModel, x: &[f64], y: u8, n_train: usize) -> Result<Vec<f64>> {
    let p = model.predict_proba(x)?;
    let r = f64::from(y) - p;
    let shrink = model.lambda / n_train as f64;
    let mut s: Vec<f64> = x
        .iter()
        .zip(&model.weights)
        .map(|(xj, wj)| r * xj - shrink * wj)
        .collect();
    s.push(r);
    Ok(s)
}

/// Score of one sample with respect to the network's output layer only.
/// Layout `(output weights.., output bias)`.
pub fn score_mlp_last_layer(model: &MlpModel, x: &[f64], y: u8, n_train: usize) -> Result<Vec<f64>> {
    let p = model.predict_proba(x)?;
    let h = model.hidden(x);
    let r = f64::from(y) - p;
    let shrink = model.lambda / n_train as f64;
    let mut s: Vec<f64> = h
        .iter()
        .zip(&model.output_weights)
        .map(|(hk, vk)| r * hk - shrink * vk)
        .collect();
    s.push(r);
    Ok(s)
}

#[derive(Debug, Clone)]
enum Repr {
    /// Row-major `n x d`.
    Dense(Vec<f64>),
    /// `s_i = residual_i * (x_i, 1) - penalty`.
    Neighborhood {
        ds: NeighborhoodDataset,
        residual: Vec<f64>,
        penalty: Vec<f64>,
    },
    /// `s_i = residual_i * (h_i, 1) - penalty`.
    Hidden {
        hidden: Vec<f64>,
        units: usize,
        residual: Vec<f64>,
        penalty: Vec<f64>,
    },
}

/// Score vectors laid out on the interior grid of a dataset.
///
/// Scores from a fitted model are stored in factored form (a residual per
/// pixel plus the model features), so memory stays `O(n)` even when the score
/// dimension is in the hundreds.
#[derive(Debug, Clone)]
pub struct ScoreField {
    rows: usize,
    cols: usize,
    d: usize,
    repr: Repr,
    global_mean: Vec<f64>,
}

/// Scores of every interior pixel under `model`, which must have been fitted
/// on `ds`.
pub fn compute_score_field(ds: &NeighborhoodDataset, model: &Model) -> Result<ScoreField> {
    check_dim(model.input_dim(), ds.dim()).map_err(|_| {
        Error::InvalidInput(format!(
            "model expects {} inputs but the dataset has l_s = {} ({} inputs)",
            model.input_dim(),
            ds.l_s(),
            ds.dim()
        ))
    })?;
    let n = ds.len();
    let probs = model.predict_all(ds)?;
    let residual: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(i, p)| f64::from(ds.label(i)) - p)
        .collect();
    let shrink = model.lambda() / n as f64;
    let repr = match model {
        Model::Logistic(m) => {
            let mut penalty: Vec<f64> = m.weights.iter().map(|w| shrink * w).collect();
            penalty.push(0.0);
            Repr::Neighborhood {
                ds: ds.clone(),
                residual,
                penalty,
            }
        }
        Model::Mlp(m) => {
            let mut penalty: Vec<f64> = m.output_weights.iter().map(|v| shrink * v).collect();
            penalty.push(0.0);
            Repr::Hidden {
                hidden: m.hidden_all(ds),
                units: m.hidden_units(),
                residual,
                penalty,
            }
        }
    };
    Ok(ScoreField::from_repr(
        ds.interior_height(),
        ds.interior_width(),
        model.score_dim(),
        repr,
    ))
}

impl ScoreField {
    /// Wraps explicit score vectors, row-major `rows * cols * d`.
    pub fn from_dense(rows: usize, cols: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || d == 0 || values.len() != rows * cols * d {
            return Err(Error::InvalidInput(format!(
                "{} values do not form a {rows}x{cols} field of dimension {d}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("score field contains non-finite values".into()));
        }
        Ok(Self::from_repr(rows, cols, d, Repr::Dense(values)))
    }

    fn from_repr(rows: usize, cols: usize, d: usize, repr: Repr) -> Self {
        let mut field = ScoreField {
            rows,
            cols,
            d,
            repr,
            global_mean: Vec::new(),
        };
        let n = field.len() as f64;
        field.global_mean = (0..d)
            .map(|j| pairwise_sum(&field.component_plane(j)) / n)
            .collect();
        field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Mean score over every pixel.
    pub fn global_mean(&self) -> &[f64] {
        &self.global_mean
    }

    pub fn score_into(&self, i: usize, out: &mut [f64]) {
        let d = self.d;
        match &self.repr {
            Repr::Dense(v) => out.copy_from_slice(&v[i * d..(i + 1) * d]),
            Repr::Neighborhood {
                ds,
                residual,
                penalty,
            } => {
                ds.input_into(i, &mut out[..d - 1]);
                out[d - 1] = 1.0;
                let r = residual[i];
                for (o, p) in out.iter_mut().zip(penalty) {
                    *o = r * *o - p;
                }
            }
            Repr::Hidden {
                hidden,
                units,
                residual,
                penalty,
            } => {
                let r = residual[i];
                for k in 0..*units {
                    out[k] = r * hidden[i * units + k] - penalty[k];
                }
                out[*units] = r - penalty[*units];
            }
        }
    }

    pub fn score(&self, i: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.d];
        self.score_into(i, &mut s);
        s
    }

    /// Component `j` of every score, as a row-major `rows x cols` plane.
    pub fn component_plane(&self, j: usize) -> Vec<f64> {
        let d = self.d;
        match &self.repr {
            Repr::Dense(v) => v.iter().skip(j).step_by(d).copied().collect(),
            Repr::Neighborhood {
                ds,
                residual,
                penalty,
            } => {
                if j + 1 == d {
                    residual.iter().map(|r| r - penalty[j]).collect()
                } else {
                    let mut plane = ds.input_plane(j);
                    for (v, r) in plane.iter_mut().zip(residual) {
                        *v = r * *v - penalty[j];
                    }
                    plane
                }
            }
            Repr::Hidden {
                hidden,
                units,
                residual,
                penalty,
            } => residual
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let h = if j < *units { hidden[i * units + j] } else { 1.0 };
                    r * h - penalty[j]
                })
                .collect(),
        }
    }

    /// Scores of pixels `start..start + len` as a row-major block.
    pub(crate) fn block(&self, start: usize, len: usize) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; len * d];
        for (k, row) in out.chunks_mut(d).enumerate() {
            self.score_into(start + k, row);
        }
        out
    }
}
