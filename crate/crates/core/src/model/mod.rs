//! Parametric pixel classifiers `P(Y | X; θ)` fitted by regularized maximum
//! likelihood.
//!
//! Both models minimize the mean negative log-likelihood over the training
//! samples plus `lambda / (2 n) * |weights|²` (biases are not penalized).
//! Fitting runs a fixed mini-batch SGD schedule and then polishes with
//! full-batch L-BFGS until the gradient infinity-norm falls below
//! [`OptimizerSettings::grad_tol`], so that the training-set mean score is
//! numerically zero.

mod checkpoint;
mod cv;
mod logistic;
mod mlp;
pub(crate) mod optim;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use cv::{balanced_accuracy, cv_balanced_accuracy, cv_balanced_accuracy_with, stratified_folds};
pub use logistic::{fit_logistic, LogisticModel};
pub use mlp::{fit_mlp, tune_mlp, MlpModel, HIDDEN_UNITS, MLP_LEARNING_RATES};

use std::fmt;
use std::str::FromStr;

use crate::dataset::Samples;
use crate::error::{Error, Result};

/// Probabilities are clamped this far inside `(0, 1)`.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

pub const DEFAULT_LAMBDA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Logistic,
    Mlp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Mlp => "mlp",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ModelKind::Logistic),
            "mlp" | "nn" => Ok(ModelKind::Mlp),
            other => Err(Error::Config(format!(
                "unknown model kind {other:?} (expected logistic or mlp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    /// Initial SGD step size; decays as `lr / (1 + epoch)`.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub sgd_epochs: usize,
    /// Hard stop on the number of SGD steps, if set.
    pub sgd_max_steps: Option<usize>,
    /// Full-batch polish iterations; 0 disables polishing.
    pub polish_max_iter: usize,
    pub grad_tol: f64,
    pub lbfgs_memory: usize,
    /// Seeds batch order and MLP initialization.
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            learning_rate: 0.1,
            batch_size: 4096,
            sgd_epochs: 2,
            sgd_max_steps: None,
            polish_max_iter: 3000,
            grad_tol: 1e-6,
            lbfgs_memory: 12,
            seed: 0,
        }
    }
}

impl OptimizerSettings {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.lbfgs_memory == 0 {
            return Err(Error::Config(
                "batch size and L-BFGS memory must be positive".into(),
            ));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("gradient tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Mean negative log-likelihood (without penalty) at the returned parameters.
    pub final_nll: f64,
    /// Regularized training objective at the returned parameters.
    pub final_objective: f64,
    /// Infinity-norm of the objective gradient over the polished block
    /// (all parameters for logistic, the output layer for the MLP).
    pub grad_inf_norm: f64,
    /// Infinity-norm of the gradient over every parameter.
    pub full_grad_inf_norm: f64,
    pub sgd_steps: usize,
    pub polish_iterations: usize,
    pub converged: bool,
    pub cv_balanced_accuracy: Option<f64>,
    /// SGD learning rate actually used (relevant after MLP tuning).
    pub learning_rate: f64,
}

/// A fitted classifier of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Logistic(LogisticModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Logistic(_) => ModelKind::Logistic,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Logistic(m) => m.input_dim(),
            Model::Mlp(m) => m.input_dim(),
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Model::Logistic(m) => m.lambda,
            Model::Mlp(m) => m.lambda,
        }
    }

    /// Dimension of the score vector.
    pub fn score_dim(&self) -> usize {
        match self {
            Model::Logistic(m) => m.input_dim() + 1,
            Model::Mlp(m) => m.hidden_units() + 1,
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Logistic(m) => m.predict_proba(x),
            Model::Mlp(m) => m.predict_proba(x),
        }
    }

    /// Hard labels at threshold 0.5 for every sample.
    pub fn predict_labels<S: Samples + ?Sized>(&self, ds: &S) -> Result<Vec<u8>> {
        let probs = self.predict_all(ds)?;
        Ok(probs.into_iter().map(|p| u8::from(p >= 0.5)).collect())
    }

    pub fn predict_all<S: Samples + ?Sized>(&self, ds: &S) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), ds.dim())?;
        Ok(match self {
            Model::Logistic(m) => m.predict_all(ds),
            Model::Mlp(m) => m.predict_all(ds),
        })
    }
}

pub(crate) fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::InvalidInput(format!(
            "input dimension mismatch: model expects {expected}, got {got}"
        )));
    }
    Ok(())
}

/// Training view: the samples plus an optional 0/1 inclusion mask.
pub(crate) struct TrainView<'a, S: Samples + ?Sized> {
    pub samples: &'a S,
    pub mask: Option<&'a [f64]>,
    pub indices: Vec<usize>,
    pub labels: Vec<u8>,
}

impl<'a, S: Samples + ?Sized> TrainView<'a, S> {
    pub fn new(samples: &'a S, mask: Option<&'a [f64]>) -> Result<Self> {
        let labels = samples.labels();
        let indices: Vec<usize> = match mask {
            Some(m) => {
                if m.len() != samples.len() {
                    return Err(Error::InvalidInput("training mask length mismatch".into()));
                }
                (0..samples.len()).filter(|&i| m[i] > 0.0).collect()
            }
            None => (0..samples.len()).collect(),
        };
        let positives = indices.iter().filter(|&&i| labels[i] == 1).count();
        if positives == 0 || positives == indices.len() {
            return Err(Error::Numerical(format!(
                "training data contains a single class ({} samples, {positives} particle); \
                 the likelihood is unbounded",
                indices.len()
            )));
        }
        Ok(TrainView {
            samples,
            mask,
            indices,
            labels,
        })
    }

    pub fn count(&self) -> f64 {
        self.indices.len() as f64
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.mask.map_or(1.0, |m| m[i])
    }
}

/// Fixed-schedule mini-batch SGD over the training indices. `batch_grad`
/// returns the objective gradient estimated on one batch. Returns the number
/// of steps taken.
pub(crate) fn run_sgd<S, G>(
    view: &TrainView<'_, S>,
    opt: &OptimizerSettings,
    params: &mut [f64],
    mut batch_grad: G,
) -> Result<usize>
where
    S: Samples + ?Sized,
    G: FnMut(&[usize], &[f64]) -> Vec<f64>,
{
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opt.seed ^ 0x5eed_5eed);
    let mut order = view.indices.clone();
    let limit = opt.sgd_max_steps.unwrap_or(usize::MAX);
    let mut steps = 0;
    for epoch in 0..opt.sgd_epochs {
        order.shuffle(&mut rng);
        let lr = opt.learning_rate / (1.0 + epoch as f64);
        for batch in order.chunks(opt.batch_size) {
            if steps >= limit {
                return Ok(steps);
            }
            let g = batch_grad(batch, params);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "SGD diverged at step {steps} (learning rate {lr})"
                )));
            }
            for (p, gi) in params.iter_mut().zip(&g) {
                *p -= lr * gi;
            }
            steps += 1;
        }
    }
    Ok(steps)
}
