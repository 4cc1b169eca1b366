use super::optim::lbfgs;
use super::{check_dim, clamp_probability, run_sgd, FitReport, OptimizerSettings, TrainView};
use crate::dataset::Samples;
use crate::error::{Error, Result};
use crate::numeric::{inf_norm, logistic_nll, pairwise_sum, sigmoid};

/// `P(Y = 1 | x) = σ(w·x + b)`.
///
/// Parameter vector layout is `(w_1, .., w_dx, b)`: bias last.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// L2 strength on `weights` (total-likelihood scale).
    pub lambda: f64,
}

impl LogisticModel {
    pub fn new(weights: Vec<f64>, bias: f64, lambda: f64) -> Result<Self> {
        if weights.iter().chain([&bias, &lambda]).any(|v| !v.is_finite()) || lambda < 0.0 {
            return Err(Error::InvalidInput(
                "logistic parameters must be finite and lambda >= 0".into(),
            ));
        }
        Ok(LogisticModel {
            weights,
            bias,
            lambda,
        })
    }

    pub fn zeros(input_dim: usize, lambda: f64) -> Self {
        LogisticModel {
            weights: vec![0.0; input_dim],
            bias: 0.0,
            lambda,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.len()
    }

    /// Number of parameters, `d_x + 1`.
    pub fn param_dim(&self) -> usize {
        self.weights.len() + 1
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    pub(crate) fn from_params(params: &[f64], lambda: f64) -> Self {
        let (w, b) = params.split_at(params.len() - 1);
        LogisticModel {
            weights: w.to_vec(),
            bias: b[0],
            lambda,
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }

    /// Clamped to `[1e-12, 1 - 1e-12]`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), x.len())?;
        Ok(clamp_probability(sigmoid(self.logit(x))))
    }

    pub(crate) fn predict_all<S: Samples + ?Sized>(&self, ds: &S) -> Vec<f64> {
        let mut z = vec![0.0; ds.len()];
        ds.project(&self.weights, &mut z);
        z.iter()
            .map(|&zi| clamp_probability(sigmoid(zi + self.bias)))
            .collect()
    }
}

pub(crate) struct Evaluation {
    pub objective: f64,
    pub nll: f64,
    pub gradient: Vec<f64>,
}

/// Mean regularized objective and its gradient over the training view.
pub(crate) fn evaluate<S: Samples + ?Sized>(
    view: &TrainView<'_, S>,
    params: &[f64],
    lambda: f64,
) -> Evaluation {
    let ds = view.samples;
    let n = view.count();
    let (w, b) = params.split_at(params.len() - 1);
    let b = b[0];
    let mut z = vec![0.0; ds.len()];
    ds.project(w, &mut z);
    let mut losses = vec![0.0; ds.len()];
    let mut coef = vec![0.0; ds.len()];
    for i in 0..ds.len() {
        let m = view.weight(i);
        if m == 0.0 {
            continue;
        }
        let zi = z[i] + b;
        let y = view.labels[i];
        losses[i] = m * logistic_nll(zi, y);
        coef[i] = m * (sigmoid(zi) - f64::from(y)) / n;
    }
    let nll = pairwise_sum(&losses) / n;
    let mut gradient = ds.weighted_input_sum(&coef);
    for (g, wi) in gradient.iter_mut().zip(w) {
        *g += lambda / n * wi;
    }
    gradient.push(pairwise_sum(&coef));
    let penalty = 0.5 * lambda / n * w.iter().map(|v| v * v).sum::<f64>();
    Evaluation {
        objective: nll + penalty,
        nll,
        gradient,
    }
}

/// Fits by SGD followed by full-batch L-BFGS polish.
pub fn fit_logistic<S: Samples + ?Sized>(
    ds: &S,
    lambda: f64,
    opt: &OptimizerSettings,
) -> Result<(LogisticModel, FitReport)> {
    fit_logistic_masked(ds, None, lambda, opt)
}

pub(crate) fn fit_logistic_masked<S: Samples + ?Sized>(
    ds: &S,
    mask: Option<&[f64]>,
    lambda: f64,
    opt: &OptimizerSettings,
) -> Result<(LogisticModel, FitReport)> {
    opt.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let view = TrainView::new(ds, mask)?;
    let d = ds.dim() + 1;
    if view.indices.len() < d {
        return Err(Error::InvalidInput(format!(
            "{} training samples cannot identify {d} parameters",
            view.indices.len()
        )));
    }
    let n = view.count();
    let mut params = vec![0.0; d];
    let mut x = vec![0.0; ds.dim()];
    let sgd_steps = run_sgd(&view, opt, &mut params, |batch, theta| {
        let (w, b) = theta.split_at(theta.len() - 1);
        let mut g = vec![0.0; d];
        for &i in batch {
            let r = sigmoid(ds.dot(i, w) + b[0]) - f64::from(view.labels[i]);
            ds.input_into(i, &mut x);
            for (gj, xj) in g.iter_mut().zip(&x) {
                *gj += r * xj;
            }
            g[d - 1] += r;
        }
        let scale = 1.0 / batch.len() as f64;
        for (j, gj) in g.iter_mut().enumerate() {
            *gj *= scale;
            if j < d - 1 {
                *gj += lambda / n * w[j];
            }
        }
        g
    })?;

    let polish = lbfgs(
        |theta| {
            let e = evaluate(&view, theta, lambda);
            (e.objective, e.gradient)
        },
        params,
        opt.lbfgs_memory,
        opt.polish_max_iter,
        opt.grad_tol,
    )?;
    let final_eval = evaluate(&view, &polish.params, lambda);
    let grad_inf = inf_norm(&final_eval.gradient);
    let model = LogisticModel::from_params(&polish.params, lambda);
    if !final_eval.objective.is_finite() {
        return Err(Error::Numerical("logistic fit produced a non-finite objective".into()));
    }
    let report = FitReport {
        final_nll: final_eval.nll,
        final_objective: final_eval.objective,
        grad_inf_norm: grad_inf,
        full_grad_inf_norm: grad_inf,
        sgd_steps,
        polish_iterations: polish.iterations,
        converged: grad_inf < opt.grad_tol,
        cv_balanced_accuracy: None,
        learning_rate: opt.learning_rate,
    };
    Ok((model, report))
}
