use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cv::cv_balanced_accuracy_with;
use super::optim::lbfgs;
use super::{check_dim, clamp_probability, run_sgd, FitReport, OptimizerSettings, TrainView};
use crate::dataset::Samples;
use crate::error::{Error, Result};
use crate::numeric::{cholesky, cholesky_solve, inf_norm, logistic_nll, pairwise_sum, sigmoid};

pub const HIDDEN_UNITS: usize = 10;

/// Learning-rate grid searched by [`tune_mlp`].
pub const MLP_LEARNING_RATES: [f64; 3] = [1e-1, 1e-2, 1e-3];

const LAST_LAYER_MAX_NEWTON: usize = 100;

/// One hidden tanh layer of [`HIDDEN_UNITS`] units feeding a logistic output.
///
/// Parameter layout: hidden weights (row-major, one row per unit), hidden
/// biases, output weights, output bias. The last `HIDDEN_UNITS + 1` entries
/// are the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub hidden_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
    pub lambda: f64,
}

impl MlpModel {
    pub fn new(
        hidden_weights: Vec<f64>,
        hidden_bias: Vec<f64>,
        output_weights: Vec<f64>,
        output_bias: f64,
        lambda: f64,
    ) -> Result<Self> {
        let units = hidden_bias.len();
        if units != HIDDEN_UNITS || output_weights.len() != units {
            return Err(Error::InvalidInput(format!(
                "MLP must have exactly {HIDDEN_UNITS} hidden units"
            )));
        }
        if hidden_weights.is_empty() || hidden_weights.len() % units != 0 {
            return Err(Error::InvalidInput("hidden weight matrix has the wrong shape".into()));
        }
        let all = hidden_weights
            .iter()
            .chain(&hidden_bias)
            .chain(&output_weights)
            .chain([&output_bias, &lambda]);
        if all.into_iter().any(|v| !v.is_finite()) || lambda < 0.0 {
            return Err(Error::InvalidInput(
                "MLP parameters must be finite and lambda >= 0".into(),
            ));
        }
        Ok(MlpModel {
            hidden_weights,
            hidden_bias,
            output_weights,
            output_bias,
            lambda,
        })
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden_bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.hidden_weights.len() / self.hidden_units()
    }

    pub fn param_dim(&self) -> usize {
        param_dim(self.input_dim())
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.hidden_weights.clone();
        p.extend(&self.hidden_bias);
        p.extend(&self.output_weights);
        p.push(self.output_bias);
        p
    }

    pub(crate) fn from_params(params: &[f64], input_dim: usize, lambda: f64) -> Self {
        let h = HIDDEN_UNITS;
        let (w, rest) = params.split_at(h * input_dim);
        let (b, rest) = rest.split_at(h);
        let (v, c) = rest.split_at(h);
        MlpModel {
            hidden_weights: w.to_vec(),
            hidden_bias: b.to_vec(),
            output_weights: v.to_vec(),
            output_bias: c[0],
            lambda,
        }
    }

    /// Seeded Glorot-uniform initialization with zero biases.
    pub fn initialize(input_dim: usize, lambda: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = (6.0 / (input_dim + HIDDEN_UNITS) as f64).sqrt();
        let hidden_weights = (0..HIDDEN_UNITS * input_dim)
            .map(|_| rng.random_range(-a..a))
            .collect();
        let b = (6.0 / (HIDDEN_UNITS + 1) as f64).sqrt();
        let output_weights = (0..HIDDEN_UNITS).map(|_| rng.random_range(-b..b)).collect();
        MlpModel {
            hidden_weights,
            hidden_bias: vec![0.0; HIDDEN_UNITS],
            output_weights,
            output_bias: 0.0,
            lambda,
        }
    }

    pub fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let d = self.input_dim();
        self.hidden_weights
            .chunks(d)
            .zip(&self.hidden_bias)
            .map(|(row, b)| (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b).tanh())
            .collect()
    }

    pub fn output_logit(&self, hidden: &[f64]) -> f64 {
        hidden
            .iter()
            .zip(&self.output_weights)
            .map(|(h, v)| h * v)
            .sum::<f64>()
            + self.output_bias
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), x.len())?;
        Ok(clamp_probability(sigmoid(self.output_logit(&self.hidden(x)))))
    }

    /// Hidden activations of every sample, row-major `n x HIDDEN_UNITS`.
    pub fn hidden_all<S: Samples + ?Sized>(&self, ds: &S) -> Vec<f64> {
        let n = ds.len();
        let units = self.hidden_units();
        let mut out = vec![0.0; n * units];
        let mut plane = vec![0.0; n];
        for (k, row) in self.hidden_weights.chunks(self.input_dim()).enumerate() {
            ds.project(row, &mut plane);
            let b = self.hidden_bias[k];
            for (i, &a) in plane.iter().enumerate() {
                out[i * units + k] = (a + b).tanh();
            }
        }
        out
    }

    pub(crate) fn predict_all<S: Samples + ?Sized>(&self, ds: &S) -> Vec<f64> {
        self.hidden_all(ds)
            .chunks(self.hidden_units())
            .map(|h| clamp_probability(sigmoid(self.output_logit(h))))
            .collect()
    }
}

fn param_dim(input_dim: usize) -> usize {
    HIDDEN_UNITS * input_dim + 2 * HIDDEN_UNITS + 1
}

pub(crate) struct Evaluation {
    pub objective: f64,
    pub nll: f64,
    pub gradient: Vec<f64>,
}

/// Mean regularized objective and full gradient. The penalty covers hidden
/// and output weights; biases are free.
pub(crate) fn evaluate<S: Samples + ?Sized>(
    view: &TrainView<'_, S>,
    params: &[f64],
    lambda: f64,
) -> Evaluation {
    let ds = view.samples;
    let d = ds.dim();
    let model = MlpModel::from_params(params, d, lambda);
    let units = HIDDEN_UNITS;
    let n = view.count();
    let hidden = model.hidden_all(ds);

    let mut losses = vec![0.0; ds.len()];
    let mut coef = vec![0.0; ds.len()];
    for i in 0..ds.len() {
        let m = view.weight(i);
        if m == 0.0 {
            continue;
        }
        let z = model.output_logit(&hidden[i * units..(i + 1) * units]);
        let y = view.labels[i];
        losses[i] = m * logistic_nll(z, y);
        coef[i] = m * (sigmoid(z) - f64::from(y)) / n;
    }
    let nll = pairwise_sum(&losses) / n;

    let mut grad = vec![0.0; params.len()];
    let out_off = units * d + units;
    let mut delta = vec![0.0; ds.len()];
    let mut col = vec![0.0; ds.len()];
    for k in 0..units {
        let vk = model.output_weights[k];
        for i in 0..ds.len() {
            let h = hidden[i * units + k];
            col[i] = coef[i] * h;
            delta[i] = coef[i] * vk * (1.0 - h * h);
        }
        grad[out_off + k] = pairwise_sum(&col) + lambda / n * vk;
        let gw = ds.weighted_input_sum(&delta);
        for (j, g) in gw.into_iter().enumerate() {
            grad[k * d + j] = g + lambda / n * model.hidden_weights[k * d + j];
        }
        grad[units * d + k] = pairwise_sum(&delta);
    }
    grad[out_off + units] = pairwise_sum(&coef);

    let sq: f64 = model
        .hidden_weights
        .iter()
        .chain(&model.output_weights)
        .map(|v| v * v)
        .sum();
    Evaluation {
        objective: nll + 0.5 * lambda / n * sq,
        nll,
        gradient: grad,
    }
}

/// Gradient of the objective with respect to the output layer only, at fixed
/// hidden activations.
fn last_layer_eval<S: Samples + ?Sized>(
    view: &TrainView<'_, S>,
    hidden: &[f64],
    last: &[f64],
    lambda: f64,
) -> (f64, Vec<f64>) {
    let units = HIDDEN_UNITS;
    let n = view.count();
    let mut losses = vec![0.0; hidden.len() / units];
    let mut grad = vec![0.0; units + 1];
    for (i, loss) in losses.iter_mut().enumerate() {
        let m = view.weight(i);
        if m == 0.0 {
            continue;
        }
        let h = &hidden[i * units..(i + 1) * units];
        let z = h.iter().zip(last).map(|(a, b)| a * b).sum::<f64>() + last[units];
        let y = view.labels[i];
        *loss = m * logistic_nll(z, y);
        let r = m * (sigmoid(z) - f64::from(y)) / n;
        for k in 0..units {
            grad[k] += r * h[k];
        }
        grad[units] += r;
    }
    for k in 0..units {
        grad[k] += lambda / n * last[k];
    }
    let penalty = 0.5 * lambda / n * last[..units].iter().map(|v| v * v).sum::<f64>();
    (pairwise_sum(&losses) / n + penalty, grad)
}

/// Damped Newton on the (convex) output-layer problem.
fn polish_last_layer<S: Samples + ?Sized>(
    view: &TrainView<'_, S>,
    hidden: &[f64],
    last: &mut Vec<f64>,
    lambda: f64,
    tol: f64,
) -> usize {
    let units = HIDDEN_UNITS;
    let dim = units + 1;
    let n = view.count();
    let (mut f, mut g) = last_layer_eval(view, hidden, last, lambda);
    let mut iterations = 0;
    while iterations < LAST_LAYER_MAX_NEWTON && inf_norm(&g) >= tol {
        let mut hess = vec![0.0; dim * dim];
        let mut phi = vec![1.0; dim];
        for &i in &view.indices {
            let m = view.weight(i);
            phi[..units].copy_from_slice(&hidden[i * units..(i + 1) * units]);
            let z = phi.iter().zip(last.iter()).map(|(a, b)| a * b).sum::<f64>();
            let p = sigmoid(z);
            let c = m * p * (1.0 - p) / n;
            for a in 0..dim {
                for b in 0..=a {
                    hess[a * dim + b] += c * phi[a] * phi[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                hess[b * dim + a] = hess[a * dim + b];
            }
            if a < units {
                hess[a * dim + a] += lambda / n;
            }
        }
        let mut damping = 0.0;
        let step = loop {
            let mut h = hess.clone();
            for a in 0..dim {
                h[a * dim + a] += damping;
            }
            if let Some(l) = cholesky(&h, dim) {
                break cholesky_solve(&l, dim, &g);
            }
            damping = if damping == 0.0 { 1e-12 } else { damping * 10.0 };
            if damping > 1e6 {
                return iterations;
            }
        };
        let slope: f64 = -g.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = last.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            let (ft, gt) = last_layer_eval(view, hidden, &trial, lambda);
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                *last = trial;
                f = ft;
                g = gt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        iterations += 1;
    }
    iterations
}

/// Fits the network: SGD, full-parameter L-BFGS, then a Newton polish of the
/// output layer to the gradient tolerance.
pub fn fit_mlp<S: Samples + ?Sized>(
    ds: &S,
    lambda: f64,
    opt: &OptimizerSettings,
) -> Result<(MlpModel, FitReport)> {
    fit_mlp_masked(ds, None, lambda, opt)
}

pub(crate) fn fit_mlp_masked<S: Samples + ?Sized>(
    ds: &S,
    mask: Option<&[f64]>,
    lambda: f64,
    opt: &OptimizerSettings,
) -> Result<(MlpModel, FitReport)> {
    opt.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let view = TrainView::new(ds, mask)?;
    let d = ds.dim();
    if view.indices.len() < HIDDEN_UNITS + 1 {
        return Err(Error::InvalidInput(format!(
            "{} training samples are too few for the network",
            view.indices.len()
        )));
    }
    let n = view.count();
    let mut params = MlpModel::initialize(d, lambda, opt.seed).params();
    let units = HIDDEN_UNITS;
    let mut x = vec![0.0; d];
    let mut h = vec![0.0; units];
    let sgd_steps = run_sgd(&view, opt, &mut params, |batch, theta| {
        let mut g = vec![0.0; theta.len()];
        let (w, rest) = theta.split_at(units * d);
        let (b, rest) = rest.split_at(units);
        let (v, c) = rest.split_at(units);
        let out_off = units * d + units;
        for &i in batch {
            ds.input_into(i, &mut x);
            for k in 0..units {
                let a: f64 = w[k * d..(k + 1) * d].iter().zip(&x).map(|(p, q)| p * q).sum();
                h[k] = (a + b[k]).tanh();
            }
            let z = h.iter().zip(v).map(|(p, q)| p * q).sum::<f64>() + c[0];
            let r = sigmoid(z) - f64::from(view.labels[i]);
            for k in 0..units {
                g[out_off + k] += r * h[k];
                let delta = r * v[k] * (1.0 - h[k] * h[k]);
                g[units * d + k] += delta;
                for (gj, xj) in g[k * d..(k + 1) * d].iter_mut().zip(&x) {
                    *gj += delta * xj;
                }
            }
            g[out_off + units] += r;
        }
        let scale = 1.0 / batch.len() as f64;
        for gj in g.iter_mut() {
            *gj *= scale;
        }
        for j in 0..units * d {
            g[j] += lambda / n * w[j];
        }
        for k in 0..units {
            g[out_off + k] += lambda / n * v[k];
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
    let mut params = polish.params;
    let mut model = MlpModel::from_params(&params, d, lambda);
    let hidden = model.hidden_all(ds);
    let mut last = params[units * d + units..].to_vec();
    let newton = polish_last_layer(&view, &hidden, &mut last, lambda, opt.grad_tol);
    params[units * d + units..].copy_from_slice(&last);
    model = MlpModel::from_params(&params, d, lambda);

    let full = evaluate(&view, &params, lambda);
    if !full.objective.is_finite() {
        return Err(Error::Numerical("MLP fit produced a non-finite objective".into()));
    }
    let last_grad = inf_norm(&full.gradient[units * d + units..]);
    let report = FitReport {
        final_nll: full.nll,
        final_objective: full.objective,
        grad_inf_norm: last_grad,
        full_grad_inf_norm: inf_norm(&full.gradient),
        sgd_steps,
        polish_iterations: polish.iterations + newton,
        converged: last_grad < opt.grad_tol,
        cv_balanced_accuracy: None,
        learning_rate: opt.learning_rate,
    };
    Ok((model, report))
}

/// Picks the SGD learning rate from [`MLP_LEARNING_RATES`] by cross-validated
/// balanced accuracy (first best wins), then refits on all samples.
pub fn tune_mlp<S: Samples + ?Sized>(
    ds: &S,
    lambda: f64,
    opt: &OptimizerSettings,
    folds: usize,
    seed: u64,
) -> Result<(MlpModel, FitReport)> {
    let mut best: Option<(f64, f64)> = None;
    for &lr in &MLP_LEARNING_RATES {
        let trial = OptimizerSettings {
            learning_rate: lr,
            ..opt.clone()
        };
        let acc = cv_balanced_accuracy_with(ds, folds, seed, |ds, mask| {
            let (m, _) = fit_mlp_masked(ds, Some(mask), lambda, &trial)?;
            super::Model::Mlp(m).predict_labels(ds)
        })?;
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((lr, acc));
        }
    }
    let (lr, acc) = best.expect("non-empty learning-rate grid");
    let chosen = OptimizerSettings {
        learning_rate: lr,
        ..opt.clone()
    };
    let (model, mut report) = fit_mlp(ds, lambda, &chosen)?;
    report.cv_balanced_accuracy = Some(acc);
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DenseSamples;

    fn xor_design(n: usize, d: usize, seed: u64) -> DenseSamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| f64::from(rng.random_range(0..2u8))).collect();
            labels.push((x[1] as u8) ^ (x[3] as u8));
            inputs.extend(x);
        }
        DenseSamples::new(d, inputs, labels).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ds = xor_design(120, 4, 2);
        let view = TrainView::new(&ds, None).unwrap();
        let lambda = 0.3;
        let params = MlpModel::initialize(4, lambda, 9).params();
        let mut params = params;
        params[40] = 0.2; // nonzero hidden bias
        let e = evaluate(&view, &params, lambda);
        let h = 1e-6;
        for j in 0..params.len() {
            let mut p = params.clone();
            p[j] += h;
            let fp = evaluate(&view, &p, lambda).objective;
            p[j] -= 2.0 * h;
            let fm = evaluate(&view, &p, lambda).objective;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - e.gradient[j]).abs() / e.gradient[j].abs().max(1e-3);
            assert!(rel < 1e-4, "param {j}: fd {fd} analytic {}", e.gradient[j]);
        }
    }

    #[test]
    fn learns_xor() {
        let ds = xor_design(1500, 5, 4);
        let opt = OptimizerSettings {
            sgd_epochs: 20,
            batch_size: 64,
            learning_rate: 0.5,
            polish_max_iter: 400,
            seed: 1,
            ..OptimizerSettings::default()
        };
        let (model, report) = fit_mlp(&ds, 1e-4, &opt).unwrap();
        let pred = super::super::Model::Mlp(model).predict_labels(&ds).unwrap();
        let acc = super::super::balanced_accuracy(&ds.labels(), &pred).unwrap();
        assert!(acc >= 0.95, "balanced accuracy {acc}, {report:?}");
        assert!(report.grad_inf_norm < 1e-6, "{report:?}");
    }

    #[test]
    fn shape_validation() {
        assert!(MlpModel::new(vec![0.0; 30], vec![0.0; 10], vec![0.0; 10], 0.0, 0.0).is_ok());
        assert!(MlpModel::new(vec![0.0; 30], vec![0.0; 3], vec![0.0; 3], 0.0, 0.0).is_err());
        let m = MlpModel::initialize(3, 0.0, 0);
        assert!(m.predict_proba(&[1.0]).is_err());
        assert_eq!(m.param_dim(), 51);
    }
}
