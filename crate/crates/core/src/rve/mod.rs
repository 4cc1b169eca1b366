//! Candidate-size sweep and RVE selection.
//!
//! [`run_sweep`] runs the whole chain on one micrograph: neighborhood
//! extraction, model fit, scores, covariance, whitening, the moving-window
//! sweep over a size grid, and elbow detection on the resulting curve.

mod elbow;
mod grid;

pub use elbow::{detect_elbow, Elbow, LOW_CONFIDENCE_DISTANCE, THRESHOLD_FRACTION};
pub use grid::{SizeGrid, Spacing, DEFAULT_GRID_COUNT, MIN_GRID_SIZES};

use crate::dataset::extract_dataset;
use crate::error::{Error, Result};
use crate::micrograph::Micrograph;
use crate::model::{
    cv_balanced_accuracy, fit_logistic, fit_mlp, tune_mlp, FitReport, Model, ModelKind,
    OptimizerSettings, DEFAULT_LAMBDA,
};
use crate::score::{
    compute_score_field, estimate_covariance, whiten, CovarianceMode, DEFAULT_RIDGE_EPS,
};
use crate::window::{sweep_sizes, SizeStatistics};

/// Size warning fires when the selected RVE exceeds this fraction of the
/// shorter micrograph side.
pub const SIZE_WARNING_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Neighborhood side (odd).
    pub l_s: usize,
    pub model: ModelKind,
    pub lambda: f64,
    pub optimizer: OptimizerSettings,
    pub a_mode: CovarianceMode,
    /// `None` selects [`SizeGrid::default_for`] the score field.
    pub grid: Option<SizeGrid>,
    pub stride: usize,
    pub ridge_eps: f64,
    /// Folds for the cross-validated accuracy; 0 skips cross-validation. For
    /// the network the same folds also choose the SGD learning rate.
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            l_s: 21,
            model: ModelKind::Logistic,
            lambda: DEFAULT_LAMBDA,
            optimizer: OptimizerSettings::default(),
            a_mode: CovarianceMode::Full,
            grid: None,
            stride: 1,
            ridge_eps: DEFAULT_RIDGE_EPS,
            cv_folds: 5,
            seed: 0,
        }
    }
}

/// The `(w_k, D̄_k)` curve with the selected RVE size.
#[derive(Debug, Clone, PartialEq)]
pub struct RveCurve {
    pub points: Vec<SizeStatistics>,
    /// Micrograph scale, µm per pixel.
    pub scale: f64,
    pub a_mode: CovarianceMode,
    pub model_kind: ModelKind,
    pub elbow: Elbow,
    pub rve_pixels: usize,
    pub rve_physical: f64,
    pub size_warning: bool,
    /// Euclidean norm of the global mean score.
    pub mean_score_norm: f64,
    pub fit: FitReport,
    /// Micrograph `(height, width)`.
    pub micrograph_dims: (usize, usize),
    /// Score field `(rows, cols)`.
    pub field_dims: (usize, usize),
    pub score_dim: usize,
}

impl RveCurve {
    pub fn sizes(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.w).collect()
    }

    pub fn mean_d(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_d).collect()
    }

    pub fn elbow_pixels(&self) -> usize {
        self.points[self.elbow.elbow_index].w
    }

    /// Size picked by the threshold cross-check, if any.
    pub fn threshold_pixels(&self) -> Option<usize> {
        self.elbow.threshold_index.map(|k| self.points[k].w)
    }
}

/// Fits the configured model on `m`'s neighborhood dataset.
pub fn fit_model(m: &Micrograph, cfg: &PipelineConfig) -> Result<(Model, FitReport)> {
    let ds = extract_dataset(m, cfg.l_s)?;
    let opt = OptimizerSettings {
        seed: cfg.seed,
        ..cfg.optimizer.clone()
    };
    match cfg.model {
        ModelKind::Logistic => {
            let (model, mut report) = fit_logistic(&ds, cfg.lambda, &opt)?;
            if cfg.cv_folds > 0 {
                report.cv_balanced_accuracy = Some(cv_balanced_accuracy(
                    &ds,
                    ModelKind::Logistic,
                    cfg.cv_folds,
                    cfg.lambda,
                    &opt,
                    cfg.seed,
                )?);
            }
            Ok((Model::Logistic(model), report))
        }
        ModelKind::Mlp => {
            let (model, report) = if cfg.cv_folds > 0 {
                tune_mlp(&ds, cfg.lambda, &opt, cfg.cv_folds, cfg.seed)?
            } else {
                fit_mlp(&ds, cfg.lambda, &opt)?
            };
            Ok((Model::Mlp(model), report))
        }
    }
}

/// Runs the full size sweep on `m`.
pub fn run_sweep(m: &Micrograph, cfg: &PipelineConfig) -> Result<RveCurve> {
    let (model, fit) = fit_model(m, cfg)?;
    sweep_with_model(m, &model, fit, cfg)
}

/// Runs the sweep with an already fitted model (for example one read from a
/// checkpoint). `fit` is carried into the curve as is.
pub fn sweep_with_model(
    m: &Micrograph,
    model: &Model,
    fit: FitReport,
    cfg: &PipelineConfig,
) -> Result<RveCurve> {
    if cfg.stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let ds = extract_dataset(m, cfg.l_s)?;
    let (rows, cols) = (ds.interior_height(), ds.interior_width());
    let grid = match &cfg.grid {
        Some(g) => g.clone(),
        None => SizeGrid::default_for(rows, cols, cfg.l_s)?,
    };
    if grid.max() > rows.min(cols) {
        return Err(Error::Config(format!(
            "largest window size {} exceeds the {rows}x{cols} score field (l_s = {} leaves \
             a margin of {} pixels); the largest feasible size is {}",
            grid.max(),
            cfg.l_s,
            ds.margin(),
            rows.min(cols)
        )));
    }
    let field = compute_score_field(&ds, model)?;
    let mean_score_norm = field.global_mean().iter().map(|v| v * v).sum::<f64>().sqrt();
    let cov = estimate_covariance(&field, cfg.a_mode, cfg.ridge_eps)?;
    let z = whiten(&field, &cov)?;
    drop(field);
    let points = sweep_sizes(&z, grid.sizes(), cfg.stride)?;
    if points.iter().any(|p| !p.mean_d.is_finite()) {
        return Err(Error::Numerical("window statistic is not finite".into()));
    }
    let curve: Vec<(f64, f64)> = points.iter().map(|p| (p.w as f64, p.mean_d)).collect();
    let elbow = detect_elbow(&curve)?;
    let rve_pixels = points[elbow.rve_index].w;
    let side = m.height().min(m.width()) as f64;
    Ok(RveCurve {
        scale: m.scale(),
        a_mode: cfg.a_mode,
        model_kind: model.kind(),
        rve_pixels,
        rve_physical: rve_pixels as f64 * m.scale(),
        size_warning: rve_pixels as f64 > SIZE_WARNING_FRACTION * side,
        elbow,
        points,
        mean_score_norm,
        fit,
        micrograph_dims: (m.height(), m.width()),
        field_dims: (rows, cols),
        score_dim: z.dim(),
    })
}
