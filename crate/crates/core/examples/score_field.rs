//! Score field, covariance and whitening for a fitted logistic model.

use rve_scope::dataset::extract_dataset;
use rve_scope::micrograph::{generate, GeneratorSpec};
use rve_scope::rve::{fit_model, PipelineConfig};
use rve_scope::score::{compute_score_field, estimate_covariance, whiten, CovarianceMode};

fn main() -> rve_scope::Result<()> {
    let m = generate(&GeneratorSpec::boolean_disks(0.15, 5.0, 3), 200, 200)?;
    let cfg = PipelineConfig {
        l_s: 5,
        cv_folds: 0,
        ..Default::default()
    };
    let (model, _) = fit_model(&m, &cfg)?;
    let ds = extract_dataset(&m, cfg.l_s)?;
    let field = compute_score_field(&ds, &model)?;
    println!("score field {}x{}, d = {}", field.rows(), field.cols(), field.dim());

    let mean_inf = field.global_mean().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    println!("global mean score, inf-norm: {mean_inf:.2e}");

    for mode in [CovarianceMode::Full, CovarianceMode::Diag] {
        let cov = estimate_covariance(&field, mode, 1e-8)?;
        let z = whiten(&field, &cov)?;
        // the whitened field should have (near) identity covariance
        let n = z.len() as f64;
        let planes = z.component_planes(0..z.dim());
        let var: Vec<f64> = planes
            .iter()
            .map(|p| {
                let mu = p.iter().sum::<f64>() / n;
                p.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n
            })
            .collect();
        let lo = var.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = var.iter().copied().fold(0.0, f64::max);
        println!(
            "{mode}: trace {:.3e}, ridge {:.1e}, whitened variances in [{lo:.4}, {hi:.4}]",
            cov.trace(),
            cov.ridge
        );
    }
    Ok(())
}
