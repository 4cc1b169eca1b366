//! Fits both classifiers to the neighborhood dataset of a Boolean-disk
//! micrograph and reports their cross-validated balanced accuracy.

use rve_scope::micrograph::{generate, GeneratorSpec};
use rve_scope::model::ModelKind;
use rve_scope::rve::{fit_model, PipelineConfig};

fn main() -> rve_scope::Result<()> {
    let m = generate(&GeneratorSpec::boolean_disks(0.2, 4.0, 7), 160, 160)?;
    for kind in [ModelKind::Logistic, ModelKind::Mlp] {
        let cfg = PipelineConfig {
            l_s: 7,
            model: kind,
            cv_folds: 3,
            ..Default::default()
        };
        let (model, fit) = fit_model(&m, &cfg)?;
        println!(
            "{kind:<8} inputs {:>4}  score dim {:>3}  nll {:.4}  |grad| {:.1e}  balanced accuracy {:.4}",
            model.input_dim(),
            model.score_dim(),
            fit.final_nll,
            fit.grad_inf_norm,
            fit.cv_balanced_accuracy.unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
