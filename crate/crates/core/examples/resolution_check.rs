//! The same microstructure at two resolutions should give the same physical
//! RVE size when the neighborhood and grid are scaled along with it.

use rve_scope::micrograph::{generate, upsample_nn, GeneratorSpec};
use rve_scope::rve::{run_sweep, PipelineConfig, SizeGrid};
use rve_scope::score::CovarianceMode;

fn main() -> rve_scope::Result<()> {
    let base = generate(&GeneratorSpec::boolean_disks(0.10, 4.0, 11), 256, 256)?.with_scale(0.1)?;
    for factor in [1, 2] {
        let m = upsample_nn(&base, factor)?;
        let cfg = PipelineConfig {
            l_s: 6 * factor + 1,
            a_mode: CovarianceMode::Diag,
            grid: Some(SizeGrid::linear(6 * factor, 96 * factor, 6 * factor)?),
            cv_folds: 0,
            ..Default::default()
        };
        let curve = run_sweep(&m, &cfg)?;
        println!(
            "x{factor}: {}x{} px at {} um/px, l_s {:>2}: RVE {:>3} px = {:.2} um",
            m.height(),
            m.width(),
            m.scale(),
            cfg.l_s,
            curve.rve_pixels,
            curve.rve_physical
        );
    }
    Ok(())
}
