//! A micrograph whose halves differ in particle content keeps a large window
//! statistic even at large window sizes; a stationary one does not.

use rve_scope::micrograph::{generate, GeneratorSpec};
use rve_scope::rve::{run_sweep, PipelineConfig, SizeGrid};
use rve_scope::score::CovarianceMode;

fn main() -> rve_scope::Result<()> {
    let cfg = PipelineConfig {
        l_s: 3,
        a_mode: CovarianceMode::Diag,
        grid: Some(SizeGrid::linear(8, 160, 8)?),
        cv_folds: 0,
        ..Default::default()
    };
    let two = run_sweep(&generate(&GeneratorSpec::two_region(0.05, 0.20, 3.0, 42), 512, 512)?, &cfg)?;
    let flat = run_sweep(&generate(&GeneratorSpec::boolean_disks(0.125, 3.0, 42), 512, 512)?, &cfg)?;
    println!("{:>4} {:>12} {:>12} {:>7}", "w", "two-region", "stationary", "ratio");
    for (a, b) in two.points.iter().zip(&flat.points) {
        println!("{:>4} {:>12.4e} {:>12.4e} {:>7.2}", a.w, a.mean_d, b.mean_d, a.mean_d / b.mean_d);
    }
    Ok(())
}
