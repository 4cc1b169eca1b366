//! End-to-end run on a micrograph file (or a generated one), writing the
//! curve CSV and plot next to it.
//!
//!     cargo run --release --example full_pipeline -- micrograph.pgm

use std::path::PathBuf;

use rve_scope::cli::output::{csv_text, curve_rows, svg_plot, write_text};
use rve_scope::micrograph::{generate, load_micrograph, GeneratorSpec};
use rve_scope::rve::{run_sweep, PipelineConfig};
use rve_scope::score::CovarianceMode;

fn main() -> rve_scope::Result<()> {
    let (m, stem) = match std::env::args().nth(1) {
        Some(p) => (load_micrograph(&p, None, None)?, PathBuf::from(p)),
        None => (
            generate(&GeneratorSpec::boolean_disks(0.10, 6.0, 42), 384, 384)?,
            PathBuf::from("disks"),
        ),
    };
    let cfg = PipelineConfig {
        l_s: 9,
        a_mode: CovarianceMode::Diag,
        cv_folds: 0,
        ..Default::default()
    };
    let curve = run_sweep(&m, &cfg)?;
    for p in &curve.points {
        println!("w {:>4}  N_k {:>7}  D {:.4e}", p.w, p.n_positions, p.mean_d);
    }
    println!(
        "RVE {} px = {:.3} um (elbow at {} px, low confidence: {})",
        curve.rve_pixels,
        curve.rve_physical,
        curve.elbow_pixels(),
        curve.elbow.low_confidence()
    );

    let csv = stem.with_extension("curve.csv");
    let svg = stem.with_extension("curve.svg");
    write_text(&csv, &csv_text(&curve_rows(&curve)))?;
    let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.w as f64, p.mean_d)).collect();
    write_text(&svg, &svg_plot(&pts, curve.rve_pixels as f64))?;
    println!("wrote {} and {}", csv.display(), svg.display());
    Ok(())
}
