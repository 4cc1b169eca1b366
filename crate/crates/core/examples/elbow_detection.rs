//! Elbow selection on a hand-made decay curve, or on a curve CSV written by
//! `rve-scope run --csv`.

use std::path::Path;

use rve_scope::cli::output::read_csv;
use rve_scope::rve::detect_elbow;

fn main() -> rve_scope::Result<()> {
    let points: Vec<(f64, f64)> = match std::env::args().nth(1) {
        Some(path) => read_csv(Path::new(&path))?
            .iter()
            .map(|r| (r.w_px as f64, r.d_bar))
            .collect(),
        None => (1..=12)
            .map(|k| {
                let w = 20.0 * k as f64;
                (w, 1.0 / (1.0 + (w / 60.0).powi(3)))
            })
            .collect(),
    };
    let elbow = detect_elbow(&points)?;
    for (k, (&(w, d), dist)) in points.iter().zip(&elbow.distances).enumerate() {
        let mark = if k == elbow.rve_index { "  <- RVE" } else if k == elbow.elbow_index { "  <- elbow" } else { "" };
        println!("{w:>6} {d:>12.4e} {dist:>8.4}{mark}");
    }
    println!(
        "threshold rule: {:?}, rules agree: {}, low confidence: {}",
        elbow.threshold_index.map(|k| points[k].0),
        elbow.rules_agree(),
        elbow.low_confidence()
    );
    Ok(())
}
