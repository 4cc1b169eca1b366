use crate::error::{Error, Result};

use super::MIN_GRID_SIZES;

/// Chord distances below this mark the elbow as weakly defined.
pub const LOW_CONFIDENCE_DISTANCE: f64 = 0.05;

/// Fraction of the curve maximum used by the threshold cross-check.
pub const THRESHOLD_FRACTION: f64 = 0.1;

const TIE_TOLERANCE: f64 = 1e-12;

/// Outcome of elbow detection on a `(w, D̄)` curve. Indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Elbow {
    /// Point farthest from the first-to-last chord after normalizing both axes.
    pub elbow_index: usize,
    /// Selected size: the first grid point right of the elbow.
    pub rve_index: usize,
    /// Perpendicular distance of every point to the chord, normalized axes.
    pub distances: Vec<f64>,
    pub max_distance: f64,
    /// Smallest index with `D̄ <= 0.1 max D̄`, if any.
    pub threshold_index: Option<usize>,
}

impl Elbow {
    /// The selection rules agree within one grid step.
    pub fn rules_agree(&self) -> bool {
        self.threshold_index
            .is_some_and(|t| t.abs_diff(self.rve_index) <= 1)
    }

    pub fn low_confidence(&self) -> bool {
        self.max_distance < LOW_CONFIDENCE_DISTANCE || !self.rules_agree()
    }
}

/// Locates the knee of a decreasing curve by maximum distance to its chord.
///
/// Both axes are mapped affinely onto `[0, 1]` first, so the answer does not
/// depend on units. Only interior points are candidates; ties go to the
/// smallest index.
pub fn detect_elbow(points: &[(f64, f64)]) -> Result<Elbow> {
    let k = points.len();
    if k < MIN_GRID_SIZES {
        return Err(Error::InvalidInput(format!(
            "elbow detection needs at least {MIN_GRID_SIZES} points, got {k}"
        )));
    }
    if points.iter().any(|&(w, d)| !w.is_finite() || !d.is_finite() || d < 0.0) {
        return Err(Error::Numerical(
            "curve values must be finite and non-negative".into(),
        ));
    }
    if points.windows(2).any(|p| p[1].0 <= p[0].0) {
        return Err(Error::InvalidInput(
            "curve sizes must be strictly increasing".into(),
        ));
    }
    let (w_lo, w_hi) = (points[0].0, points[k - 1].0);
    let d_min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let d_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if d_max - d_min <= 1e-12 * d_max.abs() {
        return Err(Error::Numerical("no elbow: curve flat".into()));
    }
    let norm: Vec<(f64, f64)> = points
        .iter()
        .map(|&(w, d)| ((w - w_lo) / (w_hi - w_lo), (d - d_min) / (d_max - d_min)))
        .collect();
    let (x0, y0) = norm[0];
    let (x1, y1) = norm[k - 1];
    let (dx, dy) = (x1 - x0, y1 - y0);
    let chord = dx.hypot(dy);
    let distances: Vec<f64> = norm
        .iter()
        .map(|&(x, y)| (dx * (y - y0) - dy * (x - x0)).abs() / chord)
        .collect();
    let max_distance = distances[1..k - 1]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let elbow_index = (1..k - 1)
        .find(|&i| distances[i] >= max_distance - TIE_TOLERANCE)
        .expect("interior point exists");
    let rve_index = (elbow_index + 1).min(k - 1);
    let threshold_index = points.iter().position(|p| p.1 <= THRESHOLD_FRACTION * d_max);
    Ok(Elbow {
        elbow_index,
        rve_index,
        distances,
        max_distance,
        threshold_index,
    })
}
