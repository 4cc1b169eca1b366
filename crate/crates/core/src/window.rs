//! Moving-window statistics over a whitened score field.
//!
//! For a window of side `w` centered at pixel `i`, `D_i = ‖z̄_i‖²` where `z̄_i`
//! is the mean of the whitened scores inside the window. Window sums come from
//! per-component summed-area tables, so every position costs `O(d)` whatever
//! the window size.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::score::WhitenedField;

/// Components whose summed-area tables are held in memory at once.
const COMPONENT_BLOCK: usize = 16;

/// Square window geometry.
///
/// A window centered at `(r, c)` covers rows `r - (w-1)/2 ..= r + w/2` (and
/// the same for columns), so for even `w` the center is the top-left pixel of
/// the central 2x2 block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub w: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(w: usize, stride: usize) -> Result<Self> {
        if w == 0 {
            return Err(Error::InvalidInput("window side must be at least 1".into()));
        }
        if stride == 0 {
            return Err(Error::InvalidInput("stride must be at least 1".into()));
        }
        Ok(WindowSpec { w, stride })
    }

    /// Pixels per window.
    pub fn n_k(&self) -> usize {
        self.w * self.w
    }

    /// Rows (or columns) above / left of the center.
    pub fn before(&self) -> usize {
        (self.w - 1) / 2
    }

    /// Rows (or columns) below / right of the center.
    pub fn after(&self) -> usize {
        self.w / 2
    }

    /// Number of strided window positions along an axis of length `len`.
    pub fn positions_along(&self, len: usize) -> usize {
        if self.w > len {
            0
        } else {
            (len - self.w) / self.stride + 1
        }
    }

    /// Number of strided positions in a `rows x cols` field.
    pub fn n_positions(&self, rows: usize, cols: usize) -> usize {
        self.positions_along(rows) * self.positions_along(cols)
    }

    /// Whether the window centered at `(r, c)` lies inside a `rows x cols` field.
    pub fn is_valid(&self, rows: usize, cols: usize, (r, c): (usize, usize)) -> bool {
        r >= self.before()
            && c >= self.before()
            && r + self.after() < rows
            && c + self.after() < cols
    }
}

/// Per-component summed-area tables with a leading row and column of zeros:
/// `prefix[(r+1)(cols+1) + (c+1)]` is the sum over rows `0..=r`, cols `0..=c`.
#[derive(Debug, Clone)]
pub struct IntegralField {
    rows: usize,
    cols: usize,
    prefix: Vec<Vec<f64>>,
}

pub fn build_integral(z: &WhitenedField) -> IntegralField {
    let (rows, cols) = (z.rows(), z.cols());
    let prefix = z
        .component_planes(0..z.dim())
        .par_iter()
        .map(|p| summed_area(p, rows, cols))
        .collect();
    IntegralField { rows, cols, prefix }
}

fn summed_area(plane: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let stride = cols + 1;
    let mut out = vec![0.0; (rows + 1) * stride];
    for r in 0..rows {
        let mut run = 0.0;
        for c in 0..cols {
            run += plane[r * cols + c];
            out[(r + 1) * stride + c + 1] = out[r * stride + c + 1] + run;
        }
    }
    out
}

/// Sum over rows `r0..r1` and cols `c0..c1` (half open).
#[inline]
fn rect_sum(p: &[f64], cols: usize, r0: usize, c0: usize, r1: usize, c1: usize) -> f64 {
    let s = cols + 1;
    p[r1 * s + c1] - p[r0 * s + c1] - p[r1 * s + c0] + p[r0 * s + c0]
}

impl IntegralField {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.prefix.len()
    }

    /// Padded prefix array of component `j`, row-major `(rows+1) x (cols+1)`.
    pub fn prefix(&self, j: usize) -> &[f64] {
        &self.prefix[j]
    }

    /// Sum of component `j` over rows `r0..r1`, cols `c0..c1` (half open).
    pub fn rect_sum(&self, j: usize, r0: usize, c0: usize, r1: usize, c1: usize) -> f64 {
        rect_sum(&self.prefix[j], self.cols, r0, c0, r1, c1)
    }
}

/// Mean whitened vector over the window centered at `pos`.
pub fn window_mean_at(
    ints: &IntegralField,
    spec: &WindowSpec,
    pos: (usize, usize),
) -> Result<Vec<f64>> {
    if !spec.is_valid(ints.rows, ints.cols, pos) {
        return Err(Error::InvalidInput(format!(
            "window of side {} centered at {:?} does not fit in a {}x{} field",
            spec.w, pos, ints.rows, ints.cols
        )));
    }
    let (r0, c0) = (pos.0 - spec.before(), pos.1 - spec.before());
    let n_k = spec.n_k() as f64;
    Ok((0..ints.dim())
        .map(|j| ints.rect_sum(j, r0, c0, r0 + spec.w, c0 + spec.w) / n_k)
        .collect())
}

/// `D̄_k` and the spread of `D_{i,k}` for one window size.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeStatistics {
    pub w: usize,
    /// Positions actually evaluated (after striding).
    pub n_positions: usize,
    pub mean_d: f64,
    pub min_d: f64,
    pub median_d: f64,
    pub max_d: f64,
}

pub fn sweep_size(z: &WhitenedField, w: usize, stride: usize) -> Result<SizeStatistics> {
    Ok(sweep_sizes(z, &[w], stride)?.remove(0))
}

/// Evaluates every size in one pass over the score components.
///
/// Components are whitened and integrated a block at a time; each block adds
/// its squared window means into per-position accumulators, so memory holds
/// `COMPONENT_BLOCK` tables plus one `D` value per position and size. The
/// accumulation order is fixed, so results do not depend on the thread count.
pub fn sweep_sizes(z: &WhitenedField, sizes: &[usize], stride: usize) -> Result<Vec<SizeStatistics>> {
    let (rows, cols) = (z.rows(), z.cols());
    let max_w = rows.min(cols);
    let specs = sizes
        .iter()
        .map(|&w| {
            let spec = WindowSpec::new(w, stride)?;
            if w > max_w {
                return Err(Error::InvalidInput(format!(
                    "window size {w} exceeds the {rows}x{cols} score field; the largest feasible size is {max_w}"
                )));
            }
            Ok(spec)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut d_values: Vec<Vec<f64>> = specs
        .iter()
        .map(|s| vec![0.0; s.n_positions(rows, cols)])
        .collect();

    let d = z.dim();
    let mut j0 = 0;
    while j0 < d {
        let j1 = (j0 + COMPONENT_BLOCK).min(d);
        let tables: Vec<Vec<f64>> = z
            .component_planes(j0..j1)
            .par_iter()
            .map(|p| summed_area(p, rows, cols))
            .collect();
        for (spec, acc) in specs.iter().zip(d_values.iter_mut()) {
            accumulate(&tables, cols, spec, acc);
        }
        j0 = j1;
    }

    Ok(specs
        .iter()
        .zip(d_values)
        .map(|(spec, values)| summarize(spec.w, values))
        .collect())
}

fn accumulate(tables: &[Vec<f64>], cols: usize, spec: &WindowSpec, acc: &mut [f64]) {
    let per_row = spec.positions_along(cols);
    if per_row == 0 {
        return;
    }
    let w = spec.w;
    let inv = 1.0 / spec.n_k() as f64;
    acc.par_chunks_mut(per_row).enumerate().for_each(|(pr, row)| {
        let r0 = pr * spec.stride;
        for (pc, slot) in row.iter_mut().enumerate() {
            let c0 = pc * spec.stride;
            let mut sum = 0.0;
            for t in tables {
                let m = rect_sum(t, cols, r0, c0, r0 + w, c0 + w) * inv;
                sum += m * m;
            }
            *slot += sum;
        }
    });
}

fn summarize(w: usize, mut values: Vec<f64>) -> SizeStatistics {
    let n = values.len();
    let mean_d = pairwise_sum(&values) / n as f64;
    let min_d = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_d = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median_d = if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    SizeStatistics {
        w,
        n_positions: n,
        mean_d,
        min_d,
        median_d,
        max_d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(rows: usize, cols: usize, values: Vec<f64>) -> WhitenedField {
        WhitenedField::from_values(rows, cols, 1, values).unwrap()
    }

    #[test]
    fn one_pixel_prefix() {
        let ints = build_integral(&scalar(1, 1, vec![2.5]));
        assert_eq!(ints.prefix(0), &[0.0, 0.0, 0.0, 2.5]);
    }

    #[test]
    fn zero_field_prefix() {
        let ints = build_integral(&scalar(3, 4, vec![0.0; 12]));
        assert!(ints.prefix(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_by_three_center() {
        let ints = build_integral(&scalar(3, 3, (1..=9).map(f64::from).collect()));
        let spec = WindowSpec::new(3, 1).unwrap();
        assert_eq!(window_mean_at(&ints, &spec, (1, 1)).unwrap(), vec![5.0]);
        assert!(window_mean_at(&ints, &spec, (0, 1)).is_err());
        let one = WindowSpec::new(1, 1).unwrap();
        assert_eq!(window_mean_at(&ints, &one, (2, 0)).unwrap(), vec![7.0]);
    }

    #[test]
    fn constant_field_mean() {
        let ints = build_integral(&scalar(6, 5, vec![-1.25; 30]));
        for w in 1..=5 {
            let spec = WindowSpec::new(w, 1).unwrap();
            let m = window_mean_at(&ints, &spec, (spec.before(), spec.before())).unwrap();
            assert_eq!(m, vec![-1.25]);
        }
    }

    #[test]
    fn even_window_anchor() {
        let spec = WindowSpec::new(4, 1).unwrap();
        assert_eq!((spec.before(), spec.after()), (1, 2));
        assert!(spec.is_valid(4, 4, (1, 1)));
        assert!(!spec.is_valid(4, 4, (2, 1)));
    }

    #[test]
    fn position_counts() {
        let s3 = WindowSpec::new(3, 1).unwrap();
        let s5 = WindowSpec::new(5, 1).unwrap();
        assert_eq!(s3.n_positions(10, 10), 64);
        assert_eq!(s5.n_positions(10, 10), 36);
        assert_eq!(WindowSpec::new(3, 4).unwrap().n_positions(10, 10), 4);
    }

    #[test]
    fn oversized_window_names_limit() {
        let z = scalar(4, 6, vec![1.0; 24]);
        match sweep_size(&z, 5, 1) {
            Err(Error::InvalidInput(msg)) => assert!(msg.contains("largest feasible size is 4")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn median_of_even_count() {
        let s = summarize(2, vec![4.0, 1.0, 3.0, 2.0]);
        assert_eq!((s.min_d, s.median_d, s.max_d, s.mean_d), (1.0, 2.5, 4.0, 2.5));
        let s = summarize(2, vec![4.0, 1.0, 3.0]);
        assert_eq!(s.median_d, 3.0);
    }
}
