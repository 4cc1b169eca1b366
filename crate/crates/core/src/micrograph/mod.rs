//! Two-phase micrographs: the binary image model, thresholding, resampling,
//! file I/O and synthetic generators.
//!
//! Phase encoding is fixed: `0` is the matrix phase, `1` the particle phase,
//! so the volume fraction is simply the mean of the grid.

mod generate;
mod pnm;

pub use generate::{generate, GeneratorKind, GeneratorSpec};
pub use pnm::{
    load_micrograph, read_intensity_image, read_scale_sidecar, save_pgm, sidecar_path,
    write_scale_sidecar, IntensityImage, DEFAULT_SCALE,
};

use crate::error::{Error, Result};

/// A binarized micrograph with its physical pixel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Micrograph {
    height: usize,
    width: usize,
    phases: Vec<u8>,
    scale: f64,
}

impl Micrograph {
    /// Builds a micrograph from a row-major grid of phase labels.
    pub fn new(height: usize, width: usize, phases: Vec<u8>, scale: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "micrograph must be at least 1x1, got {height}x{width}"
            )));
        }
        if phases.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "phase grid has {} cells, expected {height}x{width}",
                phases.len()
            )));
        }
        if let Some(bad) = phases.iter().find(|&&p| p > 1) {
            return Err(Error::InvalidInput(format!(
                "phase labels must be 0 or 1, found {bad}"
            )));
        }
        check_scale(scale)?;
        Ok(Micrograph {
            height,
            width,
            phases,
            scale,
        })
    }

    /// Convenience constructor from nested rows, mostly for tests and examples.
    pub fn from_rows(rows: &[&[u8]], scale: f64) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        let phases = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Micrograph::new(height, width, phases, scale)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Micrometres per pixel.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        check_scale(scale)?;
        self.scale = scale;
        Ok(self)
    }

    pub fn phases(&self) -> &[u8] {
        &self.phases
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.phases[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.phases[row * self.width..(row + 1) * self.width]
    }

    pub fn particle_count(&self) -> usize {
        self.phases.iter().filter(|&&p| p == 1).count()
    }

    pub fn volume_fraction(&self) -> f64 {
        self.particle_count() as f64 / self.phases.len() as f64
    }

    /// Volume fraction of the sub-rectangle `rows x cols` (half-open ranges).
    pub fn region_volume_fraction(
        &self,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> f64 {
        let area = rows.len() * cols.len();
        let count: usize = rows
            .map(|r| self.row(r)[cols.clone()].iter().filter(|&&p| p == 1).count())
            .sum();
        count as f64 / area as f64
    }

    /// Physical side lengths `(height, width)` in micrometres.
    pub fn physical_size(&self) -> (f64, f64) {
        (self.height as f64 * self.scale, self.width as f64 * self.scale)
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidInput(format!(
            "scale must be a positive finite length per pixel, got {scale}"
        )));
    }
    Ok(())
}

/// Maps every intensity `>= threshold` to the particle phase.
pub fn binarize(image: &IntensityImage, threshold: u16, scale: f64) -> Result<Micrograph> {
    let phases = image
        .pixels
        .iter()
        .map(|&v| u8::from(u16::from(v) >= threshold))
        .collect();
    Micrograph::new(image.height, image.width, phases, scale)
}

/// Otsu's threshold for an 8-bit histogram, in the `>= threshold` convention.
///
/// Every split `t` in `1..=maxval` separates `{v < t}` from `{v >= t}`. When
/// several splits reach the same between-class variance (an empty histogram
/// gap) the middle of that plateau is returned. An image with a single
/// intensity level has no informative split; the midpoint of the range is
/// returned in that case.
pub fn otsu_threshold(histogram: &[u64]) -> u16 {
    let levels = histogram.len();
    assert!(levels >= 2, "histogram needs at least two levels");
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return (levels / 2) as u16;
    }
    let total_f = total as f64;
    let sum_all: f64 = histogram
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();

    let mut best = 0.0f64;
    let mut plateau = (1usize, 1usize);
    let mut count_below = 0u64;
    let mut sum_below = 0.0;
    for t in 1..levels {
        count_below += histogram[t - 1];
        sum_below += (t - 1) as f64 * histogram[t - 1] as f64;
        let count_above = total - count_below;
        let between = if count_below == 0 || count_above == 0 {
            0.0
        } else {
            let w0 = count_below as f64 / total_f;
            let w1 = count_above as f64 / total_f;
            let mu0 = sum_below / count_below as f64;
            let mu1 = (sum_all - sum_below) / count_above as f64;
            w0 * w1 * (mu0 - mu1) * (mu0 - mu1)
        };
        let tol = 1e-12 * best;
        if between > best + tol {
            best = between;
            plateau = (t, t);
        } else if best > 0.0 && (between - best).abs() <= tol {
            plateau.1 = t;
        }
    }
    if best <= 0.0 {
        return (levels / 2) as u16;
    }
    ((plateau.0 + plateau.1) / 2) as u16
}

/// Nearest-neighbour upsampling: each pixel becomes a `factor x factor` block
/// and the scale shrinks by `factor`, so physical size is unchanged.
pub fn upsample_nn(m: &Micrograph, factor: usize) -> Result<Micrograph> {
    if factor == 0 {
        return Err(Error::InvalidInput("upsampling factor must be >= 1".into()));
    }
    let width = m.width * factor;
    let mut phases = Vec::with_capacity(m.phases.len() * factor * factor);
    for r in 0..m.height {
        let src = m.row(r);
        let start = phases.len();
        for &p in src {
            phases.extend(std::iter::repeat_n(p, factor));
        }
        for _ in 1..factor {
            phases.extend_from_within(start..start + width);
        }
    }
    Micrograph::new(m.height * factor, width, phases, m.scale / factor as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(height: usize, width: usize, pixels: Vec<u8>) -> IntensityImage {
        IntensityImage {
            height,
            width,
            maxval: 255,
            pixels,
        }
    }

    #[test]
    fn threshold_arithmetic() {
        let m = binarize(&image(2, 2, vec![0, 255, 0, 255]), 128, 1.0).unwrap();
        assert_eq!(m.phases(), &[0, 1, 0, 1]);
        let m = binarize(&image(2, 2, vec![10, 200, 200, 10]), 100, 1.0).unwrap();
        assert_eq!(m.phases(), &[0, 1, 1, 0]);
    }

    #[test]
    fn binary_grid_is_fixed_by_threshold_one() {
        let grid = vec![0, 1, 1, 0, 1, 1];
        let m = binarize(&image(2, 3, grid.clone()), 1, 1.0).unwrap();
        assert_eq!(m.phases(), grid.as_slice());
    }

    #[test]
    fn value_at_threshold_is_particle() {
        let m = binarize(&image(3, 3, vec![77; 9]), 77, 1.0).unwrap();
        assert_eq!(m.particle_count(), 9);
    }

    #[test]
    fn all_zero_image_is_all_matrix() {
        for t in [1, 50, 255] {
            let m = binarize(&image(4, 4, vec![0; 16]), t, 1.0).unwrap();
            assert_eq!(m.volume_fraction(), 0.0);
        }
    }

    #[test]
    fn rejects_bad_labels_and_scale() {
        assert!(Micrograph::new(1, 2, vec![0, 2], 1.0).is_err());
        assert!(Micrograph::new(1, 1, vec![0], 0.0).is_err());
        assert!(Micrograph::new(0, 1, vec![], 1.0).is_err());
        assert!(Micrograph::new(2, 2, vec![0; 3], 1.0).is_err());
    }

    #[test]
    fn otsu_between_modes() {
        let mut hist = vec![0u64; 256];
        hist[30] = 2048;
        hist[220] = 2048;
        let t = otsu_threshold(&hist);
        assert!(t > 30 && t < 220, "{t}");
    }

    #[test]
    fn otsu_single_level() {
        let mut hist = vec![0u64; 256];
        hist[0] = 100;
        assert_eq!(otsu_threshold(&hist), 128);
    }

    #[test]
    fn upsample_single_pixel() {
        let m = Micrograph::new(1, 1, vec![1], 0.9).unwrap();
        let up = upsample_nn(&m, 3).unwrap();
        assert_eq!(up.height(), 3);
        assert_eq!(up.phases(), &[1; 9]);
        assert!((up.scale() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn upsample_identity_and_zero() {
        let m = Micrograph::from_rows(&[&[0, 1], &[1, 1]], 2.0).unwrap();
        assert_eq!(upsample_nn(&m, 1).unwrap(), m);
        assert!(upsample_nn(&m, 0).is_err());
    }

    #[test]
    fn upsample_layout() {
        let m = Micrograph::from_rows(&[&[0, 1], &[0, 0]], 1.0).unwrap();
        let up = upsample_nn(&m, 2).unwrap();
        assert_eq!(up.volume_fraction(), 0.25);
        assert_eq!(
            up.phases(),
            &[0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0]
        );
    }

    #[test]
    fn region_fraction() {
        let m = Micrograph::from_rows(&[&[1, 0, 0, 0], &[1, 0, 1, 1]], 1.0).unwrap();
        assert_eq!(m.region_volume_fraction(0..2, 0..2), 0.5);
        assert_eq!(m.region_volume_fraction(0..2, 2..4), 0.5);
        assert_eq!(m.region_volume_fraction(0..1, 1..4), 0.0);
    }
}
