use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Smallest number of sizes that leaves an interior point for the elbow.
pub const MIN_GRID_SIZES: usize = 4;

/// Sizes in the default geometric grid.
pub const DEFAULT_GRID_COUNT: usize = 12;

/// How [`SizeGrid::spaced`] distributes sizes between its end points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Geometric,
}

impl fmt::Display for Spacing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spacing::Linear => "linear",
            Spacing::Geometric => "geometric",
        })
    }
}

impl FromStr for Spacing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Spacing::Linear),
            "geometric" => Ok(Spacing::Geometric),
            other => Err(Error::Config(format!(
                "unknown spacing {other:?} (expected linear or geometric)"
            ))),
        }
    }
}

/// Strictly increasing candidate window sides, in pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeGrid {
    sizes: Vec<usize>,
}

impl SizeGrid {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < MIN_GRID_SIZES {
            return Err(Error::Config(format!(
                "size grid needs at least {MIN_GRID_SIZES} sizes, got {}",
                sizes.len()
            )));
        }
        if sizes[0] == 0 {
            return Err(Error::Config("window sizes must be at least 1".into()));
        }
        if sizes.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Config(
                "window sizes must be strictly increasing".into(),
            ));
        }
        Ok(SizeGrid { sizes })
    }

    /// `start, start + step, ...` up to and including `end` when it lands on the grid.
    pub fn linear(start: usize, end: usize, step: usize) -> Result<Self> {
        if step == 0 || start > end {
            return Err(Error::Config(format!(
                "invalid linear grid {start}:{end}:{step}"
            )));
        }
        SizeGrid::new((start..=end).step_by(step).collect())
    }

    /// `count` sizes spaced geometrically from `min` to `max`.
    pub fn geometric(min: usize, max: usize, count: usize) -> Result<Self> {
        SizeGrid::spaced(min, max, count, Spacing::Geometric)
    }

    /// `count` sizes from `min` to `max`, rounded to whole pixels and nudged
    /// apart where rounding would collide.
    pub fn spaced(min: usize, max: usize, count: usize, spacing: Spacing) -> Result<Self> {
        if min == 0 || max < min || count < 2 || max - min + 1 < count {
            return Err(Error::Config(format!(
                "cannot fit {count} distinct sizes between {min} and {max} pixels"
            )));
        }
        let mut sizes: Vec<usize> = Vec::with_capacity(count);
        for k in 0..count {
            let t = k as f64 / (count - 1) as f64;
            let exact = match spacing {
                Spacing::Linear => min as f64 + t * (max - min) as f64,
                Spacing::Geometric => min as f64 * (max as f64 / min as f64).powf(t),
            };
            let mut w = exact.round() as usize;
            if let Some(&prev) = sizes.last() {
                w = w.max(prev + 1);
            }
            // leave room for the sizes still to come
            w = w.min(max - (count - 1 - k));
            sizes.push(w);
        }
        sizes[count - 1] = max;
        SizeGrid::new(sizes)
    }

    /// Geometric grid from `max(8, 2 l_s)` to half the shorter side of a
    /// `rows x cols` score field.
    pub fn default_for(rows: usize, cols: usize, l_s: usize) -> Result<Self> {
        let lo = (2 * l_s).max(8);
        let hi = rows.min(cols) / 2;
        SizeGrid::geometric(lo, hi, DEFAULT_GRID_COUNT).map_err(|_| {
            Error::Config(format!(
                "a {rows}x{cols} score field is too small for the default grid \
                 ({DEFAULT_GRID_COUNT} sizes from {lo} to {hi}); pass an explicit grid"
            ))
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn max(&self) -> usize {
        *self.sizes.last().expect("grid is non-empty")
    }

    /// Every size multiplied by `factor`.
    pub fn scaled(&self, factor: usize) -> Result<Self> {
        SizeGrid::new(self.sizes.iter().map(|w| w * factor).collect())
    }
}

impl FromStr for SizeGrid {
    type Err = Error;

    /// Accepts `start:end:step` or a comma-separated list.
    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid window size {t:?} in grid {s:?}")))
        };
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!(
                    "grid {s:?} must look like start:end:step"
                )));
            }
            SizeGrid::linear(num(parts[0])?, num(parts[1])?, num(parts[2])?)
        } else {
            SizeGrid::new(s.split(',').map(num).collect::<Result<_>>()?)
        }
    }
}

impl fmt::Display for SizeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, w) in self.sizes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{w}")?;
        }
        Ok(())
    }
}
