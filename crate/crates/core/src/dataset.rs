//! Supervised pixel-prediction dataset built from a micrograph.
//!
//! Every interior pixel (one with a full `l_s x l_s` neighbourhood) is a
//! sample: the response is the pixel itself, the input is the rest of its
//! neighbourhood. Inputs are never copied out; they are read from the
//! micrograph on demand.
//!
//! Input layout: the neighbourhood is scanned row-major from its top-left
//! corner and the centre is skipped, so input `j` of a sample centred at
//! `(r, c)` is the micrograph pixel at `(r - m + dr, c - m + dc)` where
//! `(dr, dc) = offsets()[j]` and `m = (l_s - 1) / 2`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::micrograph::Micrograph;

/// Row blocks used for deterministic parallel reductions.
const ROW_BLOCK: usize = 8;

/// Read access to a labelled design matrix with binary or real inputs.
///
/// The bulk operations let implementations exploit structure (the
/// neighbourhood dataset evaluates them as shifted-image correlations).
pub trait Samples: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input dimension.
    fn dim(&self) -> usize;

    fn label(&self, i: usize) -> u8;

    fn input_into(&self, i: usize, out: &mut [f64]);

    /// `w · x_i`.
    fn dot(&self, i: usize, w: &[f64]) -> f64 {
        let mut x = vec![0.0; self.dim()];
        self.input_into(i, &mut x);
        x.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    /// `out[i] = w · x_i` for every sample.
    fn project(&self, w: &[f64], out: &mut [f64]);

    /// `sum_i coef[i] * x_i`.
    fn weighted_input_sum(&self, coef: &[f64]) -> Vec<f64>;

    fn labels(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct NeighborhoodDataset {
    micrograph: Arc<Micrograph>,
    plane: Arc<Vec<f64>>,
    l_s: usize,
    offsets: Vec<(usize, usize)>,
}

/// Builds the dataset for neighbourhood side `l_s` (odd, `3 <= l_s <= min(H, W)`).
pub fn extract_dataset(m: &Micrograph, l_s: usize) -> Result<NeighborhoodDataset> {
    NeighborhoodDataset::new(Arc::new(m.clone()), l_s)
}

impl NeighborhoodDataset {
    pub fn new(micrograph: Arc<Micrograph>, l_s: usize) -> Result<Self> {
        if l_s % 2 == 0 {
            return Err(Error::InvalidInput(format!(
                "neighbourhood size must be odd, got {l_s}"
            )));
        }
        if l_s < 3 {
            return Err(Error::InvalidInput(format!(
                "neighbourhood size must be >= 3, got {l_s}"
            )));
        }
        let side = micrograph.height().min(micrograph.width());
        if l_s > side {
            return Err(Error::InvalidInput(format!(
                "neighbourhood size {l_s} exceeds the smaller image side {side}"
            )));
        }
        let centre = (l_s - 1) / 2;
        let offsets = (0..l_s)
            .flat_map(|dr| (0..l_s).map(move |dc| (dr, dc)))
            .filter(|&(dr, dc)| (dr, dc) != (centre, centre))
            .collect();
        let plane = micrograph.phases().iter().map(|&p| f64::from(p)).collect();
        Ok(NeighborhoodDataset {
            micrograph,
            plane: Arc::new(plane),
            l_s,
            offsets,
        })
    }

    pub fn l_s(&self) -> usize {
        self.l_s
    }

    /// Width of the boundary band without a full neighbourhood.
    pub fn margin(&self) -> usize {
        (self.l_s - 1) / 2
    }

    pub fn interior_height(&self) -> usize {
        self.micrograph.height() - self.l_s + 1
    }

    pub fn interior_width(&self) -> usize {
        self.micrograph.width() - self.l_s + 1
    }

    /// Micrograph coordinates of sample 0.
    pub fn interior_origin(&self) -> (usize, usize) {
        (self.margin(), self.margin())
    }

    pub fn micrograph(&self) -> &Micrograph {
        &self.micrograph
    }

    /// Neighbourhood offsets `(dr, dc)` relative to the top-left corner of
    /// the neighbourhood, in input order.
    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }

    /// Interior `(row, col)` of sample `i`.
    pub fn position(&self, i: usize) -> (usize, usize) {
        let w = self.interior_width();
        (i / w, i % w)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.interior_width() + col
    }

    /// Interior-sized plane of input `j` across all samples.
    pub fn input_plane(&self, j: usize) -> Vec<f64> {
        let (dr, dc) = self.offsets[j];
        let (ih, iw, w) = (
            self.interior_height(),
            self.interior_width(),
            self.micrograph.width(),
        );
        let mut out = Vec::with_capacity(ih * iw);
        for r in 0..ih {
            let start = (r + dr) * w + dc;
            out.extend_from_slice(&self.plane[start..start + iw]);
        }
        out
    }

    fn plane_row(&self, interior_row: usize, dr: usize, dc: usize) -> &[f64] {
        let start = (interior_row + dr) * self.micrograph.width() + dc;
        &self.plane[start..start + self.interior_width()]
    }
}

impl Samples for NeighborhoodDataset {
    fn len(&self) -> usize {
        self.interior_height() * self.interior_width()
    }

    fn dim(&self) -> usize {
        self.l_s * self.l_s - 1
    }

    fn label(&self, i: usize) -> u8 {
        let (r, c) = self.position(i);
        let m = self.margin();
        self.micrograph.get(r + m, c + m)
    }

    fn input_into(&self, i: usize, out: &mut [f64]) {
        let (r, c) = self.position(i);
        let width = self.micrograph.width();
        let centre = self.margin();
        let mut slots = out.iter_mut();
        for dr in 0..self.l_s {
            let start = (r + dr) * width + c;
            for (dc, &v) in self.plane[start..start + self.l_s].iter().enumerate() {
                if dr == centre && dc == centre {
                    continue;
                }
                if let Some(slot) = slots.next() {
                    *slot = v;
                }
            }
        }
    }

    fn dot(&self, i: usize, w: &[f64]) -> f64 {
        let (r, c) = self.position(i);
        let width = self.micrograph.width();
        let mut acc = 0.0;
        let mut j = 0;
        let centre = self.margin();
        for dr in 0..self.l_s {
            let row = &self.plane[(r + dr) * width + c..(r + dr) * width + c + self.l_s];
            for (dc, &v) in row.iter().enumerate() {
                if dr == centre && dc == centre {
                    continue;
                }
                acc += w[j] * v;
                j += 1;
            }
        }
        acc
    }

    fn project(&self, w: &[f64], out: &mut [f64]) {
        let iw = self.interior_width();
        assert_eq!(out.len(), self.len());
        assert_eq!(w.len(), self.dim());
        out.par_chunks_mut(iw).enumerate().for_each(|(r, row)| {
            row.fill(0.0);
            for (&wj, &(dr, dc)) in w.iter().zip(&self.offsets) {
                let src = self.plane_row(r, dr, dc);
                for (o, &s) in row.iter_mut().zip(src) {
                    *o += wj * s;
                }
            }
        });
    }

    fn weighted_input_sum(&self, coef: &[f64]) -> Vec<f64> {
        let iw = self.interior_width();
        assert_eq!(coef.len(), self.len());
        let d = self.dim();
        let partials: Vec<Vec<f64>> = coef
            .par_chunks(iw * ROW_BLOCK)
            .enumerate()
            .map(|(b, block)| {
                let mut acc = vec![0.0; d];
                for (k, crow) in block.chunks(iw).enumerate() {
                    let r = b * ROW_BLOCK + k;
                    for (a, &(dr, dc)) in acc.iter_mut().zip(&self.offsets) {
                        *a += dot(crow, self.plane_row(r, dr, dc));
                    }
                }
                acc
            })
            .collect();
        sum_partials(partials, d)
    }
}

/// Dense in-memory samples, for synthetic designs that do not come from an
/// image (and for tests).
#[derive(Debug, Clone)]
pub struct DenseSamples {
    dim: usize,
    inputs: Vec<f64>,
    labels: Vec<u8>,
}

impl DenseSamples {
    pub fn new(dim: usize, inputs: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if dim == 0 || inputs.len() != dim * labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} input values do not form {} rows of dimension {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        Ok(DenseSamples {
            dim,
            inputs,
            labels,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies every sample of another design into dense storage.
    pub fn collect<S: Samples + ?Sized>(src: &S) -> Self {
        let dim = src.dim();
        let mut inputs = vec![0.0; dim * src.len()];
        for (i, row) in inputs.chunks_mut(dim).enumerate() {
            src.input_into(i, row);
        }
        DenseSamples {
            dim,
            inputs,
            labels: src.labels(),
        }
    }
}

impl Samples for DenseSamples {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    fn input_into(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(i));
    }

    fn dot(&self, i: usize, w: &[f64]) -> f64 {
        dot(self.row(i), w)
    }

    fn project(&self, w: &[f64], out: &mut [f64]) {
        out.par_iter_mut()
            .enumerate()
            .for_each(|(i, o)| *o = dot(self.row(i), w));
    }

    fn weighted_input_sum(&self, coef: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let block = 256;
        let partials: Vec<Vec<f64>> = coef
            .par_chunks(block)
            .enumerate()
            .map(|(b, cs)| {
                let mut acc = vec![0.0; d];
                for (k, &c) in cs.iter().enumerate() {
                    for (a, &x) in acc.iter_mut().zip(self.row(b * block + k)) {
                        *a += c * x;
                    }
                }
                acc
            })
            .collect();
        sum_partials(partials, d)
    }

    fn labels(&self) -> Vec<u8> {
        self.labels.clone()
    }
}

/// Four-lane dot product; the fixed lane split keeps results reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        lanes[0] += x[0] * y[0];
        lanes[1] += x[1] * y[1];
        lanes[2] += x[2] * y[2];
        lanes[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

fn sum_partials(partials: Vec<Vec<f64>>, d: usize) -> Vec<f64> {
    let mut total = vec![0.0; d];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}
