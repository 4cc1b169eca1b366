//! Simulation-free sizing of representative volume elements (RVEs) for
//! two-phase micrographs.
//!
//! The pipeline fits a parametric model of each pixel given its
//! neighbourhood, computes per-pixel Fisher score vectors, and sweeps square
//! moving windows of increasing size over the score field. For each size it
//! averages a Mahalanobis-type distance between the window-mean score and the
//! global mean score; the RVE size is the first window size past the elbow of
//! that curve.
//!
//! Stages, in pipeline order:
//!
//! 1. [`micrograph`]: binary images, I/O, synthetic generators.
//! 2. [`dataset`]: neighbourhood samples for every interior pixel.
//! 3. [`model`]: logistic regression and a one-hidden-layer network.
//! 4. [`score`]: score vectors, their covariance, and whitening.
//! 5. [`window`]: integral images and per-size window statistics.
//! 6. [`rve`]: the size sweep and elbow selection.
//! 7. [`cli`]: configuration, report, CSV and SVG output.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod micrograph;
pub mod model;
pub(crate) mod numeric;
pub mod rve;
pub mod score;
pub mod window;

pub use error::{Error, Result};
