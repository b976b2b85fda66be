//! Differentiable Gaussian splatting on the CPU with Haar-wavelet supervision.
//!
//! The crate is organised around the training pipeline:
//!
//! * [`image`] and [`scene`] ingest rasters, cameras and few-shot view splits,
//!   and generate synthetic scenes with exact poses.
//! * [`wavelet`] is the orthonormal 2D Haar transform used by every
//!   frequency-domain objective.
//! * [`losses`] holds the objectives (L1, SSIM, global and patch-wise sub-band
//!   losses, LF-energy patch selection, composite and multispectral totals),
//!   each returning a value and its gradient with respect to the render.
//! * [`render`] projects and alpha-composites Gaussians and back-propagates
//!   image gradients to every primitive parameter.
//! * [`train`] runs the optimisation loop with staged frequency supervision
//!   and residual-gated densification.
//! * [`metrics`] and [`bench`] evaluate checkpoints and run the
//!   four-configuration benchmark.

pub mod bench;
pub mod error;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod render;
pub mod scene;
pub mod train;
pub mod wavelet;

pub use crate::error::{Error, Result};
pub use crate::image::Image;
