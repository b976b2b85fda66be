//! Training objectives. Every loss returns its value together with the
//! gradient with respect to the rendered image.

mod dwt;
mod l1;
mod patch;
mod ssim;
mod total;

pub use dwt::{global_dwt_loss, global_dwt_loss_per_level, SubbandWeights};
pub use l1::l1_loss;
pub use patch::{lf_energy_map, patch_dwt_loss, select_patches, LFEnergyMap, PatchSet, LF_EPSILON};
pub use ssim::{ssim, ssim_loss, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};
pub use total::{
    multispectral_loss, total_loss, total_loss_with, ActiveTerms, LossReport, MultispectralReport,
};

use crate::image::Image;

/// A scalar objective and its gradient with respect to the render.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Image,
}

/// Subgradient of `|x|`, zero at ties.
#[inline]
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
