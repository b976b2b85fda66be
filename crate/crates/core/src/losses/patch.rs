//! Low-frequency energy map, percentile patch selection and the patch-wise
//! detail-band loss.

use serde::{Deserialize, Serialize};

use super::{sign, LossGrad};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::wavelet::dwt2;

pub const LF_EPSILON: f64 = 1e-8;

/// Per-location share of approximation energy,
/// `|LL| / (|LL| + |LH| + |HL| + |HH| + ε)`, at half resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct LFEnergyMap {
    /// Single-channel half-resolution plane with values in `[0, 1]`.
    pub values: Image,
    pub source_width: usize,
    pub source_height: usize,
}

/// Absolute coefficients are summed over channels before forming the ratio.
pub fn lf_energy_map(image: &Image) -> Result<LFEnergyMap> {
    let sb = dwt2(image)?;
    let (w, h) = (sb.ll.width(), sb.ll.height());
    let values = Image::from_fn(w, h, 1, |_, r, x| {
        let (mut ll, mut hf) = (0.0, 0.0);
        for c in 0..sb.ll.channels() {
            ll += sb.ll.get(c, r, x).abs();
            hf += sb.lh.get(c, r, x).abs() + sb.hl.get(c, r, x).abs() + sb.hh.get(c, r, x).abs();
        }
        ll / (ll + hf + LF_EPSILON)
    });
    Ok(LFEnergyMap {
        values,
        source_width: image.width(),
        source_height: image.height(),
    })
}

/// Square patches, addressed by their top-left pixel on the full-resolution grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSet {
    pub patch_size: usize,
    /// `(row, col)` of each patch's top-left corner.
    pub patches: Vec<(usize, usize)>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.patches.iter().any(|&(r, c)| {
            row >= r && row < r + self.patch_size && col >= c && col < c + self.patch_size
        })
    }

    fn validate_for(&self, img: &Image) -> Result<()> {
        if self.patch_size == 0 || self.patch_size % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "patch size must be even and positive, got {}",
                self.patch_size
            )));
        }
        for &(r, c) in &self.patches {
            if r + self.patch_size > img.height() || c + self.patch_size > img.width() {
                return Err(Error::InvalidArgument(format!(
                    "patch at ({r}, {c}) exceeds {}x{} image",
                    img.width(),
                    img.height()
                )));
            }
        }
        Ok(())
    }
}

/// Nearest-rank quantile: the smallest value with at least `p · n` values at
/// or below it.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    // guard against 0.2 * 100 landing a hair above 20
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Tiles the source grid into non-overlapping `patch_size` squares (partial
/// border tiles dropped) and keeps every patch whose mean E_LF is at or below
/// the `percentile` nearest-rank quantile of all patch means.
pub fn select_patches(map: &LFEnergyMap, patch_size: usize, percentile: f64) -> Result<PatchSet> {
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "percentile must be in (0, 1), got {percentile}"
        )));
    }
    if patch_size == 0 || patch_size % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "patch size must be even, got {patch_size}"
        )));
    }
    if patch_size > map.source_width.min(map.source_height) {
        return Err(Error::InvalidArgument(format!(
            "patch size {patch_size} exceeds {}x{} image",
            map.source_width, map.source_height
        )));
    }
    let half = patch_size / 2;
    let (rows, cols) = (
        map.source_height / patch_size,
        map.source_width / patch_size,
    );
    let mut means = Vec::with_capacity(rows * cols);
    for pr in 0..rows {
        for pc in 0..cols {
            let mut sum = 0.0;
            for r in pr * half..(pr + 1) * half {
                for c in pc * half..(pc + 1) * half {
                    sum += map.values.get(0, r, c);
                }
            }
            means.push((
                (pr * patch_size, pc * patch_size),
                sum / (half * half) as f64,
            ));
        }
    }
    let mut sorted: Vec<f64> = means.iter().map(|m| m.1).collect();
    sorted.sort_by(f64::total_cmp);
    let threshold = nearest_rank(&sorted, percentile);
    let patches = means
        .into_iter()
        .filter(|m| m.1 <= threshold)
        .map(|m| m.0)
        .collect();
    Ok(PatchSet {
        patch_size,
        patches,
    })
}

/// `(1/N_p) Σ_p Σ_{B∈{LH,HL}} mean|Î_B^p − I_B^p|`, one-level Haar per patch.
pub fn patch_dwt_loss(render: &Image, gt: &Image, patches: &PatchSet) -> Result<LossGrad> {
    render.check_same_shape(gt, "patch dwt loss")?;
    if patches.is_empty() {
        return Err(Error::EmptyPatchSet);
    }
    patches.validate_for(render)?;
    let ch = render.channels();
    let half = patches.patch_size / 2;
    let np = patches.len() as f64;
    // coefficients per band per patch
    let per_band = (half * half * ch) as f64;
    let scale = 1.0 / (np * per_band);
    let mut grad = Image::zeros(render.width(), render.height(), ch);
    let mut value = 0.0;
    for &(r0, c0) in &patches.patches {
        for c in 0..ch {
            for br in 0..half {
                for bc in 0..half {
                    let (r, x) = (r0 + 2 * br, c0 + 2 * bc);
                    let d = |dr: usize, dx: usize| {
                        render.get(c, r + dr, x + dx) - gt.get(c, r + dr, x + dx)
                    };
                    let (a, b, cc, dd) = (d(0, 0), d(0, 1), d(1, 0), d(1, 1));
                    let lh = 0.5 * (a + cc - b - dd);
                    let hl = 0.5 * (a + b - cc - dd);
                    value += (lh.abs() + hl.abs()) * scale;
                    let (slh, shl) = (0.5 * sign(lh) * scale, 0.5 * sign(hl) * scale);
                    grad.add(c, r, x, slh + shl);
                    grad.add(c, r, x + 1, -slh + shl);
                    grad.add(c, r + 1, x, slh - shl);
                    grad.add(c, r + 1, x + 1, -slh - shl);
                }
            }
        }
    }
    Ok(LossGrad { value, grad })
}
