use serde::{Deserialize, Serialize};

use super::{sign, LossGrad};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::wavelet::{dwt2_multi, dwt2_multi_adjoint, Band, SubbandPyramid, Subbands};

/// Per-band weights of the global sub-band loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubbandWeights {
    pub ll: f64,
    pub lh: f64,
    pub hl: f64,
    pub hh: f64,
}

impl Default for SubbandWeights {
    fn default() -> Self {
        SubbandWeights {
            ll: 1.0,
            lh: 0.5,
            hl: 0.5,
            hh: 0.0,
        }
    }
}

impl SubbandWeights {
    pub const LL_ONLY: SubbandWeights = SubbandWeights {
        ll: 1.0,
        lh: 0.0,
        hl: 0.0,
        hh: 0.0,
    };

    pub fn get(&self, band: Band) -> f64 {
        match band {
            Band::LL => self.ll,
            Band::LH => self.lh,
            Band::HL => self.hl,
            Band::HH => self.hh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if Band::ALL
            .iter()
            .any(|&b| !(self.get(b) >= 0.0) || !self.get(b).is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "sub-band weights must be >= 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `Σ_level Σ_band w · mean|Î_band − I_band|` with the same weights at every level.
pub fn global_dwt_loss(
    render: &Image,
    gt: &Image,
    weights: &SubbandWeights,
    levels: usize,
) -> Result<LossGrad> {
    global_dwt_loss_per_level(render, gt, &vec![*weights; levels])
}

/// As [`global_dwt_loss`] with one weight set per level (1 or 2 levels).
pub fn global_dwt_loss_per_level(
    render: &Image,
    gt: &Image,
    weights: &[SubbandWeights],
) -> Result<LossGrad> {
    render.check_same_shape(gt, "global dwt loss")?;
    for w in weights {
        w.validate()?;
    }
    let pr = dwt2_multi(render, weights.len())?;
    let pg = dwt2_multi(gt, weights.len())?;
    let mut value = 0.0;
    let mut grad_levels = Vec::with_capacity(weights.len());
    for ((r, g), w) in pr.levels.iter().zip(&pg.levels).zip(weights) {
        let mut gl = Subbands::zeros(r.source_width, r.source_height, r.ll.channels());
        for band in Band::ALL {
            let wb = w.get(band);
            if wb == 0.0 {
                continue;
            }
            let (rb, gb) = (r.band(band), g.band(band));
            let n = rb.len() as f64;
            let out = gl.band_mut(band).data_mut();
            let mut sum = 0.0;
            for ((o, a), b) in out.iter_mut().zip(rb.data()).zip(gb.data()) {
                let d = a - b;
                sum += d.abs();
                *o = wb * sign(d) / n;
            }
            value += wb * sum / n;
        }
        grad_levels.push(gl);
    }
    let grad = dwt2_multi_adjoint(&SubbandPyramid {
        levels: grad_levels,
    })?;
    Ok(LossGrad { value, grad })
}
