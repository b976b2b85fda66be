//! Orthonormal 2D Haar transform, one or two levels.
//!
//! For each non-overlapping 2×2 block `[[a, b], [c, d]]`:
//!
//! ```text
//! LL = (a + b + c + d) / 2
//! LH = (a + c - b - d) / 2   column difference, responds to vertical edges
//! HL = (a + b - c - d) / 2   row difference, responds to horizontal edges
//! HH = (a - b - c + d) / 2
//! ```
//!
//! Odd widths/heights are reflect-padded on the right/bottom edge before the
//! transform and cropped again by the inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Sub-band identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    LL,
    LH,
    HL,
    HH,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::LL, Band::LH, Band::HL, Band::HH];

    pub fn name(self) -> &'static str {
        match self {
            Band::LL => "ll",
            Band::LH => "lh",
            Band::HL => "hl",
            Band::HH => "hh",
        }
    }
}

/// One level of Haar coefficients. Each plane is `ceil(h/2) × ceil(w/2)` and
/// keeps the channel count of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct Subbands {
    pub ll: Image,
    pub lh: Image,
    pub hl: Image,
    pub hh: Image,
    /// Size of the input before padding.
    pub source_width: usize,
    pub source_height: usize,
}

impl Subbands {
    pub fn band(&self, band: Band) -> &Image {
        match band {
            Band::LL => &self.ll,
            Band::LH => &self.lh,
            Band::HL => &self.hl,
            Band::HH => &self.hh,
        }
    }

    pub fn band_mut(&mut self, band: Band) -> &mut Image {
        match band {
            Band::LL => &mut self.ll,
            Band::LH => &mut self.lh,
            Band::HL => &mut self.hl,
            Band::HH => &mut self.hh,
        }
    }

    /// Zero coefficients for an input of the given size.
    pub fn zeros(source_width: usize, source_height: usize, channels: usize) -> Self {
        let (w, h) = (source_width.div_ceil(2), source_height.div_ceil(2));
        let z = Image::zeros(w, h, channels);
        Self {
            ll: z.clone(),
            lh: z.clone(),
            hl: z.clone(),
            hh: z,
            source_width,
            source_height,
        }
    }

    pub fn energy(&self) -> f64 {
        Band::ALL
            .iter()
            .map(|&b| self.band(b).data().iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    fn check_consistent(&self) -> Result<()> {
        let ll = &self.ll;
        for b in [Band::LH, Band::HL, Band::HH] {
            ll.check_same_shape(self.band(b), "sub-band planes")?;
        }
        if ll.width() != self.source_width.div_ceil(2)
            || ll.height() != self.source_height.div_ceil(2)
        {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} planes cannot reconstruct a {}x{} image",
                ll.width(),
                ll.height(),
                self.source_width,
                self.source_height
            )));
        }
        Ok(())
    }
}

/// Source index for padded coordinate `i` along an axis of length `n`.
#[inline]
fn reflect(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else if n >= 2 {
        n - 2
    } else {
        0
    }
}

/// One-level forward transform.
pub fn dwt2(image: &Image) -> Result<Subbands> {
    if image.is_empty() {
        return Err(Error::InvalidArgument("empty image".into()));
    }
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    let mut out = Subbands::zeros(w, h, ch);
    let (hw, hh) = (out.ll.width(), out.ll.height());
    for c in 0..ch {
        let src = image.plane(c);
        let px = |r: usize, x: usize| src[reflect(r, h) * w + reflect(x, w)];
        for r in 0..hh {
            for x in 0..hw {
                let (r0, x0) = (2 * r, 2 * x);
                let a = px(r0, x0);
                let b = px(r0, x0 + 1);
                let cc = px(r0 + 1, x0);
                let d = px(r0 + 1, x0 + 1);
                out.ll.set(c, r, x, 0.5 * (a + b + cc + d));
                out.lh.set(c, r, x, 0.5 * (a + cc - b - d));
                out.hl.set(c, r, x, 0.5 * (a + b - cc - d));
                out.hh.set(c, r, x, 0.5 * (a - b - cc + d));
            }
        }
    }
    Ok(out)
}

/// Inverts the block formulas into the padded grid, returning the padded raster.
fn synthesize_padded(sb: &Subbands) -> Image {
    let (hw, hh, ch) = (sb.ll.width(), sb.ll.height(), sb.ll.channels());
    let mut out = Image::zeros(2 * hw, 2 * hh, ch);
    for c in 0..ch {
        for r in 0..hh {
            for x in 0..hw {
                let ll = sb.ll.get(c, r, x);
                let lh = sb.lh.get(c, r, x);
                let hl = sb.hl.get(c, r, x);
                let hhv = sb.hh.get(c, r, x);
                out.set(c, 2 * r, 2 * x, 0.5 * (ll + lh + hl + hhv));
                out.set(c, 2 * r, 2 * x + 1, 0.5 * (ll - lh + hl - hhv));
                out.set(c, 2 * r + 1, 2 * x, 0.5 * (ll + lh - hl - hhv));
                out.set(c, 2 * r + 1, 2 * x + 1, 0.5 * (ll - lh - hl + hhv));
            }
        }
    }
    out
}

/// One-level inverse transform; crops any padding added by [`dwt2`].
pub fn idwt2(subbands: &Subbands) -> Result<Image> {
    subbands.check_consistent()?;
    let padded = synthesize_padded(subbands);
    let (w, h) = (subbands.source_width, subbands.source_height);
    Ok(Image::from_fn(w, h, padded.channels(), |c, r, x| {
        padded.get(c, r, x)
    }))
}

/// Adjoint of [`dwt2`]: maps a gradient on the coefficients back to the
/// input pixels. Equal to [`idwt2`] for even sizes; for odd sizes the padded
/// row/column gradient is folded back onto its reflection source.
pub fn dwt2_adjoint(grad: &Subbands) -> Result<Image> {
    grad.check_consistent()?;
    let padded = synthesize_padded(grad);
    let (w, h) = (grad.source_width, grad.source_height);
    let mut out = Image::zeros(w, h, padded.channels());
    for c in 0..padded.channels() {
        for r in 0..padded.height() {
            for x in 0..padded.width() {
                out.add(c, reflect(r, h), reflect(x, w), padded.get(c, r, x));
            }
        }
    }
    Ok(out)
}

/// Ordered Haar levels; level `k + 1` decomposes level `k`'s LL plane.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandPyramid {
    pub levels: Vec<Subbands>,
}

impl SubbandPyramid {
    /// The deepest approximation plane.
    pub fn top_ll(&self) -> &Image {
        &self
            .levels
            .last()
            .expect("pyramid has at least one level")
            .ll
    }
}

fn check_levels(levels: usize) -> Result<()> {
    if !(1..=2).contains(&levels) {
        return Err(Error::InvalidArgument(format!(
            "wavelet levels must be 1 or 2, got {levels}"
        )));
    }
    Ok(())
}

pub fn dwt2_multi(image: &Image, levels: usize) -> Result<SubbandPyramid> {
    check_levels(levels)?;
    let mut out = vec![dwt2(image)?];
    for _ in 1..levels {
        let next = dwt2(&out.last().unwrap().ll)?;
        out.push(next);
    }
    Ok(SubbandPyramid { levels: out })
}

pub fn idwt2_multi(pyramid: &SubbandPyramid) -> Result<Image> {
    check_levels(pyramid.levels.len())?;
    let mut levels = pyramid.levels.iter().rev();
    let mut recon = idwt2(levels.next().unwrap())?;
    for sb in levels {
        if recon.width() != sb.ll.width() || recon.height() != sb.ll.height() {
            return Err(Error::DimensionMismatch(format!(
                "level of {}x{} coefficients fed by a {}x{} deeper reconstruction",
                sb.ll.width(),
                sb.ll.height(),
                recon.width(),
                recon.height()
            )));
        }
        let mut with_ll = sb.clone();
        with_ll.ll = recon;
        recon = idwt2(&with_ll)?;
    }
    Ok(recon)
}

/// Adjoint of [`dwt2_multi`]. `grad.levels[k].ll` holds the gradient on
/// level `k`'s approximation plane as used directly by the caller; deeper
/// levels' contributions are folded into it.
pub fn dwt2_multi_adjoint(grad: &SubbandPyramid) -> Result<Image> {
    check_levels(grad.levels.len())?;
    let mut levels = grad.levels.iter().rev();
    let mut back = dwt2_adjoint(levels.next().unwrap())?;
    for sb in levels {
        let mut with_ll = sb.clone();
        with_ll.ll.check_same_shape(&back, "pyramid adjoint")?;
        with_ll.ll.add_scaled(&back, 1.0);
        back = dwt2_adjoint(&with_ll)?;
    }
    Ok(back)
}
