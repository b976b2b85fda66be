use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cloud::GaussianCloud;
use super::project::{project, Projected2D};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::Camera;

/// Upper bound on per-splat alpha.
pub const ALPHA_CAP: f64 = 0.99;
/// Compositing stops once transmittance falls below this.
pub const TRANSMITTANCE_STOP: f64 = 1e-4;
/// Kernel support, in Mahalanobis units.
pub const KERNEL_RADIUS: f64 = 3.0;

const DEFAULT_TILE: usize = 16;

/// Which appearance attribute a pass shades with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Nir,
}

impl Modality {
    pub fn channels(self) -> usize {
        match self {
            Modality::Rgb => 3,
            Modality::Nir => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Nir => "nir",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RasterOptions {
    /// Restrict each splat to the tiles overlapped by its support box.
    pub cull: bool,
    pub tile_size: usize,
}

impl Default for RasterOptions {
    fn default() -> Self {
        RasterOptions {
            cull: true,
            tile_size: DEFAULT_TILE,
        }
    }
}

/// Gaussian falloff truncated to zero at [`KERNEL_RADIUS`] and rescaled so the
/// peak stays 1. Returns the weight and its derivative with respect to the
/// squared Mahalanobis distance.
#[inline]
pub fn kernel_weight(d2: f64) -> (f64, f64) {
    const R2: f64 = KERNEL_RADIUS * KERNEL_RADIUS;
    if !(d2 < R2) {
        return (0.0, 0.0);
    }
    let floor = (-0.5 * R2).exp();
    let e = (-0.5 * d2).exp();
    let norm = 1.0 / (1.0 - floor);
    ((e - floor) * norm, -0.5 * e * norm)
}

/// Squared Mahalanobis distance of pixel `(px, py)` from a projected splat,
/// along with the offset from the mean.
#[inline]
pub(crate) fn mahalanobis(p: &Projected2D, px: f64, py: f64) -> (f64, f64, f64) {
    let dx = px - p.mean2d[0];
    let dy = py - p.mean2d[1];
    let [a, b, c] = p.conic;
    (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy, dx, dy)
}

/// Shading value of splat `i` for `modality`, clamped to `[0, 1]`. The second
/// element flags whether the clamp was inactive (gradient passes through).
#[inline]
pub(crate) fn shade(cloud: &GaussianCloud, modality: Modality, i: usize, ch: usize) -> (f64, bool) {
    let raw = match modality {
        Modality::Rgb => cloud.rgb_colors[i][ch],
        Modality::Nir => cloud.nir_intensities.as_ref().expect("checked by caller")[i],
    };
    (raw.clamp(0.0, 1.0), (0.0..=1.0).contains(&raw))
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub color: Image,
    /// Accumulated opacity `Σ aᵢ Tᵢ`.
    pub alpha: Image,
    /// Expected depth `Σ aᵢ Tᵢ zᵢ` (not normalised by alpha).
    pub depth: Image,
    /// Transmittance left after the last contributor.
    pub transmittance: Image,
    /// Front-to-back contributor indices per pixel, row-major.
    pub contributors: Vec<Vec<u32>>,
    pub projected: Vec<Projected2D>,
    pub modality: Modality,
    pub background: Vec<f64>,
    pub(crate) cache_key: u64,
}

pub(crate) fn cache_key(cloud: &GaussianCloud, camera: &Camera) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    cloud.fingerprint().hash(&mut h);
    let rec = camera.to_record();
    for v in [
        rec.fx, rec.fy, rec.cx, rec.cy, rec.qw, rec.qx, rec.qy, rec.qz, rec.tx, rec.ty, rec.tz,
    ] {
        v.to_bits().hash(&mut h);
    }
    (rec.width, rec.height).hash(&mut h);
    h.finish()
}

/// Front-to-back order of valid splats: by depth, ties by storage index.
pub(crate) fn depth_order(projected: &[Projected2D]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..projected.len() as u32)
        .filter(|&i| projected[i as usize].valid)
        .collect();
    order.sort_by(|&a, &b| {
        projected[a as usize]
            .depth
            .total_cmp(&projected[b as usize].depth)
    });
    order
}

pub(crate) struct TileGrid {
    pub size: usize,
    pub cols: usize,
    pub lists: Vec<Vec<u32>>,
}

impl TileGrid {
    pub fn build(
        projected: &[Projected2D],
        order: &[u32],
        width: usize,
        height: usize,
        opts: RasterOptions,
    ) -> Self {
        let size = opts.tile_size.max(1);
        let cols = width.div_ceil(size);
        let rows = height.div_ceil(size);
        let mut lists = vec![Vec::new(); cols * rows];
        for &i in order {
            let p = &projected[i as usize];
            if !opts.cull {
                lists.iter_mut().for_each(|l| l.push(i));
                continue;
            }
            let [ex, ey] = p.half_extent(KERNEL_RADIUS);
            let (x0, x1) = ((p.mean2d[0] - ex).ceil(), (p.mean2d[0] + ex).floor());
            let (y0, y1) = ((p.mean2d[1] - ey).ceil(), (p.mean2d[1] + ey).floor());
            if x1 < 0.0
                || y1 < 0.0
                || x0 > (width - 1) as f64
                || y0 > (height - 1) as f64
                || x0 > x1
                || y0 > y1
            {
                continue;
            }
            let tx0 = x0.max(0.0) as usize / size;
            let tx1 = (x1 as usize).min(width - 1) / size;
            let ty0 = y0.max(0.0) as usize / size;
            let ty1 = (y1 as usize).min(height - 1) / size;
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    lists[ty * cols + tx].push(i);
                }
            }
        }
        TileGrid { size, cols, lists }
    }

    /// Pixel ranges `(x0..x1, y0..y1)` of tile `t`.
    pub fn bounds(
        &self,
        t: usize,
        width: usize,
        height: usize,
    ) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (tx, ty) = (t % self.cols, t / self.cols);
        let x0 = tx * self.size;
        let y0 = ty * self.size;
        (
            x0..(x0 + self.size).min(width),
            y0..(y0 + self.size).min(height),
        )
    }
}

struct PixelResult {
    color: [f64; 3],
    alpha: f64,
    depth: f64,
    transmittance: f64,
    contributors: Vec<u32>,
}

pub fn rasterize(
    cloud: &GaussianCloud,
    camera: &Camera,
    modality: Modality,
    background: &[f64],
) -> Result<RenderOutput> {
    rasterize_with(
        cloud,
        camera,
        modality,
        background,
        RasterOptions::default(),
    )
}

pub fn rasterize_with(
    cloud: &GaussianCloud,
    camera: &Camera,
    modality: Modality,
    background: &[f64],
    opts: RasterOptions,
) -> Result<RenderOutput> {
    cloud.validate()?;
    if modality == Modality::Nir && !cloud.has_nir() {
        return Err(Error::MissingNir);
    }
    let ch = modality.channels();
    if background.len() != ch {
        return Err(Error::DimensionMismatch(format!(
            "{} background values for a {}-channel pass",
            background.len(),
            ch
        )));
    }
    let (w, h) = (camera.width, camera.height);
    let projected = project(cloud, camera);
    let order = depth_order(&projected);
    let grid = TileGrid::build(&projected, &order, w, h, opts);

    let tiles: Vec<Vec<(usize, usize, PixelResult)>> = (0..grid.lists.len())
        .into_par_iter()
        .map(|t| {
            let (xs, ys) = grid.bounds(t, w, h);
            let list = &grid.lists[t];
            let mut out = Vec::with_capacity(xs.len() * ys.len());
            for row in ys.clone() {
                for col in xs.clone() {
                    out.push((
                        row,
                        col,
                        composite_pixel(cloud, &projected, list, modality, col, row),
                    ));
                }
            }
            out
        })
        .collect();

    let mut color = Image::zeros(w, h, ch);
    let mut alpha = Image::zeros(w, h, 1);
    let mut depth = Image::zeros(w, h, 1);
    let mut transmittance = Image::zeros(w, h, 1);
    let mut contributors = vec![Vec::new(); w * h];
    for (row, col, px) in tiles.into_iter().flatten() {
        for (c, bg) in background.iter().enumerate() {
            color.set(c, row, col, px.color[c] + px.transmittance * bg);
        }
        alpha.set(0, row, col, px.alpha);
        depth.set(0, row, col, px.depth);
        transmittance.set(0, row, col, px.transmittance);
        contributors[row * w + col] = px.contributors;
    }
    Ok(RenderOutput {
        color,
        alpha,
        depth,
        transmittance,
        contributors,
        projected,
        modality,
        background: background.to_vec(),
        cache_key: cache_key(cloud, camera),
    })
}

fn composite_pixel(
    cloud: &GaussianCloud,
    projected: &[Projected2D],
    list: &[u32],
    modality: Modality,
    col: usize,
    row: usize,
) -> PixelResult {
    let mut t = 1.0;
    let mut res = PixelResult {
        color: [0.0; 3],
        alpha: 0.0,
        depth: 0.0,
        transmittance: 1.0,
        contributors: Vec::new(),
    };
    for &i in list {
        let p = &projected[i as usize];
        let (d2, _, _) = mahalanobis(p, col as f64, row as f64);
        let (g, _) = kernel_weight(d2);
        if g <= 0.0 {
            continue;
        }
        let a = (cloud.opacity(i as usize) * g).min(ALPHA_CAP);
        let wgt = t * a;
        for c in 0..modality.channels() {
            res.color[c] += wgt * shade(cloud, modality, i as usize, c).0;
        }
        res.alpha += wgt;
        res.depth += wgt * p.depth;
        res.contributors.push(i);
        t *= 1.0 - a;
        if t < TRANSMITTANCE_STOP {
            break;
        }
    }
    res.transmittance = t;
    res
}

/// Renders the RGB and NIR passes over the same geometry.
pub fn render_multispectral(
    cloud: &GaussianCloud,
    camera: &Camera,
    rgb_background: &[f64; 3],
    nir_background: f64,
) -> Result<(RenderOutput, RenderOutput)> {
    if !cloud.has_nir() {
        return Err(Error::MissingNir);
    }
    let rgb = rasterize(cloud, camera, Modality::Rgb, rgb_background)?;
    let nir = rasterize(cloud, camera, Modality::Nir, &[nir_background])?;
    Ok((rgb, nir))
}
