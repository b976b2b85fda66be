use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use super::adam::OptimizerState;
use super::DensifyConfig;
use crate::error::Result;
use crate::image::Image;
use crate::render::{project_one, quat_to_matrix, CloudGradients, GaussianCloud, Projected2D};
use crate::scene::Camera;

/// Per-pixel cross-modality residual of one view, in `[0, 1]` for unit-range images.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualMask {
    pub values: Image,
}

fn channel_mean_residual(render: &Image, gt: &Image) -> Result<Image> {
    render.check_same_shape(gt, "residual")?;
    let ch = render.channels() as f64;
    Ok(Image::from_fn(
        render.width(),
        render.height(),
        1,
        |_, r, x| {
            (0..render.channels())
                .map(|c| (render.get(c, r, x) - gt.get(c, r, x)).abs())
                .sum::<f64>()
                / ch
        },
    ))
}

/// `max(RGB_res, NIR_res)` per pixel, or `RGB_res` alone without NIR.
pub fn residual_mask(
    rgb_render: &Image,
    rgb_gt: &Image,
    nir: Option<(&Image, &Image)>,
) -> Result<ResidualMask> {
    let mut values = channel_mean_residual(rgb_render, rgb_gt)?;
    if let Some((nr, ng)) = nir {
        let n = channel_mean_residual(nr, ng)?;
        values.check_same_shape(&n, "residual mask")?;
        for (a, b) in values.data_mut().iter_mut().zip(n.data()) {
            *a = a.max(*b);
        }
    }
    Ok(ResidualMask { values })
}

impl ResidualMask {
    /// Smallest value inside the top `fraction` of the mask (nearest rank).
    pub fn top_threshold(&self, fraction: f64) -> f64 {
        let mut v: Vec<f64> = self.values.data().to_vec();
        v.sort_by(|a, b| b.total_cmp(a));
        let rank = ((fraction * v.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        v[rank.min(v.len()) - 1]
    }
}

/// Running mean of the screen-space positional gradient norm per splat.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradStats {
    pub sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GradStats {
    pub fn new(n: usize) -> Self {
        GradStats {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    /// Adds one view's gradients, counting only splats that projected.
    pub fn record(&mut self, grads: &CloudGradients, projected: &[Projected2D]) {
        for (i, p) in projected.iter().enumerate() {
            if p.valid {
                let g = grads.mean2d[i];
                self.sum[i] += (g[0] * g[0] + g[1] * g[1]).sqrt();
                self.count[i] += 1;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.sum[i] / self.count[i] as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DensifyOutcome {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// True when splat `i` projects into the top-residual region of some view.
/// A `residual_percentile` of 1 or more opens the gate everywhere.
fn in_residual_region(
    cloud: &GaussianCloud,
    i: usize,
    views: &[(&Camera, &ResidualMask, f64)],
    fraction: f64,
) -> bool {
    if fraction >= 1.0 {
        return true;
    }
    views.iter().any(|&(cam, mask, threshold)| {
        let p = project_one(cloud, cam, i);
        if !p.valid {
            return false;
        }
        let (u, v) = (p.mean2d[0].round(), p.mean2d[1].round());
        if u < 0.0 || v < 0.0 || u >= cam.width as f64 || v >= cam.height as f64 {
            return false;
        }
        let m = mask.values.get(0, v as usize, u as usize);
        m > 0.0 && m >= threshold
    })
}

/// Gradient-and-residual gated clone/split followed by opacity and scale
/// pruning. `views` pairs each training camera with its latest mask.
/// Moments of new and split splats start at zero.
pub fn densify_and_prune<R: Rng>(
    cloud: &mut GaussianCloud,
    state: &mut OptimizerState,
    stats: &GradStats,
    views: &[(&Camera, &ResidualMask)],
    config: &DensifyConfig,
    rng: &mut R,
) -> DensifyOutcome {
    let mut out = DensifyOutcome::default();
    let n0 = cloud.len();
    let gated: Vec<(&Camera, &ResidualMask, f64)> = views
        .iter()
        .map(|&(c, m)| (c, m, m.top_threshold(config.residual_percentile)))
        .collect();
    let shrink = config.split_factor.ln();
    for i in 0..n0 {
        if cloud.len() >= config.max_gaussians {
            break;
        }
        if stats.mean(i) <= config.grad_threshold {
            continue;
        }
        if !in_residual_region(cloud, i, &gated, config.residual_percentile) {
            continue;
        }
        let rot = quat_to_matrix(&cloud.rotations[i]);
        let s = cloud.log_scales[i].map(f64::exp);
        let mut sample = |k: f64| -> [f64; 3] {
            let z = Vector3::new(
                k * s[0] * rng.sample::<f64, _>(StandardNormal),
                k * s[1] * rng.sample::<f64, _>(StandardNormal),
                k * s[2] * rng.sample::<f64, _>(StandardNormal),
            );
            let o = rot * z;
            [o.x, o.y, o.z]
        };
        let p = cloud.positions[i];
        if cloud.max_scale(i) < config.split_scale {
            let o = sample(0.5);
            cloud.push_copy(i);
            state.push_zero();
            let j = cloud.len() - 1;
            cloud.positions[j] = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
            out.cloned += 1;
        } else {
            // two children placed symmetrically about the parent mean
            let o = sample(1.0);
            cloud.log_scales[i] = cloud.log_scales[i].map(|v| v - shrink);
            cloud.push_copy(i);
            state.push_zero();
            state.reset(i);
            let j = cloud.len() - 1;
            cloud.positions[i] = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
            cloud.positions[j] = [p[0] - o[0], p[1] - o[1], p[2] - o[2]];
            out.split += 1;
        }
    }
    let keep: Vec<bool> = (0..cloud.len())
        .map(|i| {
            cloud.opacity(i) >= config.prune_opacity && cloud.max_scale(i) <= config.prune_scale
        })
        .collect();
    out.pruned = keep.iter().filter(|k| !**k).count();
    if out.pruned > 0 {
        cloud.retain(&keep);
        state.retain(&keep);
    }
    out
}
