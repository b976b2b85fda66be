#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavesplat::image::Image;
use wavesplat::render::GaussianCloud;
use wavesplat::scene::Camera;
use wavesplat::wavelet::{dwt2_multi, Band};

pub const FD_STEP: f64 = 1e-4;

pub fn random_image(w: usize, h: usize, ch: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, ch, |_, _, _| rng.gen::<f64>())
}

/// `gt` plus a random offset of magnitude in `[0.02, 0.3]` per sample, so no
/// pixel sits near an L1 tie.
pub fn offset_pair(w: usize, h: usize, ch: usize, seed: u64) -> (Image, Image) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = Image::from_fn(w, h, ch, |_, _, _| rng.gen_range(0.2..0.8));
    let mut render = gt.clone();
    for v in render.data_mut() {
        let m = rng.gen_range(0.02..0.3);
        *v += if rng.gen::<bool>() { m } else { -m };
    }
    (render, gt)
}

pub fn probes(img: &Image, n: usize, seed: u64) -> Vec<(usize, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                rng.gen_range(0..img.channels()),
                rng.gen_range(0..img.height()),
                rng.gen_range(0..img.width()),
            )
        })
        .collect()
}

/// Signs of `render - gt` per sample.
pub fn pixel_signs(render: &Image, gt: &Image) -> Vec<i8> {
    render
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| sign(a - b))
        .collect()
}

/// Signs of every sub-band coefficient of `render - gt` up to `levels`.
pub fn coefficient_signs(render: &Image, gt: &Image, levels: usize) -> Vec<i8> {
    let mut d = render.clone();
    d.add_scaled(gt, -1.0);
    let p = dwt2_multi(&d, levels).unwrap();
    p.levels
        .iter()
        .flat_map(|sb| {
            Band::ALL
                .into_iter()
                .flat_map(move |b| sb.band(b).data().to_vec())
        })
        .map(sign)
        .collect()
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    /// Probes skipped because an absolute-value argument changes sign within the step.
    pub skipped: usize,
    pub worst_rel: f64,
    pub worst_at: Option<(usize, usize, usize)>,
}

impl FdReport {
    pub fn ok(&self, tol: f64, max_skipped: usize) -> bool {
        self.worst_rel <= tol && self.skipped <= max_skipped && self.checked > 0
    }
}

/// Relative error with an absolute floor of `1e-6` on the denominator,
/// above the cancellation noise of a central difference (about
/// `eps * |loss| / h`), so exact zeros are not compared against roundoff.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

/// Central differences of `loss` at the given probes, compared with
/// `grad`. `kinks` returns the sign pattern of every non-smooth argument;
/// a probe whose pattern differs between `x + h` and `x - h` is skipped.
pub fn check_image_gradient(
    x: &Image,
    grad: &Image,
    probes: &[(usize, usize, usize)],
    loss: impl Fn(&Image) -> f64,
    kinks: impl Fn(&Image) -> Vec<i8>,
) -> FdReport {
    let mut rep = FdReport::default();
    for &(c, r, col) in probes {
        let mut p = x.clone();
        let mut m = x.clone();
        p.add(c, r, col, FD_STEP);
        m.add(c, r, col, -FD_STEP);
        if kinks(&p) != kinks(&m) {
            rep.skipped += 1;
            continue;
        }
        let fd = (loss(&p) - loss(&m)) / (2.0 * FD_STEP);
        let e = rel_err(grad.get(c, r, col), fd);
        rep.checked += 1;
        if e > rep.worst_rel {
            rep.worst_rel = e;
            rep.worst_at = Some((c, r, col));
        }
    }
    rep
}

/// Up to `n` well-separated splats in front of `camera_for_fd`, opacities
/// kept below the alpha cap and colours inside the clamp range.
pub fn fd_cloud(seed: u64, n: usize) -> GaussianCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = GaussianCloud::default();
    for _ in 0..n {
        c.positions.push([(); 3].map(|_| rng.gen_range(-0.7..0.7)));
        c.log_scales
            .push([(); 3].map(|_| rng.gen_range(-2.2f64..-1.2)));
        c.rotations.push([(); 4].map(|_| rng.gen_range(-1.0..1.0)));
        c.opacity_logits.push(rng.gen_range(-1.0..1.0));
        c.rgb_colors
            .push([(); 3].map(|_| rng.gen_range(0.15..0.85)));
    }
    c.normalize_rotations();
    c.nir_intensities = Some((0..n).map(|_| rng.gen_range(0.15..0.85)).collect());
    c
}

pub fn camera_for_fd(size: usize) -> Camera {
    Camera::look_at(
        0,
        nalgebra::Vector3::new(0.5, -0.3, -4.0),
        nalgebra::Vector3::zeros(),
        nalgebra::Vector3::new(0.0, 1.0, 0.0),
        1.2 * size as f64,
        size,
        size,
    )
}

pub const PARAM_STEP: f64 = 1e-6;

/// Per-group worst relative error of rasteriser gradients against central
/// differences of `<W, render>` for a random weight image `W`.
pub fn rasterizer_fd(
    cloud: &GaussianCloud,
    camera: &Camera,
    modality: wavesplat::render::Modality,
    seed: u64,
) -> Vec<(&'static str, FdReport)> {
    use wavesplat::render::{rasterize, rasterize_backward, Modality};
    let bg: Vec<f64> = match modality {
        Modality::Rgb => vec![0.1, 0.2, 0.05],
        Modality::Nir => vec![0.15],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = Image::from_fn(
        camera.width,
        camera.height,
        modality.channels(),
        |_, _, _| rng.gen_range(-1.0..1.0),
    );
    let loss = |cl: &GaussianCloud| -> f64 {
        let r = rasterize(cl, camera, modality, &bg).unwrap();
        r.color
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum()
    };
    let fwd = rasterize(cloud, camera, modality, &bg).unwrap();
    let g = rasterize_backward(cloud, camera, &fwd, &weights).unwrap();

    type Access = fn(&mut GaussianCloud, usize, usize) -> &mut f64;
    let mut groups: Vec<(&'static str, usize, Access, Vec<f64>)> = vec![
        (
            "position",
            3,
            |c, i, k| &mut c.positions[i][k],
            g.positions.concat(),
        ),
        (
            "log_scale",
            3,
            |c, i, k| &mut c.log_scales[i][k],
            g.log_scales.concat(),
        ),
        (
            "rotation",
            4,
            |c, i, k| &mut c.rotations[i][k],
            g.rotations.concat(),
        ),
        (
            "opacity",
            1,
            |c, i, _| &mut c.opacity_logits[i],
            g.opacity_logits.clone(),
        ),
    ];
    match modality {
        Modality::Rgb => groups.push((
            "color",
            3,
            |c, i, k| &mut c.rgb_colors[i][k],
            g.rgb_colors.concat(),
        )),
        Modality::Nir => groups.push((
            "nir",
            1,
            |c, i, _| &mut c.nir_intensities.as_mut().unwrap()[i],
            g.nir_intensities.clone().unwrap(),
        )),
    }
    groups
        .into_iter()
        .map(|(name, stride, access, analytic)| {
            let mut rep = FdReport::default();
            for i in 0..cloud.len() {
                for k in 0..stride {
                    let mut p = cloud.clone();
                    let mut m = cloud.clone();
                    *access(&mut p, i, k) += PARAM_STEP;
                    *access(&mut m, i, k) -= PARAM_STEP;
                    let fd = (loss(&p) - loss(&m)) / (2.0 * PARAM_STEP);
                    let e = rel_err(analytic[i * stride + k], fd);
                    rep.checked += 1;
                    if e > rep.worst_rel {
                        rep.worst_rel = e;
                        rep.worst_at = Some((i, k, 0));
                    }
                }
            }
            (name, rep)
        })
        .collect()
}
