use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;

use super::cloud::{quat_to_matrix, sigmoid, GaussianCloud};
use super::project::projection_jacobian;
use super::raster::{
    cache_key, kernel_weight, mahalanobis, shade, Modality, RenderOutput, ALPHA_CAP,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::Camera;

/// Gradients of a scalar objective with respect to every cloud parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CloudGradients {
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub opacity_logits: Vec<f64>,
    pub rgb_colors: Vec<[f64; 3]>,
    pub nir_intensities: Option<Vec<f64>>,
    /// Gradient with respect to the projected mean, in pixels.
    pub mean2d: Vec<[f64; 2]>,
}

impl CloudGradients {
    pub fn zeros(cloud: &GaussianCloud) -> Self {
        let n = cloud.len();
        CloudGradients {
            positions: vec![[0.0; 3]; n],
            log_scales: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            opacity_logits: vec![0.0; n],
            rgb_colors: vec![[0.0; 3]; n],
            nir_intensities: cloud.has_nir().then(|| vec![0.0; n]),
            mean2d: vec![[0.0; 2]; n],
        }
    }

    /// `self += other`, element-wise.
    pub fn accumulate(&mut self, other: &CloudGradients) {
        fn add<const K: usize>(a: &mut [[f64; K]], b: &[[f64; K]]) {
            for (x, y) in a.iter_mut().zip(b) {
                for k in 0..K {
                    x[k] += y[k];
                }
            }
        }
        add(&mut self.positions, &other.positions);
        add(&mut self.log_scales, &other.log_scales);
        add(&mut self.rotations, &other.rotations);
        add(&mut self.rgb_colors, &other.rgb_colors);
        add(&mut self.mean2d, &other.mean2d);
        for (x, y) in self.opacity_logits.iter_mut().zip(&other.opacity_logits) {
            *x += y;
        }
        if let (Some(a), Some(b)) = (
            self.nir_intensities.as_mut(),
            other.nir_intensities.as_ref(),
        ) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.rotations.iter().flatten().all(|v| v.is_finite())
            && self.opacity_logits.iter().all(|v| v.is_finite())
            && self.rgb_colors.iter().flatten().all(|v| v.is_finite())
            && self.nir_intensities.iter().flatten().all(|v| v.is_finite())
    }
}

/// Screen-space gradient accumulator for one splat.
#[derive(Clone, Copy, Default)]
struct SplatGrad2D {
    mean: [f64; 2],
    /// With respect to conic entries `(a, b, c)` of `a dx² + 2 b dx dy + c dy²`.
    conic: [f64; 3],
    opacity_logit: f64,
    color: [f64; 3],
}

const ROW_BAND: usize = 8;

/// Adjoint of [`super::rasterize`]: maps `grad_color` (dL/d render) to
/// parameter gradients. `forward` must come from rasterising the same cloud
/// from the same camera.
pub fn rasterize_backward(
    cloud: &GaussianCloud,
    camera: &Camera,
    forward: &RenderOutput,
    grad_color: &Image,
) -> Result<CloudGradients> {
    if forward.cache_key != cache_key(cloud, camera) {
        return Err(Error::StaleCache);
    }
    forward
        .color
        .check_same_shape(grad_color, "render gradient")?;
    let modality = forward.modality;
    let (w, h) = (camera.width, camera.height);
    let n = cloud.len();
    let ch = modality.channels();

    // fixed row bands reduced in order: bit-identical for any thread count
    let bands: Vec<Vec<SplatGrad2D>> = (0..h.div_ceil(ROW_BAND))
        .into_par_iter()
        .map(|band| {
            let mut acc = vec![SplatGrad2D::default(); n];
            let mut scratch = Vec::new();
            for row in band * ROW_BAND..((band + 1) * ROW_BAND).min(h) {
                for col in 0..w {
                    let list = &forward.contributors[row * w + col];
                    if list.is_empty() {
                        continue;
                    }
                    let mut dc = [0.0; 3];
                    for (c, d) in dc.iter_mut().enumerate().take(ch) {
                        *d = grad_color.get(c, row, col);
                    }
                    if dc.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    pixel_backward(
                        cloud,
                        forward,
                        modality,
                        list,
                        row,
                        col,
                        &dc,
                        &mut acc,
                        &mut scratch,
                    );
                }
            }
            acc
        })
        .collect();

    let mut screen = vec![SplatGrad2D::default(); n];
    for band in &bands {
        for (s, b) in screen.iter_mut().zip(band) {
            s.mean[0] += b.mean[0];
            s.mean[1] += b.mean[1];
            for k in 0..3 {
                s.conic[k] += b.conic[k];
                s.color[k] += b.color[k];
            }
            s.opacity_logit += b.opacity_logit;
        }
    }

    let mut grads = CloudGradients::zeros(cloud);
    let cam_r = camera.rotation_matrix();
    for (i, g) in screen.iter().enumerate() {
        let p = &forward.projected[i];
        if !p.valid {
            continue;
        }
        grads.opacity_logits[i] = g.opacity_logit;
        grads.mean2d[i] = g.mean;
        match modality {
            Modality::Rgb => grads.rgb_colors[i] = g.color,
            Modality::Nir => grads.nir_intensities.as_mut().expect("nir pass")[i] = g.color[0],
        }
        project_backward(cloud, camera, &cam_r, i, p.conic, g, &mut grads);
    }
    Ok(grads)
}

struct Layer {
    idx: usize,
    alpha: f64,
    t: f64,
    g: f64,
    dg_dd2: f64,
    capped: bool,
    opacity: f64,
    dx: f64,
    dy: f64,
    color: [f64; 3],
    pass: [bool; 3],
}

#[allow(clippy::too_many_arguments)]
fn pixel_backward(
    cloud: &GaussianCloud,
    fwd: &RenderOutput,
    modality: Modality,
    list: &[u32],
    row: usize,
    col: usize,
    dc: &[f64; 3],
    acc: &mut [SplatGrad2D],
    layers: &mut Vec<Layer>,
) {
    let ch = modality.channels();
    layers.clear();
    let mut t = 1.0;
    for &i in list {
        let i = i as usize;
        let p = &fwd.projected[i];
        let (d2, dx, dy) = mahalanobis(p, col as f64, row as f64);
        let (g, dg_dd2) = kernel_weight(d2);
        let opacity = sigmoid(cloud.opacity_logits[i]);
        let raw = opacity * g;
        let mut color = [0.0; 3];
        let mut pass = [false; 3];
        for c in 0..ch {
            (color[c], pass[c]) = shade(cloud, modality, i, c);
        }
        let alpha = raw.min(ALPHA_CAP);
        layers.push(Layer {
            idx: i,
            alpha,
            t,
            g,
            dg_dd2,
            capped: raw > ALPHA_CAP,
            opacity,
            dx,
            dy,
            color,
            pass,
        });
        t *= 1.0 - alpha;
    }

    // contribution of everything behind the current layer, background included
    let mut behind = [0.0; 3];
    for c in 0..ch {
        behind[c] = t * fwd.background[c];
    }
    for l in layers.iter().rev() {
        let a = &mut acc[l.idx];
        let wgt = l.alpha * l.t;
        let mut d_alpha = 0.0;
        for c in 0..ch {
            if l.pass[c] {
                a.color[c] += wgt * dc[c];
            }
            d_alpha += (l.t * l.color[c] - behind[c] / (1.0 - l.alpha)) * dc[c];
            behind[c] += wgt * l.color[c];
        }
        if l.capped {
            continue;
        }
        a.opacity_logit += d_alpha * l.g * l.opacity * (1.0 - l.opacity);
        let d_d2 = d_alpha * l.opacity * l.dg_dd2;
        let conic = fwd.projected[l.idx].conic;
        a.mean[0] += d_d2 * -2.0 * (conic[0] * l.dx + conic[1] * l.dy);
        a.mean[1] += d_d2 * -2.0 * (conic[1] * l.dx + conic[2] * l.dy);
        a.conic[0] += d_d2 * l.dx * l.dx;
        a.conic[1] += d_d2 * 2.0 * l.dx * l.dy;
        a.conic[2] += d_d2 * l.dy * l.dy;
    }
}

/// Chains screen-space gradients of splat `i` back through the EWA projection
/// and the covariance parameterisation.
fn project_backward(
    cloud: &GaussianCloud,
    camera: &Camera,
    cam_r: &Matrix3<f64>,
    i: usize,
    conic: [f64; 3],
    g: &SplatGrad2D,
    out: &mut CloudGradients,
) {
    let pc = camera.world_to_camera(&Vector3::from(cloud.positions[i]));
    let (x, y, z) = (pc.x, pc.y, pc.z);
    let (fx, fy) = (camera.fx, camera.fy);

    // conic = cov2d⁻¹  ⇒  dL/dcov = -Q G Q, with G the symmetric gradient on Q
    let q = Matrix2::new(conic[0], conic[1], conic[1], conic[2]);
    let gq = Matrix2::new(g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2]);
    let g_cov2d = -(q * gq * q);

    let jac = projection_jacobian(camera, &pc);
    let t = jac * cam_r;
    let sigma = cloud.covariance(i);
    let g_sigma = t.transpose() * g_cov2d * t;
    let g_t: Matrix2x3<f64> = 2.0 * g_cov2d * t * sigma;
    let g_j = g_t * cam_r.transpose();

    let mut d_pc = Vector3::new(
        g.mean[0] * fx / z,
        g.mean[1] * fy / z,
        -g.mean[0] * fx * x / (z * z) - g.mean[1] * fy * y / (z * z),
    );
    let (z2, z3) = (z * z, z * z * z);
    d_pc.x += g_j[(0, 2)] * (-fx / z2);
    d_pc.y += g_j[(1, 2)] * (-fy / z2);
    d_pc.z += g_j[(0, 0)] * (-fx / z2)
        + g_j[(0, 2)] * (2.0 * fx * x / z3)
        + g_j[(1, 1)] * (-fy / z2)
        + g_j[(1, 2)] * (2.0 * fy * y / z3);
    out.positions[i] = (cam_r.transpose() * d_pc).into();

    // Σ = M Mᵀ with M = R S
    let rot = quat_to_matrix(&cloud.rotations[i]);
    let ls = cloud.log_scales[i];
    let s = Vector3::new(ls[0].exp(), ls[1].exp(), ls[2].exp());
    let m = rot * Matrix3::from_diagonal(&s);
    let g_m = 2.0 * g_sigma * m;
    let mut g_rot = Matrix3::zeros();
    for k in 0..3 {
        let mut d_s = 0.0;
        for r in 0..3 {
            d_s += g_m[(r, k)] * rot[(r, k)];
            g_rot[(r, k)] = g_m[(r, k)] * s[k];
        }
        out.log_scales[i][k] = d_s * s[k];
    }
    out.rotations[i] = quat_backward(&cloud.rotations[i], &g_rot);
}

/// Gradient with respect to the raw quaternion of a loss on the rotation
/// matrix built from its normalisation.
fn quat_backward(raw: &[f64; 4], gr: &Matrix3<f64>) -> [f64; 4] {
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = raw.map(|v| v / norm);
    let g = |r: usize, c: usize| gr[(r, c)];
    let dw =
        2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2)
            + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let dy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2)
            - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let dz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    let d = [dw, dx, dy, dz];
    let qn = [w, x, y, z];
    let dot: f64 = d.iter().zip(&qn).map(|(a, b)| a * b).sum();
    [0, 1, 2, 3].map(|k| (d[k] - qn[k] * dot) / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{rasterize, Modality};
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};

    fn camera(size: usize) -> Camera {
        let mut cam = Camera::look_at(
            0,
            Vector3::new(0.6, -0.4, -4.0),
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
            size as f64 * 1.1,
            size,
            size,
        );
        cam.rotation = UnitQuaternion::from_quaternion(*cam.rotation.quaternion());
        cam
    }

    fn cloud(seed: u64, n: usize) -> GaussianCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut c = GaussianCloud::default();
        for _ in 0..n {
            c.positions.push([(); 3].map(|_| rng.gen_range(-0.7..0.7)));
            c.log_scales
                .push([(); 3].map(|_| rng.gen_range(-2.0f64..-1.0)));
            c.rotations.push([(); 4].map(|_| rng.gen_range(-1.0..1.0)));
            c.opacity_logits.push(rng.gen_range(-1.0..1.5));
            c.rgb_colors.push([(); 3].map(|_| rng.gen_range(0.1..0.9)));
        }
        c.normalize_rotations();
        c.nir_intensities = Some((0..n).map(|_| rng.gen_range(0.1..0.9)).collect());
        c
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let c = cloud(1, 6);
        let cam = camera(24);
        let fwd = rasterize(&c, &cam, Modality::Rgb, &[0.1; 3]).unwrap();
        let g = rasterize_backward(&c, &cam, &fwd, &Image::zeros(24, 24, 3)).unwrap();
        assert_eq!(g, CloudGradients::zeros(&c));
    }

    #[test]
    fn stale_cache_is_detected() {
        let mut c = cloud(2, 4);
        let cam = camera(16);
        let fwd = rasterize(&c, &cam, Modality::Rgb, &[0.0; 3]).unwrap();
        c.opacity_logits[0] += 0.1;
        assert!(matches!(
            rasterize_backward(&c, &cam, &fwd, &Image::zeros(16, 16, 3)),
            Err(Error::StaleCache)
        ));
    }

    #[test]
    fn linear_objective_matches_finite_differences_spot_check() {
        // L = <W, render>, probe a few parameters
        let c = cloud(3, 5);
        let cam = camera(20);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let weights = Image::from_fn(20, 20, 1, |_, _, _| rng.gen_range(-1.0..1.0));
        let loss = |cl: &GaussianCloud| -> f64 {
            let r = rasterize(cl, &cam, Modality::Nir, &[0.2]).unwrap();
            r.color
                .data()
                .iter()
                .zip(weights.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let fwd = rasterize(&c, &cam, Modality::Nir, &[0.2]).unwrap();
        let g = rasterize_backward(&c, &cam, &fwd, &weights).unwrap();
        let h = 1e-6;
        for i in 0..5 {
            for k in 0..3 {
                let mut p = c.clone();
                let mut m = c.clone();
                p.positions[i][k] += h;
                m.positions[i][k] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                let an = g.positions[i][k];
                assert!(
                    (fd - an).abs() <= 1e-5 + 1e-4 * fd.abs(),
                    "pos {i} {k}: {fd} vs {an}"
                );
            }
            let mut p = c.clone();
            let mut m = c.clone();
            p.nir_intensities.as_mut().unwrap()[i] += h;
            m.nir_intensities.as_mut().unwrap()[i] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            let an = g.nir_intensities.as_ref().unwrap()[i];
            assert!(
                (fd - an).abs() <= 1e-6 + 1e-5 * fd.abs(),
                "nir {i}: {fd} vs {an}"
            );
        }
    }
}
