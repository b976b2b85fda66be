//! Structural similarity with an 11×11 Gaussian window (σ = 1.5), evaluated
//! at every fully-contained window position ("valid" mode) and averaged over
//! positions and channels.

use super::LossGrad;
use crate::error::{Error, Result};
use crate::image::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn kernel_1d() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Valid-mode separable Gaussian filter of a `w × h` plane.
fn blur_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for r in 0..h {
        let line = &src[r * w..(r + 1) * w];
        for x in 0..ow {
            rows[r * ow + x] = k
                .iter()
                .zip(&line[x..x + SSIM_WINDOW])
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for x in 0..ow {
            out[r * ow + x] = (0..SSIM_WINDOW)
                .map(|j| k[j] * rows[(r + j) * ow + x])
                .sum();
        }
    }
    out
}

/// Transpose of [`blur_valid`]: spreads an `(w-10) × (h-10)` map back onto `w × h`.
fn blur_valid_adjoint(map: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for r in 0..oh {
        for x in 0..ow {
            let v = map[r * ow + x];
            for (j, kj) in k.iter().enumerate() {
                rows[(r + j) * ow + x] += kj * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for x in 0..ow {
            let v = rows[r * ow + x];
            for (j, kj) in k.iter().enumerate() {
                out[r * w + x + j] += kj * v;
            }
        }
    }
    out
}

fn check(a: &Image, b: &Image) -> Result<()> {
    a.check_same_shape(b, "ssim")?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    Ok(())
}

/// Mean SSIM and, when requested, its gradient with respect to `x`.
fn ssim_impl(x: &Image, y: &Image, want_grad: bool) -> Result<(f64, Option<Image>)> {
    check(x, y)?;
    let (w, h, ch) = (x.width(), x.height(), x.channels());
    let k = kernel_1d();
    let count = ((w + 1 - SSIM_WINDOW) * (h + 1 - SSIM_WINDOW) * ch) as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Image::zeros(w, h, ch));
    for c in 0..ch {
        let (px, py) = (x.plane(c), y.plane(c));
        let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * b).collect::<Vec<_>>();
        let mu_x = blur_valid(px, w, h, &k);
        let mu_y = blur_valid(py, w, h, &k);
        let xx = blur_valid(&sq(px, px), w, h, &k);
        let yy = blur_valid(&sq(py, py), w, h, &k);
        let xy = blur_valid(&sq(px, py), w, h, &k);
        let m = mu_x.len();
        let (mut g_mu, mut g_xx, mut g_xy) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for i in 0..m {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = xx[i] - mx * mx;
            let vy = yy[i] - my * my;
            let cxy = xy[i] - mx * my;
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * cxy + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = vx + vy + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let ds_dmx = 2.0 * my * a2 / (b1 * b2) - s * 2.0 * mx / b1;
                let ds_dvx = -s / b2;
                let ds_dcxy = 2.0 * a1 / (b1 * b2);
                g_mu[i] = ds_dmx - 2.0 * mx * ds_dvx - my * ds_dcxy;
                g_xx[i] = ds_dvx;
                g_xy[i] = ds_dcxy;
            }
        }
        // x = y is the maximum; skip the roundoff the chain rule would leave
        if let Some(grad) = grad.as_mut().filter(|_| px != py) {
            let b_mu = blur_valid_adjoint(&g_mu, w, h, &k);
            let b_xx = blur_valid_adjoint(&g_xx, w, h, &k);
            let b_xy = blur_valid_adjoint(&g_xy, w, h, &k);
            let out = grad.plane_mut(c);
            for i in 0..w * h {
                out[i] = (b_mu[i] + 2.0 * px[i] * b_xx[i] + py[i] * b_xy[i]) / count;
            }
        }
    }
    Ok((total / count, grad))
}

/// Mean SSIM of two images with unit dynamic range.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    Ok(ssim_impl(a, b, false)?.0)
}

/// `1 - ssim(render, gt)` and its gradient with respect to `render`.
pub fn ssim_loss(render: &Image, gt: &Image) -> Result<LossGrad> {
    let (s, grad) = ssim_impl(render, gt, true)?;
    let mut grad = grad.expect("requested");
    grad.scale(-1.0);
    Ok(LossGrad {
        value: 1.0 - s,
        grad,
    })
}
