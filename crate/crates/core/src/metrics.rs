//! PSNR/SSIM and held-out evaluation of a checkpoint.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::render::{rasterize, GaussianCloud, Modality};
use crate::scene::Scene;

pub use crate::losses::ssim;

/// Returned for identical images instead of infinity.
pub const PSNR_CAP: f64 = 100.0;

/// `-10 log10(MSE)` for unit dynamic range, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b, "psnr")?;
    let n = a.len().max(1) as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}

/// Averaged held-out metrics of one (scene, configuration, seed) cell.
/// `modality` is `rgb`, `nir`, or `mean` (unweighted mean of the two).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scene: String,
    pub config: String,
    pub modality: String,
    pub psnr: f64,
    pub ssim: f64,
    pub n_views_train: usize,
    pub seed: u64,
}

pub const METRICS_HEADER: &str = "scene,config,modality,psnr,ssim,lpips,n_views_train,seed";

impl MetricsRow {
    /// CSV line; the LPIPS column is left empty.
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},,{},{}",
            self.scene,
            self.config,
            self.modality,
            self.psnr,
            self.ssim,
            self.n_views_train,
            self.seed
        )
    }
}

/// Rendering backgrounds used at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub rgb_background: [f64; 3],
    pub nir_background: f64,
    /// Also evaluate the NIR pass when the checkpoint and scene allow it.
    pub multispectral: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            rgb_background: [0.0; 3],
            nir_background: 0.0,
            multispectral: true,
        }
    }
}

fn average(
    cloud: &GaussianCloud,
    scene: &Scene,
    modality: Modality,
    opts: &EvalOptions,
) -> Result<(f64, f64)> {
    let per_view: Vec<(f64, f64)> = scene
        .split
        .test
        .par_iter()
        .map(|&v| {
            let (gt, bg) = match modality {
                Modality::Rgb => (&scene.rgb_images[v], opts.rgb_background.to_vec()),
                Modality::Nir => (
                    scene.nir(v).ok_or(Error::MissingNir)?,
                    vec![opts.nir_background],
                ),
            };
            let render = rasterize(cloud, &scene.cameras[v], modality, &bg)?
                .color
                .clamp01();
            Ok((psnr(&render, gt)?, ssim(&render, gt)?))
        })
        .collect::<Result<_>>()?;
    let n = per_view.len() as f64;
    // fixed-order sums keep the rows identical across thread counts
    Ok((
        per_view.iter().map(|p| p.0).sum::<f64>() / n,
        per_view.iter().map(|p| p.1).sum::<f64>() / n,
    ))
}

/// Renders every test view and averages PSNR/SSIM. With a multispectral
/// scene and checkpoint, returns `rgb`, `nir` and `mean` rows; otherwise a
/// single `rgb` row.
pub fn evaluate(
    cloud: &GaussianCloud,
    scene: &Scene,
    label: &str,
    scene_id: &str,
    seed: u64,
    opts: &EvalOptions,
) -> Result<Vec<MetricsRow>> {
    if scene.split.test.is_empty() {
        return Err(Error::InvalidArgument("test split is empty".into()));
    }
    let row = |modality: &str, (psnr, ssim): (f64, f64)| MetricsRow {
        scene: scene_id.to_string(),
        config: label.to_string(),
        modality: modality.to_string(),
        psnr,
        ssim,
        n_views_train: scene.split.train.len(),
        seed,
    };
    let rgb = average(cloud, scene, Modality::Rgb, opts)?;
    if !opts.multispectral || !scene.is_multispectral() {
        return Ok(vec![row("rgb", rgb)]);
    }
    if !cloud.has_nir() {
        return Err(Error::MissingNir);
    }
    let nir = average(cloud, scene, Modality::Nir, opts)?;
    let mean = (0.5 * (rgb.0 + nir.0), 0.5 * (rgb.1 + nir.1));
    Ok(vec![row("rgb", rgb), row("nir", nir), row("mean", mean)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::ssim_loss;
    use crate::scene::{generate_synthetic_scene, Split, SyntheticSpec};
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn psnr_cases() {
        let a = Image::filled(4, 4, 3, 0.3);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = a.map(|v| v + 0.01);
        assert!((psnr(&a, &c).unwrap() - 40.0).abs() < 1e-9);
        assert_eq!(psnr(&b, &a).unwrap(), psnr(&a, &b).unwrap());
        assert!(psnr(&a, &Image::zeros(4, 4, 1)).is_err());
    }

    #[test]
    fn psnr_falls_with_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = Image::from_fn(32, 32, 3, |_, _, _| rng.gen::<f64>());
        let noise: Vec<f64> = (0..x.len())
            .map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng))
            .collect();
        let mut last = f64::INFINITY;
        for amp in [0.01, 0.05, 0.2] {
            let mut y = x.clone();
            y.data_mut()
                .iter_mut()
                .zip(&noise)
                .for_each(|(v, n)| *v += amp * n);
            let p = psnr(&x, &y).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_shares_the_loss_code() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let a = Image::from_fn(16, 16, 3, |_, _, _| rng.gen::<f64>());
        let b = Image::from_fn(16, 16, 3, |_, _, _| rng.gen::<f64>());
        assert!((ssim_loss(&a, &b).unwrap().value - (1.0 - ssim(&a, &b).unwrap())).abs() < 1e-9);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-9);
    }

    fn synthetic() -> (GaussianCloud, Scene) {
        let (cloud, mut scene) = generate_synthetic_scene(&SyntheticSpec {
            n_gaussians: 6,
            n_views: 4,
            image_size: 32,
            seed: 1,
            multispectral: true,
        })
        .unwrap();
        scene.split = Split {
            train: vec![0, 2],
            test: vec![1, 3],
        };
        (cloud, scene)
    }

    #[test]
    fn perfect_checkpoint_hits_the_cap() {
        let (cloud, scene) = synthetic();
        let rows = evaluate(&cloud, &scene, "gt", "syn", 0, &EvalOptions::default()).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.modality.as_str()).collect();
        assert_eq!(names, ["rgb", "nir", "mean"]);
        for r in &rows {
            assert_eq!(r.psnr, PSNR_CAP);
            assert!((r.ssim - 1.0).abs() < 1e-12);
        }
        let again = evaluate(&cloud, &scene, "gt", "syn", 0, &EvalOptions::default()).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn evaluation_errors() {
        let (cloud, mut scene) = synthetic();
        assert!(matches!(
            evaluate(
                &cloud.without_nir(),
                &scene,
                "x",
                "s",
                0,
                &EvalOptions::default()
            ),
            Err(Error::MissingNir)
        ));
        scene.split.test.clear();
        assert!(evaluate(&cloud, &scene, "x", "s", 0, &EvalOptions::default()).is_err());
    }
}
