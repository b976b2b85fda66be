use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Camera, InitPoint, Scene, Split};
use crate::error::{Error, Result};
use crate::render::{logit, rasterize, GaussianCloud, Modality};

/// Parameters of a generated scene with exact poses and renders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_gaussians: usize,
    pub n_views: usize,
    pub image_size: usize,
    pub seed: u64,
    pub multispectral: bool,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_gaussians == 0 || self.n_views == 0 || self.image_size == 0 {
            return Err(Error::InvalidArgument(
                "synthetic counts must be >= 1".into(),
            ));
        }
        if self.image_size % 2 != 0 {
            return Err(Error::InvalidArgument(
                "synthetic image size must be even".into(),
            ));
        }
        Ok(())
    }
}

const RING_RADIUS: f64 = 4.0;
const RING_HEIGHT: f64 = 1.2;
const FOCAL_PER_PIXEL: f64 = 1.1;
const INIT_POSITION_NOISE: f64 = 0.05;
const INIT_COLOR_NOISE: f64 = 0.05;

/// Cameras on a ring around the origin, all looking at it.
pub fn ring_cameras(n_views: usize, image_size: usize) -> Vec<Camera> {
    (0..n_views)
        .map(|v| {
            let theta = 2.0 * std::f64::consts::PI * v as f64 / n_views as f64;
            // alternate heights so views are not coplanar
            let height = if v % 2 == 0 {
                RING_HEIGHT
            } else {
                -0.5 * RING_HEIGHT
            };
            let eye = Vector3::new(
                RING_RADIUS * theta.sin(),
                height,
                -RING_RADIUS * theta.cos(),
            );
            Camera::look_at(
                v as u32,
                eye,
                Vector3::zeros(),
                Vector3::new(0.0, 1.0, 0.0),
                FOCAL_PER_PIXEL * image_size as f64,
                image_size,
                image_size,
            )
        })
        .collect()
}

/// Generates a random cloud, renders it from a camera ring, and returns the
/// cloud together with the scene built from the renders. Init points are the
/// true means and colours with small seeded noise. Deterministic in `spec`.
pub fn generate_synthetic_scene(spec: &SyntheticSpec) -> Result<(GaussianCloud, Scene)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_gaussians;
    let mut cloud = GaussianCloud::default();
    for _ in 0..n {
        cloud
            .positions
            .push([(); 3].map(|_| rng.gen_range(-0.9..0.9)));
        cloud
            .log_scales
            .push([(); 3].map(|_| rng.gen_range(0.12f64..0.35).ln()));
        cloud
            .rotations
            .push([(); 4].map(|_| rng.gen_range(-1.0..1.0)));
        cloud.opacity_logits.push(logit(rng.gen_range(0.6..0.95)));
        cloud
            .rgb_colors
            .push([(); 3].map(|_| rng.gen_range(0.1..0.9)));
    }
    cloud.normalize_rotations();
    if spec.multispectral {
        cloud.nir_intensities = Some((0..n).map(|_| rng.gen_range(0.1..0.9)).collect());
    }

    let cameras = ring_cameras(spec.n_views, spec.image_size);
    let mut rgb_images = Vec::with_capacity(spec.n_views);
    let mut nir_images = Vec::with_capacity(spec.n_views);
    for cam in &cameras {
        rgb_images.push(rasterize(&cloud, cam, Modality::Rgb, &[0.0; 3])?.color);
        if spec.multispectral {
            nir_images.push(rasterize(&cloud, cam, Modality::Nir, &[0.0])?.color);
        }
    }

    let pos_noise = Normal::new(0.0, INIT_POSITION_NOISE).expect("valid sigma");
    let col_noise = Normal::new(0.0, INIT_COLOR_NOISE).expect("valid sigma");
    let init_points = (0..n)
        .map(|i| InitPoint {
            position: cloud.positions[i].map(|v| v + pos_noise.sample(&mut rng)),
            color: cloud.rgb_colors[i].map(|v| (v + col_noise.sample(&mut rng)).clamp(0.0, 1.0)),
        })
        .collect();

    let scene = Scene {
        cameras,
        rgb_images,
        nir_images: spec.multispectral.then_some(nir_images),
        init_points,
        split: Split {
            train: (0..spec.n_views).collect(),
            test: Vec::new(),
        },
    };
    scene.validate()?;
    Ok((cloud, scene))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64, multispectral: bool) -> SyntheticSpec {
        SyntheticSpec {
            n_gaussians: 8,
            n_views: 4,
            image_size: 24,
            seed,
            multispectral,
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let (c1, s1) = generate_synthetic_scene(&spec(7, true)).unwrap();
        let (c2, s2) = generate_synthetic_scene(&spec(7, true)).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(s1, s2);
        let (c3, _) = generate_synthetic_scene(&spec(8, true)).unwrap();
        assert_ne!(c1, c3);
    }

    #[test]
    fn multispectral_lists_match() {
        let (cloud, scene) = generate_synthetic_scene(&spec(1, true)).unwrap();
        assert_eq!(scene.rgb_images.len(), 4);
        assert_eq!(scene.nir_images.as_ref().unwrap().len(), 4);
        assert!(cloud.has_nir());
        assert_ne!(
            scene.nir(0).unwrap().data(),
            scene.rgb_images[0].channel(0).data()
        );
        let (_, rgb_only) = generate_synthetic_scene(&spec(1, false)).unwrap();
        assert!(rgb_only.nir_images.is_none());
    }

    #[test]
    fn rejects_bad_spec() {
        let mut s = spec(0, false);
        s.image_size = 23;
        assert!(generate_synthetic_scene(&s).is_err());
        s.image_size = 24;
        s.n_views = 0;
        assert!(generate_synthetic_scene(&s).is_err());
    }

    #[test]
    fn single_gaussian_brightest_pixel_at_projected_mean() {
        let s = SyntheticSpec {
            n_gaussians: 1,
            n_views: 3,
            image_size: 32,
            seed: 11,
            multispectral: false,
        };
        let (cloud, scene) = generate_synthetic_scene(&s).unwrap();
        for (cam, img) in scene.cameras.iter().zip(&scene.rgb_images) {
            let pc = cam.world_to_camera(&Vector3::from(cloud.positions[0]));
            let m = cam.project_camera_point(&pc);
            let lum = |r: usize, c: usize| (0..3).map(|k| img.get(k, r, c)).sum::<f64>();
            let mut best = (0, 0);
            for r in 0..32 {
                for c in 0..32 {
                    if lum(r, c) > lum(best.0, best.1) {
                        best = (r, c);
                    }
                }
            }
            // nearest pixel centre to the mean, up to a half-pixel tie
            assert!(
                (best.0 as f64 - m[1]).abs() <= 0.5 + 1e-9,
                "{best:?} vs {m:?}"
            );
            assert!(
                (best.1 as f64 - m[0]).abs() <= 0.5 + 1e-9,
                "{best:?} vs {m:?}"
            );
        }
    }
}
