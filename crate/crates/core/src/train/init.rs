use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainConfig;
use crate::render::{logit, GaussianCloud};
use crate::scene::{InitPoint, Scene};

const NEIGHBOURS: usize = 3;

/// Rec. 601 luma.
pub fn luminance(rgb: &[f64; 3]) -> f64 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

/// Mean distance from each point to its (up to) three nearest neighbours.
fn knn_mean_distance(points: &[[f64; 3]]) -> Vec<Option<f64>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| {
                    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
                })
                .collect();
            if d.is_empty() {
                return None;
            }
            let k = NEIGHBOURS.min(d.len());
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            let mut near = d[..k].to_vec();
            near.sort_by(f64::total_cmp);
            let mean = near.iter().sum::<f64>() / k as f64;
            (mean > 0.0).then_some(mean)
        })
        .collect()
}

/// One isotropic splat per init point, or a seeded random cube of points
/// when the scene has none. NIR intensities (luminance of the point colour)
/// are allocated when `config.multispectral` is set.
pub fn init_cloud(scene: &Scene, config: &TrainConfig) -> GaussianCloud {
    let points: Vec<InitPoint> = if scene.init_points.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let e = config.random_init_extent;
        (0..config.random_init_count)
            .map(|_| InitPoint {
                position: [(); 3].map(|_| rng.gen_range(-e..=e)),
                color: [(); 3].map(|_| rng.gen_range(0.0..=1.0)),
            })
            .collect()
    } else {
        scene.init_points.clone()
    };
    let positions: Vec<[f64; 3]> = points.iter().map(|p| p.position).collect();
    let dist = knn_mean_distance(&positions);
    let n = points.len();
    GaussianCloud {
        log_scales: dist
            .iter()
            .map(|d| [d.unwrap_or(config.init_scale).ln(); 3])
            .collect(),
        rotations: vec![[1.0, 0.0, 0.0, 0.0]; n],
        opacity_logits: vec![logit(config.init_opacity); n],
        rgb_colors: points.iter().map(|p| p.color).collect(),
        nir_intensities: config
            .multispectral
            .then(|| points.iter().map(|p| luminance(&p.color)).collect()),
        positions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Split;

    fn scene_with(points: Vec<InitPoint>) -> Scene {
        Scene {
            cameras: vec![],
            rgb_images: vec![],
            nir_images: None,
            init_points: points,
            split: Split::default(),
        }
    }

    #[test]
    fn one_splat_per_point() {
        let pts = (0..100)
            .map(|i| InitPoint {
                position: [i as f64 * 0.1, (i % 7) as f64, 0.0],
                color: [0.2, 0.4, 0.6],
            })
            .collect();
        let cloud = init_cloud(&scene_with(pts), &TrainConfig::default());
        assert_eq!(cloud.len(), 100);
        cloud.validate().unwrap();
        assert!((cloud.opacity(0) - 0.1).abs() < 1e-12);
        assert_eq!(cloud.rotations[5], [1.0, 0.0, 0.0, 0.0]);
        assert!(cloud.nir_intensities.is_none());
    }

    #[test]
    fn knn_scale_and_single_point_fallback() {
        let pts = vec![
            InitPoint {
                position: [0.0; 3],
                color: [1.0, 0.0, 0.0],
            },
            InitPoint {
                position: [1.0, 0.0, 0.0],
                color: [0.0; 3],
            },
            InitPoint {
                position: [0.0, 2.0, 0.0],
                color: [0.0; 3],
            },
            InitPoint {
                position: [0.0, 0.0, 3.0],
                color: [0.0; 3],
            },
            InitPoint {
                position: [0.0, 0.0, 10.0],
                color: [0.0; 3],
            },
        ];
        let cfg = TrainConfig {
            multispectral: true,
            ..Default::default()
        };
        let cloud = init_cloud(&scene_with(pts.clone()), &cfg);
        assert!((cloud.log_scales[0][0] - 2.0f64.ln()).abs() < 1e-12);
        assert!((cloud.nir_intensities.as_ref().unwrap()[0] - 0.299).abs() < 1e-12);

        let single = init_cloud(&scene_with(pts[..1].to_vec()), &cfg);
        assert_eq!(single.log_scales[0], [cfg.init_scale.ln(); 3]);
    }

    #[test]
    fn random_fallback_is_seeded() {
        let cfg = TrainConfig {
            random_init_count: 50,
            seed: 9,
            ..Default::default()
        };
        let a = init_cloud(&scene_with(vec![]), &cfg);
        let b = init_cloud(&scene_with(vec![]), &cfg);
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
        let c = init_cloud(&scene_with(vec![]), &TrainConfig { seed: 10, ..cfg });
        assert_ne!(a, c);
    }
}
