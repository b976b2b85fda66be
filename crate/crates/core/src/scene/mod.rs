//! Scene ingestion, few-shot view splits and synthetic scenes.
//!
//! On-disk layout:
//!
//! ```text
//! cameras.json   [{id, fx, fy, cx, cy, width, height, qw, qx, qy, qz, tx, ty, tz}, ...]
//! images/<id>.png
//! nir/<id>.png   optional, grayscale
//! points.json    optional, [{x, y, z, r, g, b}, ...]
//! ```
//!
//! Quaternions are world→camera in the Hamilton convention.

mod camera;
mod synthetic;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

pub use camera::{Camera, CameraRecord};
pub use synthetic::{generate_synthetic_scene, ring_cameras, SyntheticSpec};

use crate::error::{Error, Result};
use crate::image::{load_image, save_image, BitDepth, Image};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitPoint {
    pub position: [f64; 3],
    pub color: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct PointRecord {
    x: f64,
    y: f64,
    z: f64,
    r: f64,
    g: f64,
    b: f64,
}

/// Train/test partition over view indices (positions in the id-sorted view list).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub cameras: Vec<Camera>,
    pub rgb_images: Vec<Image>,
    pub nir_images: Option<Vec<Image>>,
    pub init_points: Vec<InitPoint>,
    pub split: Split,
}

impl Scene {
    pub fn n_views(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_multispectral(&self) -> bool {
        self.nir_images.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cameras.len();
        if self.rgb_images.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} cameras but {} rgb images",
                n,
                self.rgb_images.len()
            )));
        }
        if let Some(nir) = &self.nir_images {
            if nir.len() != n {
                return Err(Error::ViewCountMismatch {
                    rgb: n,
                    nir: nir.len(),
                });
            }
        }
        for (i, cam) in self.cameras.iter().enumerate() {
            cam.validate()?;
            let rgb = &self.rgb_images[i];
            if rgb.channels() != 3 || rgb.width() != cam.width || rgb.height() != cam.height {
                return Err(Error::DimensionMismatch(format!(
                    "view {}: rgb image {}x{}x{} vs camera {}x{}",
                    cam.id,
                    rgb.width(),
                    rgb.height(),
                    rgb.channels(),
                    cam.width,
                    cam.height
                )));
            }
            if let Some(nir) = &self.nir_images {
                let m = &nir[i];
                if m.channels() != 1 || m.width() != cam.width || m.height() != cam.height {
                    return Err(Error::DimensionMismatch(format!(
                        "view {}: nir image shape",
                        cam.id
                    )));
                }
            }
        }
        let all = self.split.train.iter().chain(&self.split.test);
        if let Some(&bad) = all.clone().find(|&&v| v >= n) {
            return Err(Error::InvalidArgument(format!(
                "split references view {bad} of {n}"
            )));
        }
        if self.split.train.iter().any(|v| self.split.test.contains(v)) {
            return Err(Error::InvalidArgument(
                "train and test splits overlap".into(),
            ));
        }
        Ok(())
    }

    /// Single-channel NIR image of view `i`.
    pub fn nir(&self, i: usize) -> Option<&Image> {
        self.nir_images.as_ref().map(|v| &v[i])
    }

    /// The same scene without its NIR folder.
    pub fn rgb_only(&self) -> Scene {
        Scene {
            nir_images: None,
            ..self.clone()
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn count_pngs(dir: &Path) -> Result<usize> {
    let mut n = 0;
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            n += 1;
        }
    }
    Ok(n)
}

/// Loads a scene directory. With `multispectral`, the `nir/` folder is
/// required and must hold one image per view. The split puts every view in
/// training until [`select_train_views`] is applied.
pub fn load_scene(dir: impl AsRef<Path>, multispectral: bool) -> Result<Scene> {
    let dir = dir.as_ref();
    let mut records: Vec<CameraRecord> = read_json(&dir.join("cameras.json"))?;
    records.sort_by_key(|r| r.id);
    if records.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::InvalidArgument("duplicate camera ids".into()));
    }
    let cameras = records
        .iter()
        .map(Camera::from_record)
        .collect::<Result<Vec<_>>>()?;

    let images_dir = dir.join("images");
    if !images_dir.is_dir() {
        return Err(Error::MissingFile(images_dir));
    }
    let n_rgb = count_pngs(&images_dir)?;
    let nir_dir = dir.join("nir");
    if multispectral {
        if !nir_dir.is_dir() {
            return Err(Error::MissingFile(nir_dir));
        }
        let n_nir = count_pngs(&nir_dir)?;
        if n_nir != n_rgb {
            return Err(Error::ViewCountMismatch {
                rgb: n_rgb,
                nir: n_nir,
            });
        }
    }

    let mut rgb_images = Vec::with_capacity(cameras.len());
    for cam in &cameras {
        let img = load_image(images_dir.join(format!("{}.png", cam.id)))?;
        rgb_images.push(match img.channels() {
            3 => img,
            _ => {
                let g = img;
                Image::from_fn(g.width(), g.height(), 3, |_, r, x| g.get(0, r, x))
            }
        });
    }
    let nir_images = if multispectral {
        let mut v = Vec::with_capacity(cameras.len());
        for cam in &cameras {
            let img = load_image(nir_dir.join(format!("{}.png", cam.id)))?;
            if img.channels() != 1 {
                return Err(Error::UnsupportedImage {
                    path: nir_dir.join(format!("{}.png", cam.id)),
                    reason: "nir images must be grayscale".into(),
                });
            }
            v.push(img);
        }
        Some(v)
    } else {
        None
    };

    let points_path = dir.join("points.json");
    let init_points = if points_path.exists() {
        read_json::<Vec<PointRecord>>(&points_path)?
            .into_iter()
            .map(|p| InitPoint {
                position: [p.x, p.y, p.z],
                color: [p.r, p.g, p.b],
            })
            .collect()
    } else {
        Vec::new()
    };

    let n = cameras.len();
    let scene = Scene {
        cameras,
        rgb_images,
        nir_images,
        init_points,
        split: Split {
            train: (0..n).collect(),
            test: Vec::new(),
        },
    };
    scene.validate()?;
    Ok(scene)
}

/// Writes a scene in the directory layout read by [`load_scene`]. Images are
/// stored as 16-bit PNG.
pub fn save_scene(scene: &Scene, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("images"))?;
    let records: Vec<CameraRecord> = scene.cameras.iter().map(Camera::to_record).collect();
    std::fs::write(
        dir.join("cameras.json"),
        serde_json::to_string_pretty(&records).expect("serialisable"),
    )?;
    for (cam, img) in scene.cameras.iter().zip(&scene.rgb_images) {
        save_image(
            img,
            dir.join("images").join(format!("{}.png", cam.id)),
            BitDepth::Sixteen,
        )?;
    }
    if let Some(nir) = &scene.nir_images {
        std::fs::create_dir_all(dir.join("nir"))?;
        for (cam, img) in scene.cameras.iter().zip(nir) {
            save_image(
                img,
                dir.join("nir").join(format!("{}.png", cam.id)),
                BitDepth::Sixteen,
            )?;
        }
    }
    if !scene.init_points.is_empty() {
        let pts: Vec<PointRecord> = scene
            .init_points
            .iter()
            .map(|p| PointRecord {
                x: p.position[0],
                y: p.position[1],
                z: p.position[2],
                r: p.color[0],
                g: p.color[1],
                b: p.color[2],
            })
            .collect();
        std::fs::write(
            dir.join("points.json"),
            serde_json::to_string_pretty(&pts).expect("serialisable"),
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitProtocol {
    /// Evenly spaced over the sorted views: `floor(i (V - 1) / (n - 1))`.
    Uniform,
    SeededRandom,
}

/// Training view indices for `n_views` views; a pure function of its inputs.
pub fn train_view_indices(
    n_views: usize,
    n_train: usize,
    protocol: SplitProtocol,
    seed: u64,
) -> Result<Vec<usize>> {
    if n_train < 1 || n_train >= n_views {
        return Err(Error::InvalidArgument(format!(
            "n_train must be in [1, {}), got {n_train}",
            n_views
        )));
    }
    Ok(match protocol {
        SplitProtocol::Uniform if n_train == 1 => vec![0],
        SplitProtocol::Uniform => (0..n_train)
            .map(|i| i * (n_views - 1) / (n_train - 1))
            .collect(),
        SplitProtocol::SeededRandom => {
            let mut ids: Vec<usize> = (0..n_views).collect();
            ids.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let mut train = ids[..n_train].to_vec();
            train.sort_unstable();
            train
        }
    })
}

/// Returns a copy of `scene` with `n_train` training views; the rest are test views.
pub fn select_train_views(
    scene: &Scene,
    n_train: usize,
    protocol: SplitProtocol,
    seed: u64,
) -> Result<Scene> {
    let n = scene.n_views();
    let train = train_view_indices(n, n_train, protocol, seed)?;
    let test = (0..n).filter(|v| !train.contains(v)).collect();
    Ok(Scene {
        split: Split { train, test },
        ..scene.clone()
    })
}
