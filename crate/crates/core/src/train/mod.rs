//! The optimisation loop: Adam over every splat parameter, staged frequency
//! supervision, and residual-gated densification.

mod adam;
mod config;
mod densify;
mod init;

pub use adam::{adam_step, Moments, OptimizerState, StepSizes, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use config::{DensifyConfig, LearningRates, Preset, Stage, StageTerms, TrainConfig};
pub use densify::{densify_and_prune, residual_mask, DensifyOutcome, GradStats, ResidualMask};
pub use init::{init_cloud, luminance};

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::{
    lf_energy_map, select_patches, total_loss_with, ActiveTerms, LossReport, PatchSet,
};
use crate::metrics::psnr;
use crate::render::{checkpoint, rasterize, rasterize_backward, GaussianCloud, Modality};
use crate::scene::Scene;

pub const LOG_HEADER: &str = "iter,l1,ssim,gdwt,pdwt,total,n_gaussians,train_psnr";

/// One training iteration's log entry. Loss components sum the RGB value and
/// `lambda_nir` times the NIR value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub l1: f64,
    pub ssim: f64,
    pub gdwt: f64,
    pub pdwt: f64,
    pub total: f64,
    pub n_gaussians: usize,
    pub train_psnr: f64,
}

impl LogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iter,
            self.l1,
            self.ssim,
            self.gdwt,
            self.pdwt,
            self.total,
            self.n_gaussians,
            self.train_psnr
        )
    }
}

pub fn write_log(rows: &[LogRow], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{LOG_HEADER}")?;
    for r in rows {
        writeln!(f, "{}", r.csv())?;
    }
    f.flush()?;
    Ok(())
}

/// Cached patch selection for one (view, modality) pair.
struct CachedPatches {
    refreshed_at: usize,
    patches: PatchSet,
}

/// Stateful training driver; [`Trainer::step`] runs exactly one iteration.
pub struct Trainer<'a> {
    scene: &'a Scene,
    config: TrainConfig,
    cloud: GaussianCloud,
    state: OptimizerState,
    stats: GradStats,
    masks: Vec<Option<ResidualMask>>,
    patches: Vec<[Option<CachedPatches>; 2]>,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(scene: &'a Scene, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        scene.validate()?;
        if scene.split.train.is_empty() {
            return Err(Error::InvalidArgument("scene has no training views".into()));
        }
        if config.multispectral && !scene.is_multispectral() {
            return Err(Error::MissingNir);
        }
        let cloud = init_cloud(scene, &config);
        Ok(Self::with_cloud(scene, config, cloud))
    }

    /// Starts from an explicit cloud instead of [`init_cloud`].
    pub fn with_cloud(scene: &'a Scene, config: TrainConfig, cloud: GaussianCloud) -> Self {
        let n_views = scene.n_views();
        Trainer {
            state: OptimizerState::new(&cloud),
            stats: GradStats::new(cloud.len()),
            masks: vec![None; n_views],
            patches: (0..n_views).map(|_| [None, None]).collect(),
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed)),
            iteration: 0,
            scene,
            config,
            cloud,
        }
    }

    pub fn cloud(&self) -> &GaussianCloud {
        &self.cloud
    }

    pub fn into_cloud(self) -> GaussianCloud {
        self.cloud
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn nir_active(&self) -> bool {
        self.config.multispectral && self.config.lambda_nir > 0.0
    }

    fn step_sizes(&self) -> StepSizes {
        let lr = &self.config.learning_rates;
        let t = self.iteration as f64 / (self.config.iterations.max(2) - 1) as f64;
        StepSizes {
            position: lr.position * (lr.position_final / lr.position).powf(t.min(1.0)),
            scale: lr.scale,
            rotation: lr.rotation,
            opacity: lr.opacity,
            color: lr.color,
            nir: lr.nir,
        }
    }

    fn patch_set(
        &mut self,
        view: usize,
        modality: Modality,
        render: &Image,
        terms: &ActiveTerms,
    ) -> Result<Option<PatchSet>> {
        if terms.beta <= 0.0 {
            return Ok(None);
        }
        let slot = &mut self.patches[view][modality as usize];
        let stale = slot
            .as_ref()
            .is_none_or(|c| self.iteration - c.refreshed_at >= self.config.patch_refresh_interval);
        if stale {
            let patches =
                select_patches(&lf_energy_map(render)?, terms.patch_size, terms.percentile)?;
            *slot = Some(CachedPatches {
                refreshed_at: self.iteration,
                patches,
            });
        }
        Ok(slot.as_ref().map(|c| c.patches.clone()))
    }

    fn check_finite(&self, rep: &LossReport, what: &str) -> Result<()> {
        if rep.total.is_finite() && rep.grad.is_finite() {
            return Ok(());
        }
        Err(Error::NonFinite {
            iteration: self.iteration,
            detail: format!(
                "{what}: l1={} ssim={} gdwt={} pdwt={} total={} n_gaussians={}",
                rep.l1,
                rep.ssim,
                rep.gdwt,
                rep.pdwt,
                rep.total,
                self.cloud.len()
            ),
        })
    }

    /// Renders the next training view (round-robin), back-propagates the
    /// staged objective, applies Adam and, on schedule, densifies.
    pub fn step(&mut self) -> Result<LogRow> {
        let scene: &'a Scene = self.scene;
        let train = &scene.split.train;
        let view = train[self.iteration % train.len()];
        let cam = &scene.cameras[view];
        let terms = ActiveTerms::at(&self.config, self.iteration);

        let rgb_gt = &scene.rgb_images[view];
        let rgb = rasterize(&self.cloud, cam, Modality::Rgb, &self.config.rgb_background)?;
        let patches = self.patch_set(view, Modality::Rgb, &rgb.color, &terms)?;
        let rgb_rep = total_loss_with(&rgb.color, rgb_gt, &terms, patches.as_ref())?;
        self.check_finite(&rgb_rep, "rgb")?;
        let mut grads = rasterize_backward(&self.cloud, cam, &rgb, &rgb_rep.grad)?;
        let mut row = LogRow {
            iter: self.iteration,
            l1: rgb_rep.l1,
            ssim: rgb_rep.ssim,
            gdwt: rgb_rep.gdwt,
            pdwt: rgb_rep.pdwt,
            total: rgb_rep.total,
            n_gaussians: self.cloud.len(),
            train_psnr: psnr(&rgb.color, rgb_gt)?,
        };

        let mut nir_pair = None;
        if self.nir_active() {
            let nir_gt = scene.nir(view).ok_or(Error::MissingNir)?;
            let nir = rasterize(
                &self.cloud,
                cam,
                Modality::Nir,
                &[self.config.nir_background],
            )?;
            let patches = self.patch_set(view, Modality::Nir, &nir.color, &terms)?;
            let rep = total_loss_with(&nir.color, nir_gt, &terms, patches.as_ref())?;
            self.check_finite(&rep, "nir")?;
            let mut g = rep.grad.clone();
            g.scale(self.config.lambda_nir);
            grads.accumulate(&rasterize_backward(&self.cloud, cam, &nir, &g)?);
            let lam = self.config.lambda_nir;
            row.l1 += lam * rep.l1;
            row.ssim += lam * rep.ssim;
            row.gdwt += lam * rep.gdwt;
            row.pdwt += lam * rep.pdwt;
            row.total += lam * rep.total;
            nir_pair = Some((nir.color, nir_gt));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite {
                iteration: self.iteration,
                detail: format!(
                    "parameter gradient, total={} n_gaussians={}",
                    row.total,
                    self.cloud.len()
                ),
            });
        }

        self.masks[view] = Some(residual_mask(
            &rgb.color,
            rgb_gt,
            nir_pair.as_ref().map(|(r, g)| (r, *g)),
        )?);
        let d = self.config.densify;
        let until = self.config.densify_until();
        if self.iteration < until {
            self.stats.record(&grads, &rgb.projected);
        }
        let sizes = self.step_sizes();
        adam_step(&mut self.cloud, &grads, &mut self.state, &sizes)?;

        self.iteration += 1;
        let it = self.iteration;
        if it >= d.start && it < until && it % d.interval == 0 {
            let views: Vec<_> = train
                .iter()
                .filter_map(|&v| self.masks[v].as_ref().map(|m| (&scene.cameras[v], m)))
                .collect();
            densify_and_prune(
                &mut self.cloud,
                &mut self.state,
                &self.stats,
                &views,
                &d,
                &mut self.rng,
            );
            self.stats = GradStats::new(self.cloud.len());
        }
        Ok(row)
    }
}

/// Final cloud and per-iteration log of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub cloud: GaussianCloud,
    pub log: Vec<LogRow>,
}

/// Runs `config.iterations` steps from [`init_cloud`].
pub fn train(scene: &Scene, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut t = Trainer::new(scene, config.clone())?;
    let mut log = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        log.push(t.step()?);
    }
    Ok(TrainOutcome {
        cloud: t.into_cloud(),
        log,
    })
}

/// Paths written by [`train_to_dir`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

/// Trains and writes `checkpoint.wspl`, `log.csv` and `config.json` into
/// `out`. On a non-finite loss the pre-step cloud is saved as
/// `failed.wspl` next to the partial log before the error is returned.
pub fn train_to_dir(
    scene: &Scene,
    config: &TrainConfig,
    out: impl AsRef<Path>,
) -> Result<TrainArtifacts> {
    let out = out.as_ref();
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), config.to_json())?;
    let mut t = Trainer::new(scene, config.clone())?;
    let mut log = Vec::with_capacity(config.iterations);
    let arts = TrainArtifacts {
        checkpoint: out.join("checkpoint.wspl"),
        log: out.join("log.csv"),
    };
    for _ in 0..config.iterations {
        match t.step() {
            Ok(row) => log.push(row),
            Err(e) => {
                write_log(&log, &arts.log)?;
                if matches!(e, Error::NonFinite { .. }) {
                    checkpoint::save(t.cloud(), out.join("failed.wspl"))?;
                }
                return Err(e);
            }
        }
    }
    write_log(&log, &arts.log)?;
    checkpoint::save(t.cloud(), &arts.checkpoint)?;
    Ok(arts)
}
