use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::SubbandWeights;

/// Adam step sizes per parameter group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub position: f64,
    /// Position step size reached at the last iteration (exponential decay).
    pub position_final: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
    pub nir: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position: 2e-3,
            position_final: 2e-4,
            scale: 1e-2,
            rotation: 5e-3,
            opacity: 5e-2,
            color: 1e-2,
            nir: 1e-2,
        }
    }
}

/// One entry of the frequency-supervision schedule. A stage stays active
/// until the next stage's start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub start_iteration: usize,
    pub gdwt: bool,
    pub pdwt: bool,
    /// Replaces the configured sub-band weights (every level) while active.
    #[serde(default)]
    pub weights: Option<SubbandWeights>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifyConfig {
    pub interval: usize,
    pub start: usize,
    /// No densification at or after this iteration; `None` means 80% of training.
    pub until: Option<usize>,
    /// Mean screen-space positional gradient norm (pixels) that triggers densification.
    pub grad_threshold: f64,
    /// Fraction of each view's residual mask, from the top, that opens the gate.
    /// `1.0` disables the gate.
    pub residual_percentile: f64,
    pub max_gaussians: usize,
    pub prune_opacity: f64,
    /// World-space scale above which a splat is removed.
    pub prune_scale: f64,
    /// World-space scale separating clone (below) from split (at or above).
    pub split_scale: f64,
    pub split_factor: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            interval: 100,
            start: 100,
            until: None,
            grad_threshold: 2e-4,
            residual_percentile: 0.10,
            max_gaussians: 2000,
            prune_opacity: 5e-3,
            prune_scale: 2.0,
            split_scale: 0.1,
            split_factor: 1.6,
        }
    }
}

/// Every tunable of a training run. Serialised as JSON with these field names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rates: LearningRates,
    /// Weight of the global sub-band loss.
    pub alpha: f64,
    /// Weight of the patch-wise sub-band loss.
    pub beta: f64,
    pub subband_weights: SubbandWeights,
    /// Level-2 weights; level 1's are reused when absent.
    pub level2_weights: Option<SubbandWeights>,
    pub dwt_levels: usize,
    pub lambda_nir: f64,
    /// Train the NIR branch jointly (requires NIR images).
    pub multispectral: bool,
    pub patch_size: usize,
    pub percentile: f64,
    pub patch_refresh_interval: usize,
    /// `None` selects the default three-stage schedule scaled to `iterations`.
    pub stage_schedule: Option<Vec<Stage>>,
    pub densify: DensifyConfig,
    pub ssim_weight: f64,
    pub seed: u64,
    pub rgb_background: [f64; 3],
    pub nir_background: f64,
    /// Scale used when an init point has no neighbours.
    pub init_scale: f64,
    pub init_opacity: f64,
    /// Half-width of the cube sampled when the scene has no init points.
    pub random_init_extent: f64,
    pub random_init_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 3000,
            learning_rates: LearningRates::default(),
            alpha: 0.5,
            beta: 0.3,
            subband_weights: SubbandWeights::default(),
            level2_weights: None,
            dwt_levels: 1,
            lambda_nir: 1.0,
            multispectral: false,
            patch_size: 16,
            percentile: 0.2,
            patch_refresh_interval: 50,
            stage_schedule: None,
            densify: DensifyConfig::default(),
            ssim_weight: 0.2,
            seed: 0,
            rgb_background: [0.0; 3],
            nir_background: 0.0,
            init_scale: 0.1,
            init_opacity: 0.1,
            random_init_extent: 1.0,
            random_init_count: 200,
        }
    }
}

/// The four benchmark configurations: RGB-only or shared-geometry
/// multispectral training, each with or without the sub-band losses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "single")]
    Single,
    #[serde(rename = "single+dwt")]
    SingleDwt,
    #[serde(rename = "multi")]
    Multi,
    #[serde(rename = "multi+dwt")]
    MultiDwt,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Single,
        Preset::SingleDwt,
        Preset::Multi,
        Preset::MultiDwt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Single => "single",
            Preset::SingleDwt => "single+dwt",
            Preset::Multi => "multi",
            Preset::MultiDwt => "multi+dwt",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset {name:?}")))
    }

    pub fn multispectral(self) -> bool {
        matches!(self, Preset::Multi | Preset::MultiDwt)
    }

    pub fn uses_dwt(self) -> bool {
        matches!(self, Preset::SingleDwt | Preset::MultiDwt)
    }

    /// `base` with the preset's modality and loss switches applied. The
    /// non-DWT presets zero `alpha` and `beta`; the DWT presets keep `base`'s
    /// values, falling back to the defaults when `base` has them at zero.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let d = TrainConfig::default();
        let mut cfg = base.clone();
        cfg.multispectral = self.multispectral();
        if self.uses_dwt() {
            if cfg.alpha == 0.0 && cfg.beta == 0.0 {
                cfg.alpha = d.alpha;
                cfg.beta = d.beta;
            }
        } else {
            cfg.alpha = 0.0;
            cfg.beta = 0.0;
        }
        cfg
    }
}

/// Loss terms and weights in force at one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct StageTerms {
    pub gdwt: bool,
    pub pdwt: bool,
    /// One weight set per DWT level.
    pub weights: Vec<SubbandWeights>,
}

impl TrainConfig {
    /// L1 + SSIM + LL-only global term from the start, full sub-band weights
    /// from 30%, patch term added from 60% of the run.
    pub fn default_schedule(iterations: usize) -> Vec<Stage> {
        let at = |f: f64| (f * iterations as f64).round() as usize;
        vec![
            Stage {
                start_iteration: 0,
                gdwt: true,
                pdwt: false,
                weights: Some(SubbandWeights::LL_ONLY),
            },
            Stage {
                start_iteration: at(0.3),
                gdwt: true,
                pdwt: false,
                weights: None,
            },
            Stage {
                start_iteration: at(0.6),
                gdwt: true,
                pdwt: true,
                weights: None,
            },
        ]
    }

    pub fn schedule(&self) -> Vec<Stage> {
        self.stage_schedule
            .clone()
            .unwrap_or_else(|| Self::default_schedule(self.iterations))
    }

    pub fn stage_at(&self, iteration: usize) -> StageTerms {
        let schedule = self.schedule();
        // last stage whose start has been reached; ties resolve to the later entry
        let stage = schedule
            .iter()
            .rev()
            .find(|s| s.start_iteration <= iteration)
            .copied()
            .unwrap_or(schedule[0]);
        let mut weights = vec![self.subband_weights];
        if self.dwt_levels == 2 {
            weights.push(self.level2_weights.unwrap_or(self.subband_weights));
        }
        if let Some(w) = stage.weights {
            weights.iter_mut().for_each(|x| *x = w);
        }
        StageTerms {
            gdwt: stage.gdwt,
            pdwt: stage.pdwt,
            weights,
        }
    }

    pub fn densify_until(&self) -> usize {
        self.densify
            .until
            .unwrap_or((0.8 * self.iterations as f64).round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.alpha >= 0.0
            && self.beta >= 0.0
            && self.lambda_nir >= 0.0
            && self.ssim_weight >= 0.0)
        {
            return bad("alpha, beta, lambda_nir and ssim_weight must be >= 0".into());
        }
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return bad(format!(
                "percentile must be in (0, 1), got {}",
                self.percentile
            ));
        }
        if !(1..=2).contains(&self.dwt_levels) {
            return bad(format!(
                "dwt_levels must be 1 or 2, got {}",
                self.dwt_levels
            ));
        }
        if self.patch_size == 0 || self.patch_size % 2 != 0 {
            return bad(format!("patch_size must be even, got {}", self.patch_size));
        }
        if self.patch_refresh_interval == 0 {
            return bad("patch_refresh_interval must be >= 1".into());
        }
        self.subband_weights.validate()?;
        if let Some(w) = &self.level2_weights {
            w.validate()?;
        }
        if let Some(s) = &self.stage_schedule {
            if s.is_empty() || s[0].start_iteration != 0 {
                return bad("stage schedule must start at iteration 0".into());
            }
            if s.windows(2)
                .any(|w| w[1].start_iteration <= w[0].start_iteration)
            {
                return bad("stage starts must be strictly increasing".into());
            }
            for st in s {
                if let Some(w) = &st.weights {
                    w.validate()?;
                }
            }
        }
        let d = &self.densify;
        if !(d.residual_percentile > 0.0 && d.residual_percentile <= 1.0) {
            return bad("densify.residual_percentile must be in (0, 1]".into());
        }
        if d.interval == 0 || !(d.split_factor > 1.0) {
            return bad("densify.interval must be >= 1 and split_factor > 1".into());
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return bad("init_opacity must be in (0, 1)".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|source| Error::Json {
            path: "<config>".into(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let cfg: TrainConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_boundaries() {
        let cfg = TrainConfig {
            iterations: 1000,
            ..Default::default()
        };
        let s0 = cfg.stage_at(0);
        assert!(s0.gdwt && !s0.pdwt);
        assert_eq!(s0.weights, vec![SubbandWeights::LL_ONLY]);
        let s1 = cfg.stage_at(300);
        assert_eq!(s1.weights, vec![SubbandWeights::default()]);
        assert!(!s1.pdwt);
        assert!(!cfg.stage_at(599).pdwt);
        assert!(cfg.stage_at(600).pdwt);
    }

    #[test]
    fn two_level_weights_reuse_level_one() {
        let cfg = TrainConfig {
            dwt_levels: 2,
            stage_schedule: Some(vec![Stage {
                start_iteration: 0,
                gdwt: true,
                pdwt: true,
                weights: None,
            }]),
            ..Default::default()
        };
        assert_eq!(cfg.stage_at(5).weights, vec![SubbandWeights::default(); 2]);
    }

    #[test]
    fn validation() {
        TrainConfig::default().validate().unwrap();
        let bad = [
            TrainConfig {
                alpha: -1.0,
                ..Default::default()
            },
            TrainConfig {
                percentile: 1.0,
                ..Default::default()
            },
            TrainConfig {
                dwt_levels: 3,
                ..Default::default()
            },
            TrainConfig {
                patch_size: 7,
                ..Default::default()
            },
            TrainConfig {
                stage_schedule: Some(vec![
                    Stage {
                        start_iteration: 0,
                        gdwt: true,
                        pdwt: false,
                        weights: None,
                    },
                    Stage {
                        start_iteration: 0,
                        gdwt: true,
                        pdwt: true,
                        weights: None,
                    },
                ]),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn presets() {
        let base = TrainConfig::default();
        assert_eq!(Preset::parse("multi+dwt").unwrap(), Preset::MultiDwt);
        assert!(Preset::parse("dual").is_err());
        let s = Preset::Single.apply(&base);
        assert_eq!((s.alpha, s.beta, s.multispectral), (0.0, 0.0, false));
        let m = Preset::MultiDwt.apply(&s);
        assert_eq!((m.alpha, m.beta, m.multispectral), (0.5, 0.3, true));
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let cfg = TrainConfig {
            iterations: 42,
            lambda_nir: 0.5,
            ..Default::default()
        };
        assert_eq!(TrainConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let partial = TrainConfig::from_json(r#"{"iterations": 7, "alpha": 0.0}"#).unwrap();
        assert_eq!(partial.iterations, 7);
        assert_eq!(partial.beta, 0.3);
        assert!(TrainConfig::from_json(r#"{"itrations": 7}"#).is_err());
    }
}
