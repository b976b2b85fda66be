use super::{
    global_dwt_loss_per_level, l1_loss, lf_energy_map, patch_dwt_loss, select_patches, ssim_loss,
    PatchSet, SubbandWeights,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::train::TrainConfig;

/// Effective weights of the composite objective at one iteration. A disabled
/// term carries weight zero and is not evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveTerms {
    pub ssim_weight: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Sub-band weights per DWT level.
    pub weights: Vec<SubbandWeights>,
    pub patch_size: usize,
    pub percentile: f64,
}

impl ActiveTerms {
    /// Applies the stage schedule of `config` at `iteration`.
    pub fn at(config: &TrainConfig, iteration: usize) -> Self {
        let stage = config.stage_at(iteration);
        ActiveTerms {
            ssim_weight: config.ssim_weight,
            alpha: if stage.gdwt { config.alpha } else { 0.0 },
            beta: if stage.pdwt { config.beta } else { 0.0 },
            weights: stage.weights,
            patch_size: config.patch_size,
            percentile: config.percentile,
        }
    }
}

/// Raw component values (each unweighted; `ssim` is `1 - SSIM`) and the
/// gradient of the weighted total with respect to the render.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub l1: f64,
    pub ssim: f64,
    pub gdwt: f64,
    pub pdwt: f64,
    pub total: f64,
    pub grad: Image,
    pub terms: ActiveTerms,
    pub n_patches: usize,
}

impl LossReport {
    /// Recombines the components with the active weights.
    pub fn recombined(&self) -> f64 {
        self.l1
            + self.terms.ssim_weight * self.ssim
            + self.terms.alpha * self.gdwt
            + self.terms.beta * self.pdwt
    }
}

/// Selects patches from the E_LF map of `render` and evaluates the staged
/// objective at `iteration`.
pub fn total_loss(
    render: &Image,
    gt: &Image,
    config: &TrainConfig,
    iteration: usize,
) -> Result<LossReport> {
    config.validate()?;
    let terms = ActiveTerms::at(config, iteration);
    let patches = if terms.beta > 0.0 {
        Some(select_patches(
            &lf_energy_map(render)?,
            terms.patch_size,
            terms.percentile,
        )?)
    } else {
        None
    };
    total_loss_with(render, gt, &terms, patches.as_ref())
}

/// Evaluates the objective with explicit weights. `patches` is required
/// whenever `terms.beta > 0`.
pub fn total_loss_with(
    render: &Image,
    gt: &Image,
    terms: &ActiveTerms,
    patches: Option<&PatchSet>,
) -> Result<LossReport> {
    render.check_same_shape(gt, "total loss")?;
    let l1 = l1_loss(render, gt)?;
    let mut grad = l1.grad;
    let mut report = LossReport {
        l1: l1.value,
        ssim: 0.0,
        gdwt: 0.0,
        pdwt: 0.0,
        total: 0.0,
        grad: Image::zeros(0, 0, 0),
        terms: terms.clone(),
        n_patches: 0,
    };
    if terms.ssim_weight > 0.0 {
        let s = ssim_loss(render, gt)?;
        report.ssim = s.value;
        grad.add_scaled(&s.grad, terms.ssim_weight);
    }
    if terms.alpha > 0.0 {
        let g = global_dwt_loss_per_level(render, gt, &terms.weights)?;
        report.gdwt = g.value;
        grad.add_scaled(&g.grad, terms.alpha);
    }
    if terms.beta > 0.0 {
        let patches = patches.ok_or_else(|| {
            Error::InvalidArgument("patch term active without a patch set".into())
        })?;
        let p = patch_dwt_loss(render, gt, patches)?;
        report.pdwt = p.value;
        report.n_patches = patches.len();
        grad.add_scaled(&p.grad, terms.beta);
    }
    report.total = report.recombined();
    report.grad = grad;
    Ok(report)
}

/// Per-modality reports of the shared-geometry objective
/// `rgb.total + lambda_nir · nir.total`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultispectralReport {
    pub rgb: LossReport,
    /// `nir.grad` is the gradient of `nir.total`, before the `lambda_nir` factor.
    pub nir: LossReport,
    pub lambda_nir: f64,
    pub total: f64,
}

impl MultispectralReport {
    /// Gradient of the combined total with respect to the NIR render.
    pub fn nir_total_grad(&self) -> Image {
        let mut g = self.nir.grad.clone();
        g.scale(self.lambda_nir);
        g
    }
}

pub fn multispectral_loss(
    rgb_render: &Image,
    rgb_gt: &Image,
    nir_render: &Image,
    nir_gt: &Image,
    config: &TrainConfig,
    iteration: usize,
) -> Result<MultispectralReport> {
    let rgb = total_loss(rgb_render, rgb_gt, config, iteration)?;
    let nir = total_loss(nir_render, nir_gt, config, iteration)?;
    let total = rgb.total + config.lambda_nir * nir.total;
    Ok(MultispectralReport {
        rgb,
        nir,
        lambda_nir: config.lambda_nir,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::global_dwt_loss;
    use crate::train::Stage;
    use rand::{Rng, SeedableRng};

    fn random(ch: usize, seed: u64) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(32, 32, ch, |_, _, _| rng.gen::<f64>())
    }

    fn all_on() -> TrainConfig {
        TrainConfig {
            patch_size: 8,
            stage_schedule: Some(vec![Stage {
                start_iteration: 0,
                gdwt: true,
                pdwt: true,
                weights: None,
            }]),
            ..Default::default()
        }
    }

    #[test]
    fn component_sum_oracle() {
        let (r, g) = (random(3, 1), random(3, 2));
        let cfg = all_on();
        let rep = total_loss(&r, &g, &cfg, 10).unwrap();
        let patches = select_patches(&lf_energy_map(&r).unwrap(), 8, 0.2).unwrap();
        let expect = l1_loss(&r, &g).unwrap().value
            + 0.2 * ssim_loss(&r, &g).unwrap().value
            + 0.5
                * global_dwt_loss(&r, &g, &SubbandWeights::default(), 1)
                    .unwrap()
                    .value
            + 0.3 * patch_dwt_loss(&r, &g, &patches).unwrap().value;
        assert!((rep.total - expect).abs() < 1e-9);
        assert!((rep.recombined() - rep.total).abs() < 1e-12);
        assert_eq!(rep.n_patches, patches.len());
    }

    #[test]
    fn degenerate_weights() {
        let (r, g) = (random(3, 3), random(3, 4));
        let cfg = TrainConfig {
            alpha: 0.0,
            beta: 0.0,
            ..all_on()
        };
        let rep = total_loss(&r, &g, &cfg, 0).unwrap();
        let expect = l1_loss(&r, &g).unwrap().value + 0.2 * ssim_loss(&r, &g).unwrap().value;
        assert_eq!(rep.total, expect);
        assert_eq!((rep.gdwt, rep.pdwt), (0.0, 0.0));
    }

    #[test]
    fn identity_is_zero() {
        let r = random(3, 5);
        let rep = total_loss(&r, &r, &all_on(), 0).unwrap();
        assert!(rep.total.abs() < 1e-12);
        assert!(rep.grad.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn default_schedule_gates_patch_term() {
        let (r, g) = (random(3, 6), random(3, 7));
        let cfg = TrainConfig {
            iterations: 100,
            patch_size: 8,
            ..Default::default()
        };
        assert_eq!(total_loss(&r, &g, &cfg, 59).unwrap().pdwt, 0.0);
        assert!(total_loss(&r, &g, &cfg, 60).unwrap().pdwt > 0.0);
    }

    #[test]
    fn multispectral_cases() {
        let (r, g) = (random(3, 8), random(3, 9));
        let (nr, ng) = (random(1, 10), random(1, 11));
        let zero = TrainConfig {
            lambda_nir: 0.0,
            ..all_on()
        };
        let ms = multispectral_loss(&r, &g, &nr, &ng, &zero, 0).unwrap();
        assert_eq!(ms.total, total_loss(&r, &g, &zero, 0).unwrap().total);

        let same = multispectral_loss(&r, &r, &nr, &nr, &all_on(), 0).unwrap();
        assert!(same.total.abs() < 1e-12);

        // at lambda = 1 the two modality pairs are interchangeable
        let (a, b) = (random(1, 12), random(1, 13));
        let one = all_on();
        let fwd = multispectral_loss(&a, &b, &nr, &ng, &one, 0).unwrap().total;
        let swp = multispectral_loss(&nr, &ng, &a, &b, &one, 0).unwrap().total;
        assert!((fwd - swp).abs() < 1e-12);
    }

    #[test]
    fn patch_term_needs_patches() {
        let r = random(1, 14);
        let terms = ActiveTerms::at(&all_on(), 0);
        assert!(total_loss_with(&r, &r, &terms, None).is_err());
    }
}
