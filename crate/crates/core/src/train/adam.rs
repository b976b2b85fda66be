use crate::error::{Error, Result};
use crate::render::{CloudGradients, GaussianCloud};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-15;

/// First and second moments of one parameter group, `stride` values per splat.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub stride: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize, stride: usize) -> Self {
        Moments {
            stride,
            m: vec![0.0; n * stride],
            v: vec![0.0; n * stride],
        }
    }

    /// Number of splats covered.
    pub fn len(&self) -> usize {
        self.m.len() / self.stride
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    fn retain(&mut self, keep: &[bool]) {
        let s = self.stride;
        let mut j = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                self.m.copy_within(i * s..(i + 1) * s, j * s);
                self.v.copy_within(i * s..(i + 1) * s, j * s);
                j += 1;
            }
        }
        self.m.truncate(j * s);
        self.v.truncate(j * s);
    }

    fn push_zero(&mut self) {
        self.m.extend(std::iter::repeat_n(0.0, self.stride));
        self.v.extend(std::iter::repeat_n(0.0, self.stride));
    }

    fn reset(&mut self, i: usize) {
        let s = self.stride;
        self.m[i * s..(i + 1) * s].fill(0.0);
        self.v[i * s..(i + 1) * s].fill(0.0);
    }
}

/// Adam state mirroring the parameter arrays of a [`GaussianCloud`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub positions: Moments,
    pub log_scales: Moments,
    pub rotations: Moments,
    pub opacity_logits: Moments,
    pub rgb_colors: Moments,
    pub nir_intensities: Option<Moments>,
}

/// Step sizes for one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSizes {
    pub position: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
    pub nir: f64,
}

impl OptimizerState {
    pub fn new(cloud: &GaussianCloud) -> Self {
        let n = cloud.len();
        OptimizerState {
            step: 0,
            positions: Moments::zeros(n, 3),
            log_scales: Moments::zeros(n, 3),
            rotations: Moments::zeros(n, 4),
            opacity_logits: Moments::zeros(n, 1),
            rgb_colors: Moments::zeros(n, 3),
            nir_intensities: cloud.has_nir().then(|| Moments::zeros(n, 1)),
        }
    }

    fn groups_mut(&mut self) -> impl Iterator<Item = &mut Moments> {
        [
            &mut self.positions,
            &mut self.log_scales,
            &mut self.rotations,
            &mut self.opacity_logits,
            &mut self.rgb_colors,
        ]
        .into_iter()
        .chain(self.nir_intensities.as_mut())
    }

    /// True when every moment array covers exactly `n` splats.
    pub fn covers(&self, n: usize) -> bool {
        [
            &self.positions,
            &self.log_scales,
            &self.rotations,
            &self.opacity_logits,
            &self.rgb_colors,
        ]
        .into_iter()
        .chain(self.nir_intensities.as_ref())
        .all(|g| g.len() == n)
    }

    pub fn retain(&mut self, keep: &[bool]) {
        self.groups_mut().for_each(|g| g.retain(keep));
    }

    /// Appends zeroed moments for one new splat.
    pub fn push_zero(&mut self) {
        self.groups_mut().for_each(|g| g.push_zero());
    }

    /// Zeroes the moments of splat `i`.
    pub fn reset(&mut self, i: usize) {
        self.groups_mut().for_each(|g| g.reset(i));
    }
}

fn update(params: &mut [f64], grads: &[f64], mom: &mut Moments, lr: f64, bc1: f64, bc2: f64) {
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(mom.m.iter_mut().zip(mom.v.iter_mut()))
    {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// One bias-corrected Adam update of every parameter group, followed by
/// quaternion renormalisation.
pub fn adam_step(
    cloud: &mut GaussianCloud,
    grads: &CloudGradients,
    state: &mut OptimizerState,
    lr: &StepSizes,
) -> Result<()> {
    let n = cloud.len();
    let shapes_ok = grads.positions.len() == n
        && grads.log_scales.len() == n
        && grads.rotations.len() == n
        && grads.opacity_logits.len() == n
        && grads.rgb_colors.len() == n
        && state.covers(n)
        && cloud.has_nir() == state.nir_intensities.is_some();
    if !shapes_ok {
        return Err(Error::DimensionMismatch(format!(
            "optimizer shapes disagree with a {n}-splat cloud"
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    update(
        cloud.positions.as_flattened_mut(),
        grads.positions.as_flattened(),
        &mut state.positions,
        lr.position,
        bc1,
        bc2,
    );
    update(
        cloud.log_scales.as_flattened_mut(),
        grads.log_scales.as_flattened(),
        &mut state.log_scales,
        lr.scale,
        bc1,
        bc2,
    );
    update(
        cloud.rotations.as_flattened_mut(),
        grads.rotations.as_flattened(),
        &mut state.rotations,
        lr.rotation,
        bc1,
        bc2,
    );
    update(
        &mut cloud.opacity_logits,
        &grads.opacity_logits,
        &mut state.opacity_logits,
        lr.opacity,
        bc1,
        bc2,
    );
    update(
        cloud.rgb_colors.as_flattened_mut(),
        grads.rgb_colors.as_flattened(),
        &mut state.rgb_colors,
        lr.color,
        bc1,
        bc2,
    );
    if let (Some(p), Some(m)) = (
        cloud.nir_intensities.as_mut(),
        state.nir_intensities.as_mut(),
    ) {
        match &grads.nir_intensities {
            Some(g) if g.len() == n => update(p, g, m, lr.nir, bc1, bc2),
            Some(_) => return Err(Error::DimensionMismatch("nir gradient length".into())),
            // no NIR pass this step: moments still decay as for a zero gradient
            None => update(p, &vec![0.0; n], m, lr.nir, bc1, bc2),
        }
    }
    cloud.normalize_rotations();
    Ok(())
}
