use std::hash::{Hash, Hasher};

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Structure-of-arrays Gaussian primitives: shared geometry plus per-modality
/// appearance. Rotations are `(w, x, y, z)` quaternions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianCloud {
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub opacity_logits: Vec<f64>,
    /// Unbounded; clamped to `[0, 1]` when shading.
    pub rgb_colors: Vec<[f64; 3]>,
    pub nir_intensities: Option<Vec<f64>>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Rotation matrix of a (not necessarily normalised) quaternion.
pub fn quat_to_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
        .to_rotation_matrix()
        .into_inner()
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn has_nir(&self) -> bool {
        self.nir_intensities.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let ok = self.log_scales.len() == n
            && self.rotations.len() == n
            && self.opacity_logits.len() == n
            && self.rgb_colors.len() == n
            && self.nir_intensities.as_ref().is_none_or(|v| v.len() == n);
        if !ok {
            return Err(Error::DimensionMismatch(
                "gaussian parameter arrays differ in length".into(),
            ));
        }
        Ok(())
    }

    /// World-space covariance `R diag(exp(2 s)) Rᵀ`.
    pub fn covariance(&self, i: usize) -> Matrix3<f64> {
        let r = quat_to_matrix(&self.rotations[i]);
        let s = self.log_scales[i];
        let d = Matrix3::from_diagonal(&Vector3::new(
            (2.0 * s[0]).exp(),
            (2.0 * s[1]).exp(),
            (2.0 * s[2]).exp(),
        ));
        r * d * r.transpose()
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn max_scale(&self, i: usize) -> f64 {
        self.log_scales[i]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .exp()
    }

    pub fn normalize_rotations(&mut self) {
        for q in self.rotations.iter_mut() {
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 && n.is_finite() {
                q.iter_mut().for_each(|v| *v /= n);
            } else {
                *q = [1.0, 0.0, 0.0, 0.0];
            }
        }
    }

    /// Keeps the primitives whose `keep` flag is set.
    pub fn retain(&mut self, keep: &[bool]) {
        fn filter<T: Copy>(v: &mut Vec<T>, keep: &[bool]) {
            let mut i = 0;
            v.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        }
        filter(&mut self.positions, keep);
        filter(&mut self.log_scales, keep);
        filter(&mut self.rotations, keep);
        filter(&mut self.opacity_logits, keep);
        filter(&mut self.rgb_colors, keep);
        if let Some(n) = self.nir_intensities.as_mut() {
            filter(n, keep);
        }
    }

    /// Appends a copy of primitive `i`.
    pub fn push_copy(&mut self, i: usize) {
        self.positions.push(self.positions[i]);
        self.log_scales.push(self.log_scales[i]);
        self.rotations.push(self.rotations[i]);
        self.opacity_logits.push(self.opacity_logits[i]);
        self.rgb_colors.push(self.rgb_colors[i]);
        if let Some(n) = self.nir_intensities.as_mut() {
            n.push(n[i]);
        }
    }

    /// Hash of every parameter bit; used to detect a stale forward cache.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        let mut put = |v: f64| v.to_bits().hash(&mut h);
        self.positions.iter().flatten().for_each(|&v| put(v));
        self.log_scales.iter().flatten().for_each(|&v| put(v));
        self.rotations.iter().flatten().for_each(|&v| put(v));
        self.opacity_logits.iter().for_each(|&v| put(v));
        self.rgb_colors.iter().flatten().for_each(|&v| put(v));
        if let Some(n) = &self.nir_intensities {
            n.iter().for_each(|&v| put(v));
        }
        self.len().hash(&mut h);
        h.finish()
    }

    /// Copy with the primitive order permuted: entry `k` of the result is
    /// entry `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        GaussianCloud {
            positions: perm.iter().map(|&i| self.positions[i]).collect(),
            log_scales: perm.iter().map(|&i| self.log_scales[i]).collect(),
            rotations: perm.iter().map(|&i| self.rotations[i]).collect(),
            opacity_logits: perm.iter().map(|&i| self.opacity_logits[i]).collect(),
            rgb_colors: perm.iter().map(|&i| self.rgb_colors[i]).collect(),
            nir_intensities: self
                .nir_intensities
                .as_ref()
                .map(|n| perm.iter().map(|&i| n[i]).collect()),
        }
    }

    /// The RGB-only view of this cloud (geometry and RGB appearance).
    pub fn without_nir(&self) -> Self {
        GaussianCloud {
            nir_intensities: None,
            ..self.clone()
        }
    }
}
