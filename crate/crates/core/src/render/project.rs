use nalgebra::{Matrix2, Matrix2x3, Vector3};

use super::cloud::GaussianCloud;
use crate::scene::Camera;

/// Primitives closer than this (camera-space z) are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Isotropic pixel² term added to every projected covariance.
pub const COV2D_REGULARIZER: f64 = 0.3;
/// Projected means further than this multiple of the half-image extent from
/// the image centre are culled.
const BOUNDS_MARGIN: f64 = 1.3;

/// Screen-space footprint of one primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct Projected2D {
    pub mean2d: [f64; 2],
    /// `(xx, xy, yy)` of the regularised 2D covariance.
    pub cov2d: [f64; 3],
    /// `(xx, xy, yy)` of the inverse covariance.
    pub conic: [f64; 3],
    pub depth: f64,
    pub valid: bool,
    /// Camera-space position.
    pub cam_pos: [f64; 3],
}

impl Projected2D {
    fn invalid(cam_pos: Vector3<f64>) -> Self {
        Projected2D {
            mean2d: [f64::NAN; 2],
            cov2d: [0.0; 3],
            conic: [0.0; 3],
            depth: cam_pos.z,
            valid: false,
            cam_pos: cam_pos.into(),
        }
    }

    /// Half extents of the axis-aligned box enclosing the kernel support.
    pub fn half_extent(&self, radius: f64) -> [f64; 2] {
        [radius * self.cov2d[0].sqrt(), radius * self.cov2d[2].sqrt()]
    }
}

/// Jacobian of the pinhole projection at a camera-space point.
pub(crate) fn projection_jacobian(camera: &Camera, pc: &Vector3<f64>) -> Matrix2x3<f64> {
    let (x, y, z) = (pc.x, pc.y, pc.z);
    Matrix2x3::new(
        camera.fx / z,
        0.0,
        -camera.fx * x / (z * z),
        0.0,
        camera.fy / z,
        -camera.fy * y / (z * z),
    )
}

pub fn project_one(cloud: &GaussianCloud, camera: &Camera, i: usize) -> Projected2D {
    let p = Vector3::from(cloud.positions[i]);
    let pc = camera.world_to_camera(&p);
    if !(pc.z > NEAR_PLANE) {
        return Projected2D::invalid(pc);
    }
    let mean2d = camera.project_camera_point(&pc);
    let (hw, hh) = (camera.width as f64 / 2.0, camera.height as f64 / 2.0);
    if (mean2d[0] - hw).abs() > BOUNDS_MARGIN * hw || (mean2d[1] - hh).abs() > BOUNDS_MARGIN * hh {
        return Projected2D::invalid(pc);
    }
    let t = projection_jacobian(camera, &pc) * camera.rotation_matrix();
    let cov = t * cloud.covariance(i) * t.transpose() + Matrix2::identity() * COV2D_REGULARIZER;
    let (a, b, c) = (cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]);
    let det = a * c - b * b;
    if !(det > 0.0) || !det.is_finite() {
        return Projected2D::invalid(pc);
    }
    Projected2D {
        mean2d,
        cov2d: [a, b, c],
        conic: [c / det, -b / det, a / det],
        depth: pc.z,
        valid: true,
        cam_pos: pc.into(),
    }
}

/// Projects every primitive; culled ones come back with `valid == false`.
pub fn project(cloud: &GaussianCloud, camera: &Camera) -> Vec<Projected2D> {
    (0..cloud.len())
        .map(|i| project_one(cloud, camera, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn identity_camera() -> Camera {
        Camera {
            id: 0,
            fx: 50.0,
            fy: 60.0,
            cx: 16.0,
            cy: 12.0,
            width: 32,
            height: 24,
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    fn single(pos: [f64; 3], sigma: f64) -> GaussianCloud {
        GaussianCloud {
            positions: vec![pos],
            log_scales: vec![[sigma.ln(); 3]],
            rotations: vec![[1.0, 0.0, 0.0, 0.0]],
            opacity_logits: vec![0.0],
            rgb_colors: vec![[1.0; 3]],
            nir_intensities: None,
        }
    }

    #[test]
    fn on_axis_projects_to_principal_point() {
        let p = project_one(&single([0.0, 0.0, 3.0], 0.1), &identity_camera(), 0);
        assert!(p.valid);
        assert_eq!(p.mean2d, [16.0, 12.0]);
        assert_eq!(p.depth, 3.0);
    }

    #[test]
    fn isotropic_covariance_on_axis() {
        let (sigma, d) = (0.2, 4.0);
        let cam = identity_camera();
        let p = project_one(&single([0.0, 0.0, d], sigma), &cam, 0);
        let expect_x = (cam.fx * sigma / d).powi(2) + 0.3;
        let expect_y = (cam.fy * sigma / d).powi(2) + 0.3;
        assert!((p.cov2d[0] - expect_x).abs() < 1e-12);
        assert!((p.cov2d[2] - expect_y).abs() < 1e-12);
        assert!(p.cov2d[1].abs() < 1e-12);
    }

    #[test]
    fn culling_rules() {
        let cam = identity_camera();
        assert!(!project_one(&single([0.0, 0.0, -2.0], 0.1), &cam, 0).valid);
        assert!(!project_one(&single([0.0, 0.0, 0.005], 0.1), &cam, 0).valid);
        // far off to the side: u = 50 * 5 / 1 + 16 = 266 > 16 + 1.3 * 16
        assert!(!project_one(&single([5.0, 0.0, 1.0], 0.1), &cam, 0).valid);
    }
}
