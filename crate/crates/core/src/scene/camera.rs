use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole camera with a world→camera pose. Camera axes follow the usual
/// vision convention: +x right, +y down, +z forward. Pixel `(col, row)` is
/// centred at coordinate `(col, row)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub id: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

/// One entry of `cameras.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("camera {}: {msg}", self.id)));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad(format!(
                "focal lengths must be positive ({}, {})",
                self.fx, self.fy
            ));
        }
        if self.width == 0 || self.height == 0 {
            return bad("empty image size".into());
        }
        if !(self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64)
        {
            return bad(format!(
                "principal point ({}, {}) outside image",
                self.cx, self.cy
            ));
        }
        if (self.rotation.norm() - 1.0).abs() > 1e-9 {
            return bad("rotation is not unit".into());
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return bad("non-finite translation".into());
        }
        Ok(())
    }

    pub fn from_record(rec: &CameraRecord) -> Result<Self> {
        let q = nalgebra::Quaternion::new(rec.qw, rec.qx, rec.qy, rec.qz);
        let norm = q.norm();
        // decimal JSON rarely round-trips a unit norm exactly
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-3 {
            return Err(Error::InvalidArgument(format!(
                "camera {}: quaternion norm {norm} is not 1",
                rec.id
            )));
        }
        let cam = Camera {
            id: rec.id,
            fx: rec.fx,
            fy: rec.fy,
            cx: rec.cx,
            cy: rec.cy,
            width: rec.width,
            height: rec.height,
            rotation: UnitQuaternion::from_quaternion(q),
            translation: Vector3::new(rec.tx, rec.ty, rec.tz),
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn to_record(&self) -> CameraRecord {
        let q = self.rotation.quaternion();
        CameraRecord {
            id: self.id,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
            tx: self.translation.x,
            ty: self.translation.y,
            tz: self.translation.z,
        }
    }

    /// Camera looking from `eye` at `target`, with `up` mapped to image-up.
    pub fn look_at(
        id: u32,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Self {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
        let translation = -(rotation * eye);
        Camera {
            id,
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rotation,
            translation,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * self.translation)
    }

    /// Pinhole projection of a camera-space point.
    pub fn project_camera_point(&self, pc: &Vector3<f64>) -> [f64; 2] {
        [
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_puts_target_on_axis() {
        let cam = Camera::look_at(
            0,
            Vector3::new(3.0, 1.0, -2.0),
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
            50.0,
            64,
            48,
        );
        cam.validate().unwrap();
        let pc = cam.world_to_camera(&Vector3::zeros());
        assert!(pc.x.abs() < 1e-12 && pc.y.abs() < 1e-12);
        assert!((pc.z - 14f64.sqrt()).abs() < 1e-12);
        assert!((cam.center() - Vector3::new(3.0, 1.0, -2.0)).norm() < 1e-12);
        // world up projects above the principal point (smaller row)
        let above = cam.project_camera_point(&cam.world_to_camera(&Vector3::new(0.0, 0.5, 0.0)));
        assert!(above[1] < cam.cy);
    }

    #[test]
    fn record_round_trip_and_validation() {
        let cam = Camera::look_at(
            4,
            Vector3::new(0.0, 0.0, -4.0),
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
            40.0,
            32,
            32,
        );
        let back = Camera::from_record(&cam.to_record()).unwrap();
        assert!((back.rotation.angle_to(&cam.rotation)).abs() < 1e-12);

        let mut rec = cam.to_record();
        rec.fx = -1.0;
        assert!(Camera::from_record(&rec).is_err());
        let mut rec = cam.to_record();
        rec.cx = 40.0;
        assert!(Camera::from_record(&rec).is_err());
        let mut rec = cam.to_record();
        rec.qw = 2.0;
        assert!(Camera::from_record(&rec).is_err());
    }
}
