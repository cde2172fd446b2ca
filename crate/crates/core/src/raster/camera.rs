use nalgebra::{Matrix3x2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::geometry::Vec3;

/// Points closer to the eye plane than this are treated as behind the camera.
pub const NEAR: f64 = 1e-6;

/// Pinhole camera. Image rows run top to bottom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraFile", into = "CameraFile")]
pub struct Camera {
    pub eye: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Radians.
    pub vertical_fov: f64,
    pub width: usize,
    pub height: usize,
}

/// On-disk form; the field of view is stored in degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    eye: Vec3,
    look_at: Vec3,
    up: Vec3,
    fov_deg: f64,
    width: usize,
    height: usize,
}

impl TryFrom<CameraFile> for Camera {
    type Error = Error;

    fn try_from(s: CameraFile) -> Result<Self> {
        let cam = Camera {
            eye: s.eye,
            look_at: s.look_at,
            up: s.up,
            vertical_fov: s.fov_deg.to_radians(),
            width: s.width,
            height: s.height,
        };
        cam.validate()?;
        Ok(cam)
    }
}

impl From<Camera> for CameraFile {
    fn from(c: Camera) -> Self {
        Self {
            eye: c.eye,
            look_at: c.look_at,
            up: c.up,
            fov_deg: c.vertical_fov.to_degrees(),
            width: c.width,
            height: c.height,
        }
    }
}

/// Image position and `∂pixel/∂v` (row `a` holds the derivatives with
/// respect to coordinate `a` of the 3D point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    pub jacobian: Matrix3x2<f64>,
}

/// Device coordinates: the vertical image extent maps to `[-1, 1]` and the
/// horizontal axis uses the same unit.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DeviceProjection {
    pub ndc: Vector2<f64>,
    pub d_ndc: [Vec3; 2],
}

impl Camera {
    /// Camera on a circle around the origin at the given azimuth and
    /// elevation (radians), looking at the origin with +z up.
    pub fn orbit(
        distance: f64,
        azimuth: f64,
        elevation: f64,
        vertical_fov: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let eye = Vec3::new(
            distance * elevation.cos() * azimuth.cos(),
            distance * elevation.cos() * azimuth.sin(),
            distance * elevation.sin(),
        );
        let cam = Self {
            eye,
            look_at: Vec3::zeros(),
            up: Vec3::z(),
            vertical_fov,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        if !finite(&self.eye) || !finite(&self.look_at) || !finite(&self.up) {
            return contract("camera vectors must be finite");
        }
        if (self.look_at - self.eye).norm() == 0.0 {
            return contract("camera eye and look_at coincide");
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < std::f64::consts::PI) {
            return contract(format!("field of view {} rad outside (0, pi)", self.vertical_fov));
        }
        if self.width == 0 || self.height == 0 {
            return contract("image must be at least one pixel wide and tall");
        }
        let f = (self.look_at - self.eye).normalize();
        if f.cross(&self.up).norm() < 1e-12 {
            return contract("camera up vector is parallel to the viewing direction");
        }
        Ok(())
    }

    /// Right, up and forward unit vectors.
    pub fn basis(&self) -> [Vec3; 3] {
        let f = (self.look_at - self.eye).normalize();
        let r = f.cross(&self.up).normalize();
        let u = r.cross(&f);
        [r, u, f]
    }

    fn tan_half_fov(&self) -> f64 {
        (0.5 * self.vertical_fov).tan()
    }

    /// Pixels per device unit.
    pub(crate) fn scale(&self) -> f64 {
        0.5 * self.height as f64
    }

    pub(crate) fn device(&self, basis: &[Vec3; 3], v: &Vec3) -> Option<DeviceProjection> {
        let [r, u, f] = basis;
        let d = v - self.eye;
        let (xc, yc, zc) = (d.dot(r), d.dot(u), d.dot(f));
        if !(zc > NEAR) {
            return None;
        }
        let t = self.tan_half_fov();
        let inv = 1.0 / (zc * t);
        let a = xc * inv;
        let b = yc * inv;
        let da = (r - f * (xc / zc)) * inv;
        let db = (u - f * (yc / zc)) * inv;
        Some(DeviceProjection {
            ndc: Vector2::new(a, b),
            d_ndc: [da, db],
        })
    }

    /// Device coordinates of the center of pixel `(i, j)`.
    pub(crate) fn pixel_center(&self, i: usize, j: usize) -> Vector2<f64> {
        let s = self.scale();
        Vector2::new(
            (i as f64 + 0.5 - 0.5 * self.width as f64) / s,
            (0.5 * self.height as f64 - (j as f64 + 0.5)) / s,
        )
    }

    /// Continuous pixel coordinates of a device point.
    pub(crate) fn to_pixel(&self, ndc: &Vector2<f64>) -> Vector2<f64> {
        let s = self.scale();
        Vector2::new(
            0.5 * self.width as f64 + ndc.x * s,
            0.5 * self.height as f64 - ndc.y * s,
        )
    }
}

/// Perspective projection of `v`; `None` when `v` is not in front of the
/// camera.
pub fn project(camera: &Camera, v: &Vec3) -> Option<Projection> {
    let dp = camera.device(&camera.basis(), v)?;
    let s = camera.scale();
    let mut jacobian = Matrix3x2::zeros();
    for a in 0..3 {
        jacobian[(a, 0)] = s * dp.d_ndc[0][a];
        jacobian[(a, 1)] = -s * dp.d_ndc[1][a];
    }
    Some(Projection {
        pixel: camera.to_pixel(&dp.ndc),
        jacobian,
    })
}
