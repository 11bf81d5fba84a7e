//! Pinhole camera model and projection of 3D Gaussians to screen space.
//!
//! Conventions, used everywhere in this crate:
//! - world frame: z up, ground plane at z = 0;
//! - camera frame: +z forward, +x right, +y down;
//! - pixel frame: origin at the top-left image corner, pixel `(u, v)` covers
//!   `[u, u+1) x [v, v+1)` and is sampled at its centre `(u + 0.5, v + 0.5)`.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Screen-space variance (px^2) added to every projected covariance.
pub const LOW_PASS: f64 = 0.3;
pub const DEFAULT_NEAR: f64 = 0.05;
pub const DEFAULT_FAR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub near: f64,
    pub far: f64,
}

/// Focal lengths honouring horizontal and vertical FOV independently.
pub fn intrinsics_from_fov(width: u32, height: u32, hfov_deg: f64, vfov_deg: f64) -> Result<Intrinsics> {
    for (name, fov) in [("hfov", hfov_deg), ("vfov", vfov_deg)] {
        if !(fov > 0.0 && fov < 180.0) {
            return Err(Error::Config(format!("{name} {fov} must lie in (0, 180) degrees")));
        }
    }
    if width == 0 || height == 0 {
        return Err(Error::Config(format!("image size {width}x{height} must be non-zero")));
    }
    let (w, h) = (width as f64, height as f64);
    let intr = Intrinsics {
        width,
        height,
        fx: (w / 2.0) / (hfov_deg.to_radians() / 2.0).tan(),
        fy: (h / 2.0) / (vfov_deg.to_radians() / 2.0).tan(),
        cx: w / 2.0,
        cy: h / 2.0,
        near: DEFAULT_NEAR,
        far: DEFAULT_FAR,
    };
    log::debug!(
        "event=intrinsics hfov_deg={hfov_deg} vfov_deg={vfov_deg} achieved_dfov_deg={:.2}",
        intr.diagonal_fov_deg()
    );
    Ok(intr)
}

impl Intrinsics {
    pub fn with_clip(mut self, near: f64, far: f64) -> Result<Self> {
        if !(near > 0.0 && near < far) {
            return Err(Error::Config(format!("clip range near={near} far={far} needs 0 < near < far")));
        }
        self.near = near;
        self.far = far;
        Ok(self)
    }

    /// Diagonal FOV actually produced by the rectilinear model.
    pub fn diagonal_fov_deg(&self) -> f64 {
        let tx = self.width as f64 / (2.0 * self.fx);
        let ty = self.height as f64 / (2.0 * self.fy);
        2.0 * (tx * tx + ty * ty).sqrt().atan().to_degrees()
    }
}

/// World-from-camera rigid pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    /// Heading `yaw` about world +z (0 looks along world +x), `pitch`
    /// positive tilts the view down, `roll` about the optical axis.
    pub fn from_yaw_pitch_roll(position: Vector3<f64>, yaw_deg: f64, pitch_deg: f64, roll_deg: f64) -> Self {
        // camera axes (x right, y down, z forward) for a level camera facing world +x
        let base = Matrix3::from_columns(&[-Vector3::y(), -Vector3::z(), Vector3::x()]);
        let base = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(base));
        let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_deg.to_radians());
        let pitch = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), -pitch_deg.to_radians());
        let roll = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), roll_deg.to_radians());
        Self {
            position,
            orientation: yaw * base * pitch * roll,
        }
    }

    /// Camera at `eye` looking at `target`, with world +z as up.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Self {
        let forward = (target - eye).normalize();
        let up = if forward.cross(&Vector3::z()).norm() < 1e-9 {
            Vector3::y()
        } else {
            Vector3::z()
        };
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let m = Matrix3::from_columns(&[right, down, forward]);
        Self {
            position: eye,
            orientation: UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m)),
        }
    }

    pub fn camera_from_world(&self) -> Matrix3<f64> {
        self.orientation.inverse().to_rotation_matrix().into_inner()
    }
}

pub fn world_to_camera(pose: &CameraPose, p: &Vector3<f64>) -> Vector3<f64> {
    pose.orientation.inverse_transform_vector(&(p - pose.position))
}

/// Pinhole projection; `None` when the point is not in front of the near
/// plane.
pub fn project_point(intr: &Intrinsics, p_cam: &Vector3<f64>) -> Option<Vector2<f64>> {
    if !(p_cam.z > intr.near) {
        return None;
    }
    Some(Vector2::new(
        intr.fx * p_cam.x / p_cam.z + intr.cx,
        intr.fy * p_cam.y / p_cam.z + intr.cy,
    ))
}

/// Jacobian of [`project_point`] at `p_cam`.
pub fn projection_jacobian(intr: &Intrinsics, p_cam: &Vector3<f64>) -> Matrix2x3<f64> {
    let (x, y, z) = (p_cam.x, p_cam.y, p_cam.z);
    let iz = 1.0 / z;
    let iz2 = iz * iz;
    Matrix2x3::new(
        intr.fx * iz,
        0.0,
        -intr.fx * x * iz2,
        0.0,
        intr.fy * iz,
        -intr.fy * y * iz2,
    )
}

/// Screen-space geometry of a projected Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
}

/// Local affine (EWA) projection: `cov2d = J cov J^T + LOW_PASS * I`.
pub fn project_gaussian(intr: &Intrinsics, mean_cam: &Vector3<f64>, cov_cam: &Matrix3<f64>) -> Option<ProjectedGaussian> {
    let mean2d = project_point(intr, mean_cam)?;
    let j = projection_jacobian(intr, mean_cam);
    let mut cov2d = j * cov_cam * j.transpose();
    cov2d = (cov2d + cov2d.transpose()) * 0.5;
    cov2d[(0, 0)] += LOW_PASS;
    cov2d[(1, 1)] += LOW_PASS;
    Some(ProjectedGaussian {
        mean2d,
        cov2d,
        depth: mean_cam.z,
    })
}

/// A splat ready for rasterisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2D {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    pub color: [f64; 3],
    pub alpha: f64,
    pub instance_id: u32,
}

/// Intrinsics plus pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: CameraPose,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, pose: CameraPose) -> Self {
        Self { intrinsics, pose }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width as usize
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height as usize
    }

    /// World-space position to pixel, `None` behind the near plane.
    pub fn project_world(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        project_point(&self.intrinsics, &world_to_camera(&self.pose, p))
    }

    /// World-space direction of the ray through pixel coordinate `(u, v)`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        let i = &self.intrinsics;
        let d_cam = Vector3::new((u - i.cx) / i.fx, (v - i.cy) / i.fy, 1.0);
        self.pose.orientation * d_cam
    }
}
