//! 3D Gaussian splat data model.
//!
//! A [`Gaussian`] stores post-activation parameters: metric scale, unit
//! rotation, opacity in `(0, 1)` and per-channel spherical-harmonic colour
//! coefficients. A [`SplatCloud`] is an immutable, named collection of them
//! sharing one SH degree.

pub mod ply;
pub mod procedural;
pub mod sh;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use sh::{evaluate_sh, sh_coeff_count, ShRotation};

/// Post-activation opacity is clamped to `[OPACITY_FLOOR, 1 - OPACITY_FLOOR]`.
pub const OPACITY_FLOOR: f64 = 1e-7;

/// Bounds inflation in multiples of a splat's largest standard deviation.
pub const BOUNDS_SIGMA: f64 = 3.0;

/// Axis-aligned box in 3D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb3 {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb3 {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vector3::new(a.x, a.y, a.z),
            Vector3::new(b.x, a.y, a.z),
            Vector3::new(a.x, b.y, a.z),
            Vector3::new(b.x, b.y, a.z),
            Vector3::new(a.x, a.y, b.z),
            Vector3::new(b.x, a.y, b.z),
            Vector3::new(a.x, b.y, b.z),
            Vector3::new(b.x, b.y, b.z),
        ]
    }

    fn grow(&mut self, center: &Vector3<f64>, radius: f64) {
        for i in 0..3 {
            self.min[i] = self.min[i].min(center[i] - radius);
            self.max[i] = self.max[i].max(center[i] + radius);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Vector3<f64>,
    pub scale: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub opacity: f64,
    /// `(degree + 1)^2` RGB coefficient triplets, DC first.
    pub sh: Vec<[f64; 3]>,
}

impl Gaussian {
    pub fn covariance(&self) -> Matrix3<f64> {
        covariance_3d(&self.scale, &self.rotation)
    }

    fn max_scale(&self) -> f64 {
        self.scale.x.max(self.scale.y).max(self.scale.z)
    }
}

/// A named set of Gaussians forming one asset. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatCloud {
    asset_id: String,
    sh_degree: u8,
    gaussians: Vec<Gaussian>,
    bounds: Option<Aabb3>,
}

impl SplatCloud {
    /// Validates the shared SH layout and the per-splat invariants, then
    /// computes the object bounds.
    pub fn new(asset_id: impl Into<String>, sh_degree: u8, gaussians: Vec<Gaussian>) -> Result<Self> {
        if sh_degree > 3 {
            return Err(Error::Data(format!("sh degree {sh_degree} exceeds 3")));
        }
        let want = sh_coeff_count(sh_degree);
        for (i, g) in gaussians.iter().enumerate() {
            if g.sh.len() != want {
                return Err(Error::Data(format!(
                    "gaussian {i}: {} sh coefficients, degree {sh_degree} needs {want}",
                    g.sh.len()
                )));
            }
            if !g.scale.iter().all(|s| s.is_finite() && *s > 0.0) {
                return Err(Error::Data(format!("gaussian {i}: scale must be positive and finite")));
            }
            if !(g.opacity > 0.0 && g.opacity < 1.0) {
                return Err(Error::Data(format!("gaussian {i}: opacity {} outside (0, 1)", g.opacity)));
            }
            if !g.mean.iter().all(|v| v.is_finite()) {
                return Err(Error::Data(format!("gaussian {i}: non-finite mean")));
            }
        }
        let bounds = compute_bounds(&gaussians);
        Ok(Self {
            asset_id: asset_id.into(),
            sh_degree,
            gaussians,
            bounds,
        })
    }

    pub fn empty(asset_id: impl Into<String>, sh_degree: u8) -> Self {
        Self {
            asset_id: asset_id.into(),
            sh_degree: sh_degree.min(3),
            gaussians: Vec::new(),
            bounds: None,
        }
    }

    pub fn asset_id(&self) -> &str {
        &self.asset_id
    }

    pub fn sh_degree(&self) -> u8 {
        self.sh_degree
    }

    pub fn gaussians(&self) -> &[Gaussian] {
        &self.gaussians
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Box around every mean inflated by 3x the splat's largest scale.
    /// `None` for an empty cloud.
    pub fn object_bounds(&self) -> Option<&Aabb3> {
        self.bounds.as_ref()
    }

    pub fn with_asset_id(mut self, asset_id: impl Into<String>) -> Self {
        self.asset_id = asset_id.into();
        self
    }
}

fn compute_bounds(gaussians: &[Gaussian]) -> Option<Aabb3> {
    let first = gaussians.first()?;
    let mut bounds = Aabb3 {
        min: first.mean,
        max: first.mean,
    };
    for g in gaussians {
        bounds.grow(&g.mean, BOUNDS_SIGMA * g.max_scale());
    }
    Some(bounds)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Map stored (logit opacity, log scale, raw quaternion `[w, x, y, z]`) to
/// their activated values.
pub fn activate_parameters(
    raw_opacity: f64,
    raw_scale: [f64; 3],
    raw_rotation: [f64; 4],
) -> Result<(f64, Vector3<f64>, UnitQuaternion<f64>)> {
    if !raw_opacity.is_finite()
        || !raw_scale.iter().all(|v| v.is_finite())
        || !raw_rotation.iter().all(|v| v.is_finite())
    {
        return Err(Error::Data("non-finite raw parameter".into()));
    }
    let opacity = sigmoid(raw_opacity).clamp(OPACITY_FLOOR, 1.0 - OPACITY_FLOOR);
    let scale = Vector3::new(raw_scale[0].exp(), raw_scale[1].exp(), raw_scale[2].exp());
    if !scale.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::Data(format!("scale {raw_scale:?} overflows after exp")));
    }
    let [w, x, y, z] = raw_rotation;
    let norm = (w * w + x * x + y * y + z * z).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Data("zero-norm rotation quaternion".into()));
    }
    let q = Quaternion::new(w / norm, x / norm, y / norm, z / norm);
    Ok((opacity, scale, UnitQuaternion::new_unchecked(q)))
}

/// Inverse of [`activate_parameters`], used when writing PLY files.
pub fn deactivate_parameters(g: &Gaussian) -> (f64, [f64; 3], [f64; 4]) {
    let o = g.opacity;
    let q = g.rotation.quaternion();
    (
        (o / (1.0 - o)).ln(),
        [g.scale.x.ln(), g.scale.y.ln(), g.scale.z.ln()],
        [q.w, q.i, q.j, q.k],
    )
}

/// `R * S * S^T * R^T`, explicitly symmetrised.
pub fn covariance_3d(scale: &Vector3<f64>, rotation: &UnitQuaternion<f64>) -> Matrix3<f64> {
    let r = rotation.to_rotation_matrix().into_inner();
    let m = r * Matrix3::from_diagonal(scale);
    let cov = m * m.transpose();
    (cov + cov.transpose()) * 0.5
}

/// Rigid motion plus uniform scale: `p -> scale * R * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl Default for Similarity {
    fn default() -> Self {
        Self::identity()
    }
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>, scale: f64) -> Self {
        Self {
            rotation,
            translation,
            scale,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    /// Placement on the ground plane: yaw about world +z, then translate.
    pub fn from_ground_pose(position: Vector3<f64>, yaw_deg: f64, scale: f64) -> Self {
        Self {
            rotation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_deg.to_radians()),
            translation: position,
            scale,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    pub fn inverse(&self) -> Self {
        let inv_r = self.rotation.inverse();
        let inv_s = 1.0 / self.scale;
        Self {
            rotation: inv_r,
            translation: -(inv_r * self.translation) * inv_s,
            scale: inv_s,
        }
    }
}

/// Apply a similarity to every splat. Means follow the full transform,
/// orientations compose with the rotation, scales multiply by the uniform
/// factor and SH coefficients are rotated according to `sh_mode`.
pub fn transform_cloud(cloud: &SplatCloud, transform: &Similarity, sh_mode: ShRotation) -> Result<SplatCloud> {
    if !(transform.scale > 0.0 && transform.scale.is_finite()) {
        return Err(Error::Data(format!("uniform scale {} must be positive", transform.scale)));
    }
    let is_identity_rotation = transform.rotation == UnitQuaternion::identity();
    let (sh_degree, sh_matrices) = match sh_mode {
        ShRotation::DcOnly => (0, None),
        ShRotation::Exact if cloud.sh_degree == 0 || is_identity_rotation => (cloud.sh_degree, None),
        ShRotation::Exact => (
            cloud.sh_degree,
            Some(sh::band_rotation_matrices(&transform.rotation, cloud.sh_degree)),
        ),
    };
    let keep = sh_coeff_count(sh_degree);
    let gaussians = cloud
        .gaussians
        .iter()
        .map(|g| {
            let sh = match &sh_matrices {
                Some(m) => sh::rotate_coeffs(&g.sh, m),
                None => g.sh[..keep].to_vec(),
            };
            Gaussian {
                mean: transform.apply(&g.mean),
                scale: g.scale * transform.scale,
                rotation: if is_identity_rotation {
                    g.rotation
                } else {
                    renormalize(transform.rotation * g.rotation)
                },
                opacity: g.opacity,
                sh,
            }
        })
        .collect::<Vec<_>>();
    let bounds = compute_bounds(&gaussians);
    Ok(SplatCloud {
        asset_id: cloud.asset_id.clone(),
        sh_degree,
        gaussians,
        bounds,
    })
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}
