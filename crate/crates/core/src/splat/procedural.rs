//! Deterministic procedural splat assets.
//!
//! Stand-ins for captured assets so that scenes can be generated without any
//! external files. Object frame: z up, origin at the ground contact point.

use nalgebra::{UnitQuaternion, Vector3};

use super::{sh_coeff_count, Gaussian, SplatCloud};
use crate::error::{Error, Result};
use crate::rng::{splitmix64, unit_f64};

const SH_C0: f64 = 0.282_094_791_773_878_14;

fn dc_from_rgb(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|c| (c - 0.5) / SH_C0)
}

/// Small deterministic view-dependent terms so higher bands are exercised.
fn sh_coeffs(rgb: [f64; 3], degree: u8, key: u64) -> Vec<[f64; 3]> {
    let mut out = vec![dc_from_rgb(rgb)];
    for k in 1..sh_coeff_count(degree) {
        let h = splitmix64(key ^ (k as u64).wrapping_mul(0xA24B_AED4_963E_E407));
        let v = 0.06 * (unit_f64(h) - 0.5);
        out.push([v, v * 0.8, v * 0.6]);
    }
    out
}

fn flat_splat(
    center: Vector3<f64>,
    normal: Vector3<f64>,
    tangent_sigma: f64,
    rgb: [f64; 3],
    degree: u8,
    key: u64,
) -> Gaussian {
    let rotation = UnitQuaternion::rotation_between(&Vector3::z(), &normal)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
    let opacity = 0.85 + 0.1 * unit_f64(splitmix64(key ^ 0x51));
    Gaussian {
        mean: center,
        scale: Vector3::new(tangent_sigma, tangent_sigma, tangent_sigma * 0.3),
        rotation,
        opacity,
        sh: sh_coeffs(rgb, degree, key),
    }
}

/// Icosahedron vertex directions, used for the ball's panel pattern.
fn icosahedron() -> [Vector3<f64>; 12] {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, p, 0.0),
        (1.0, p, 0.0),
        (-1.0, -p, 0.0),
        (1.0, -p, 0.0),
        (0.0, -1.0, p),
        (0.0, 1.0, p),
        (0.0, -1.0, -p),
        (0.0, 1.0, -p),
        (p, 0.0, -1.0),
        (p, 0.0, 1.0),
        (-p, 0.0, -1.0),
        (-p, 0.0, 1.0),
    ];
    raw.map(|(x, y, z)| Vector3::new(x, y, z).normalize())
}

/// A ball of `count` surface splats resting on the ground plane, with darker
/// pentagon-like patches.
pub fn sphere(asset_id: &str, radius: f64, count: usize, rgb: [f64; 3], sh_degree: u8) -> Result<SplatCloud> {
    if !(radius > 0.0) || count == 0 {
        return Err(Error::Config(format!("sphere asset '{asset_id}': radius and count must be positive")));
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let sigma = radius * (4.0 * std::f64::consts::PI / count as f64).sqrt() * 0.6;
    let patches = icosahedron();
    let dark = rgb.map(|c| c * 0.15);
    let center = Vector3::new(0.0, 0.0, radius);
    let gaussians = (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let n = Vector3::new(r * phi.cos(), r * phi.sin(), z);
            let in_patch = patches.iter().any(|p| p.dot(&n) > 0.93);
            let colour = if in_patch { dark } else { rgb };
            flat_splat(center + n * radius, n, sigma, colour, sh_degree, i as u64)
        })
        .collect();
    SplatCloud::new(asset_id, sh_degree, gaussians)
}

/// A box-shaped robot body (`size` = width, depth, height) with a coloured
/// marker band, built from splats on its four sides and top.
pub fn robot(
    asset_id: &str,
    size: [f64; 3],
    count: usize,
    body_rgb: [f64; 3],
    marker_rgb: [f64; 3],
    sh_degree: u8,
) -> Result<SplatCloud> {
    let [w, d, h] = size;
    if !(w > 0.0 && d > 0.0 && h > 0.0) || count == 0 {
        return Err(Error::Config(format!("robot asset '{asset_id}': size and count must be positive")));
    }
    // faces: (normal, origin corner, u axis, v axis)
    let faces = [
        (Vector3::x(), Vector3::new(w / 2.0, -d / 2.0, 0.0), Vector3::y() * d, Vector3::z() * h),
        (-Vector3::x(), Vector3::new(-w / 2.0, -d / 2.0, 0.0), Vector3::y() * d, Vector3::z() * h),
        (Vector3::y(), Vector3::new(-w / 2.0, d / 2.0, 0.0), Vector3::x() * w, Vector3::z() * h),
        (-Vector3::y(), Vector3::new(-w / 2.0, -d / 2.0, 0.0), Vector3::x() * w, Vector3::z() * h),
        (Vector3::z(), Vector3::new(-w / 2.0, -d / 2.0, h), Vector3::x() * w, Vector3::y() * d),
    ];
    let areas: Vec<f64> = faces.iter().map(|(_, _, u, v)| u.norm() * v.norm()).collect();
    let total: f64 = areas.iter().sum();
    let sigma = (total / count as f64).sqrt() * 0.55;
    let mut gaussians = Vec::with_capacity(count);
    let mut i = 0u64;
    for ((normal, origin, u, v), area) in faces.iter().zip(&areas) {
        let n_face = ((area / total) * count as f64).round().max(1.0) as usize;
        for _ in 0..n_face {
            let a = unit_f64(splitmix64(i.wrapping_mul(2) + 1));
            let b = unit_f64(splitmix64(i.wrapping_mul(2) + 2));
            let p = origin + u * a + v * b;
            let band = p.z > 0.6 * h && p.z < 0.75 * h && normal.z == 0.0;
            let colour = if band { marker_rgb } else { body_rgb };
            gaussians.push(flat_splat(p, *normal, sigma, colour, sh_degree, i));
            i += 1;
        }
    }
    SplatCloud::new(asset_id, sh_degree, gaussians)
}
