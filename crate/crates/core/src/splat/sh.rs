//! Real spherical harmonics in the layout used by 3DGS exports.
//!
//! The basis below (including its sign convention) is the one the colour
//! evaluation uses; band rotation is derived from the same functions so the
//! two stay consistent.

use std::sync::OnceLock;

use nalgebra::{DMatrix, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// How SH coefficients react when a cloud is rotated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShRotation {
    /// Rotate every band so view-dependent colour follows the object.
    #[default]
    Exact,
    /// Drop all bands above degree 0.
    DcOnly,
}

pub fn sh_coeff_count(degree: u8) -> usize {
    (degree as usize + 1).pow(2)
}

/// Basis values for all 16 functions up to degree 3 at unit direction `d`.
pub fn basis(d: &Vector3<f64>) -> [f64; 16] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    [
        C0,
        -C1 * y,
        C1 * z,
        -C1 * x,
        C2[0] * xy,
        C2[1] * yz,
        C2[2] * (2.0 * zz - xx - yy),
        C2[3] * xz,
        C2[4] * (xx - yy),
        C3[0] * y * (3.0 * xx - yy),
        C3[1] * xy * z,
        C3[2] * y * (4.0 * zz - xx - yy),
        C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        C3[4] * x * (4.0 * zz - xx - yy),
        C3[5] * z * (xx - yy),
        C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// View-dependent RGB: basis dotted with the coefficients per channel, plus
/// the 0.5 DC offset, clamped to `[0, 1]`.
pub fn evaluate_sh(coeffs: &[[f64; 3]], view_dir: &Vector3<f64>, degree: u8) -> Result<[f64; 3]> {
    if degree > 3 || coeffs.len() != sh_coeff_count(degree) {
        return Err(Error::Data(format!(
            "{} sh coefficients do not match degree {degree}",
            coeffs.len()
        )));
    }
    let b = basis(view_dir);
    let mut rgb = [0.5; 3];
    for (k, c) in coeffs.iter().enumerate() {
        for ch in 0..3 {
            rgb[ch] += b[k] * c[ch];
        }
    }
    Ok(rgb.map(|v| v.clamp(0.0, 1.0)))
}

/// Fixed, well-spread sample directions (Fibonacci sphere).
fn sample_dirs() -> &'static [Vector3<f64>] {
    static DIRS: OnceLock<Vec<Vector3<f64>>> = OnceLock::new();
    DIRS.get_or_init(|| {
        let n = 48;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                Vector3::new(r * phi.cos(), r * phi.sin(), z)
            })
            .collect()
    })
}

fn band_range(l: u8) -> std::ops::Range<usize> {
    sh_coeff_count(l - 1)..sh_coeff_count(l)
}

/// Per-band least-squares solvers `(A^T A)^-1 A^T` for the sampled basis.
fn band_solvers() -> &'static [DMatrix<f64>; 3] {
    static SOLVERS: OnceLock<[DMatrix<f64>; 3]> = OnceLock::new();
    SOLVERS.get_or_init(|| {
        [1u8, 2, 3].map(|l| {
            let a = band_samples(l, |d| *d);
            let ata = a.transpose() * &a;
            ata.try_inverse().expect("sampled SH basis is full rank") * a.transpose()
        })
    })
}

fn band_samples(l: u8, map: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> DMatrix<f64> {
    let dirs = sample_dirs();
    let range = band_range(l);
    DMatrix::from_fn(dirs.len(), range.len(), |i, j| basis(&map(&dirs[i]))[range.start + j])
}

/// Coefficient-space rotation matrices for bands 1..=degree.
///
/// Each band is closed under rotation, so for the rotated function
/// `f'(d) = f(R^-1 d)` the band coefficients satisfy `c' = M c` with
/// `Y(R^-1 d) = Y(d) M`; `M` is recovered exactly by least squares over the
/// sample directions.
pub fn band_rotation_matrices(rotation: &UnitQuaternion<f64>, degree: u8) -> Vec<DMatrix<f64>> {
    let inv = rotation.inverse();
    (1..=degree.min(3))
        .map(|l| {
            let b = band_samples(l, |d| inv * d);
            &band_solvers()[l as usize - 1] * b
        })
        .collect()
}

pub fn rotate_coeffs(coeffs: &[[f64; 3]], bands: &[DMatrix<f64>]) -> Vec<[f64; 3]> {
    let mut out = coeffs.to_vec();
    for (i, m) in bands.iter().enumerate() {
        let range = band_range(i as u8 + 1);
        for (row, dst) in range.clone().enumerate() {
            let mut acc = [0.0; 3];
            for (col, src) in range.clone().enumerate() {
                let w = m[(row, col)];
                for ch in 0..3 {
                    acc[ch] += w * coeffs[src][ch];
                }
            }
            out[dst] = acc;
        }
    }
    out
}
