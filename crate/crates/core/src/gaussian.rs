//! The Gaussian splat primitive and its parameter activations.

use thiserror::Error;

use crate::math::{self, Mat3, Vec3};
use crate::sh::{self, MAX_SH_DEGREE, SH_COEFFS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Per-channel spherical-harmonic coefficients; index 0 is the DC term.
pub type ShCoeffs = [[f64; SH_COEFFS]; 3];

/// One anisotropic 3D Gaussian.
///
/// Scale and opacity are stored pre-activation. The rotation quaternion is
/// (w, x, y, z) and is normalized at the point of use, never in place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat {
    pub position: Vec3,
    pub log_scale: Vec3,
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub sh: ShCoeffs,
}

impl Default for Splat {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            log_scale: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: 0.0,
            sh: [[0.0; SH_COEFFS]; 3],
        }
    }
}

impl Splat {
    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(f64::exp)
    }

    pub fn max_scale(&self) -> f64 {
        self.scale().into_iter().fold(f64::MIN, f64::max)
    }

    pub fn opacity(&self) -> f64 {
        activate_opacity(self.opacity_logit)
    }

    pub fn covariance(&self) -> Result<Mat3, ModelError> {
        covariance3d(self.log_scale, self.rotation)
    }

    /// Sets the DC coefficients so that degree-0 shading yields `rgb`.
    pub fn set_base_color(&mut self, rgb: Vec3) {
        for (channel, value) in rgb.into_iter().enumerate() {
            self.sh[channel][0] = (value - 0.5) / sh::SH_C0;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.sh.iter().flatten().all(|v| v.is_finite())
    }
}

/// An ordered set of splats with the SH degree currently used for shading.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplatCloud {
    pub splats: Vec<Splat>,
    pub active_sh_degree: u8,
}

impl SplatCloud {
    pub fn new(splats: Vec<Splat>, active_sh_degree: u8) -> Self {
        Self {
            splats,
            active_sh_degree: active_sh_degree.min(MAX_SH_DEGREE),
        }
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    /// Axis-aligned bounds of the splat centers, `None` when empty.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = self.splats.first()?.position;
        Some(self.splats.iter().fold((first, first), |(lo, hi), s| {
            (
                [0, 1, 2].map(|i| lo[i].min(s.position[i])),
                [0, 1, 2].map(|i| hi[i].max(s.position[i])),
            )
        }))
    }
}

pub(crate) fn normalize_quat(q: [f64; 4]) -> Result<([f64; 4], f64), ModelError> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(ModelError::InvalidParameter(format!(
            "quaternion {q:?} cannot be normalized"
        )));
    }
    Ok((q.map(|v| v / n), n))
}

/// World-space covariance `R · diag(exp(log_scale))² · Rᵀ`.
pub fn covariance3d(log_scale: Vec3, rotation: [f64; 4]) -> Result<Mat3, ModelError> {
    let (q, _) = normalize_quat(rotation)?;
    let r = math::quat_to_mat(q);
    let s = log_scale.map(f64::exp);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j] * s[j];
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = m[i][0] * m[j][0] + m[i][1] * m[j][1] + m[i][2] * m[j][2];
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    Ok(cov)
}

pub fn activate_opacity(opacity_logit: f64) -> f64 {
    math::sigmoid(opacity_logit)
}

fn check_degree(degree: u8) -> Result<(), ModelError> {
    if degree > MAX_SH_DEGREE {
        return Err(ModelError::InvalidParameter(format!(
            "sh degree {degree} exceeds maximum {MAX_SH_DEGREE}"
        )));
    }
    Ok(())
}

/// View-dependent color: SH evaluated along `view_dir`, offset by 0.5 and
/// clamped below at zero.
pub fn eval_sh(coeffs: &ShCoeffs, view_dir: Vec3, degree: u8) -> Result<Vec3, ModelError> {
    check_degree(degree)?;
    let b = sh::basis(view_dir, degree);
    Ok(shade_with_basis(coeffs, &b, sh::coeff_count(degree)))
}

pub(crate) fn shade_with_basis(coeffs: &ShCoeffs, basis: &[f64; SH_COEFFS], used: usize) -> Vec3 {
    let mut rgb = [0.0; 3];
    for (out, channel) in rgb.iter_mut().zip(coeffs) {
        let raw: f64 = channel[..used]
            .iter()
            .zip(&basis[..used])
            .map(|(c, b)| c * b)
            .sum();
        *out = (raw + 0.5).max(0.0);
    }
    rgb
}
