use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adam::GroupRates;
use crate::math::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid training configuration: {0}")]
    Invalid(String),
}

/// Per-group learning rates. The position rate decays exponentially from
/// `position` to `position_final` over the run and is multiplied by the
/// scene extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub position: f64,
    pub position_final: f64,
    pub sh: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            position_final: 1.6e-6,
            sh: 2.5e-3,
            opacity: 5e-2,
            scale: 5e-3,
            rotation: 1e-3,
        }
    }
}

impl LearningRates {
    /// Rates in effect at `iteration` (1-based) of a run of `total` iterations.
    pub fn at(&self, iteration: u32, total: u32, scene_extent: f64) -> GroupRates {
        let t = if total == 0 {
            0.0
        } else {
            (f64::from(iteration) / f64::from(total)).clamp(0.0, 1.0)
        };
        let position =
            (self.position.ln() * (1.0 - t) + self.position_final.ln() * t).exp() * scene_extent;
        GroupRates {
            position,
            sh: self.sh,
            opacity: self.opacity,
            scale: self.scale,
            rotation: self.rotation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u32,
    pub lr: LearningRates,
    pub lambda_dssim: f64,
    pub densify_interval: u32,
    pub densify_from: u32,
    pub densify_until: u32,
    /// Mean screen-space positional gradient, in normalized device units.
    pub grad_threshold: f64,
    /// Clone when the largest scale is at most this fraction of the scene
    /// extent, split otherwise.
    pub percent_dense: f64,
    pub prune_opacity: f64,
    /// Screen radius in pixels above which splats are pruned once the first
    /// opacity reset has happened.
    pub max_screen_radius: f64,
    pub opacity_reset_interval: u32,
    pub sh_promote_interval: u32,
    pub checkpoint_interval: u32,
    pub seed: u64,
    pub background: Vec3,
    pub downscale: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            lr: LearningRates::default(),
            lambda_dssim: 0.2,
            densify_interval: 100,
            densify_from: 500,
            densify_until: 15_000,
            grad_threshold: 2e-4,
            percent_dense: 0.01,
            prune_opacity: 0.005,
            max_screen_radius: 20.0,
            opacity_reset_interval: 3000,
            sh_promote_interval: 1000,
            checkpoint_interval: 1000,
            seed: 0,
            background: [0.0; 3],
            downscale: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return bad("lambda_dssim must lie in [0, 1]");
        }
        let rates = [
            self.lr.position,
            self.lr.position_final,
            self.lr.sh,
            self.lr.opacity,
            self.lr.scale,
            self.lr.rotation,
        ];
        if !rates.iter().all(|r| r.is_finite() && *r > 0.0) {
            return bad("learning rates must be positive");
        }
        let thresholds = [
            self.grad_threshold,
            self.percent_dense,
            self.prune_opacity,
            self.max_screen_radius,
        ];
        if !thresholds.iter().all(|t| t.is_finite() && *t > 0.0) {
            return bad("thresholds must be positive");
        }
        if self.densify_from >= self.densify_until {
            return bad("densify_from must be below densify_until");
        }
        if self.densify_interval == 0
            || self.opacity_reset_interval == 0
            || self.sh_promote_interval == 0
            || self.checkpoint_interval == 0
        {
            return bad("intervals must be positive");
        }
        if self.downscale == 0 {
            return bad("downscale must be at least 1");
        }
        if !self.background.iter().all(|c| c.is_finite()) {
            return bad("background must be finite");
        }
        Ok(())
    }
}
