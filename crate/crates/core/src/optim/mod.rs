//! Differentiable training of splat clouds against posed photographs.

mod adam;
mod backward;
mod config;
mod densify;
pub mod metrics;
mod seed;
mod train;

pub use adam::{adam_step, AdamState, GroupRates, BETA1, BETA2, EPSILON};
pub use backward::{backward, Backward};
pub use config::{ConfigError, LearningRates, TrainConfig};
pub use densify::{densify_and_prune, DensifyOutcome, DensifyParams};
pub use metrics::{loss, loss_and_gradient, psnr, ssim, MetricError};
pub use seed::{seed_from_points, SeedError, INITIAL_OPACITY};
pub use train::{
    train, train_from, Checkpoint, Progress, TrainError, TrainOptions, TrainReport,
};

use crate::gaussian::{ShCoeffs, Splat};
use crate::math::Vec3;
use crate::sh::SH_COEFFS;

/// Parameter groups, each with its own learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Position,
    Sh,
    Opacity,
    Scale,
    Rotation,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        ParamGroup::Position,
        ParamGroup::Sh,
        ParamGroup::Opacity,
        ParamGroup::Scale,
        ParamGroup::Rotation,
    ];
}

/// Gradient (or any per-parameter quantity) with the layout of a [`Splat`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatGrad {
    pub position: Vec3,
    pub log_scale: Vec3,
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub sh: ShCoeffs,
}

impl Default for SplatGrad {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            log_scale: [0.0; 3],
            rotation: [0.0; 4],
            opacity_logit: 0.0,
            sh: [[0.0; SH_COEFFS]; 3],
        }
    }
}

impl SplatGrad {
    pub fn group_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        match group {
            ParamGroup::Position => &mut self.position,
            ParamGroup::Sh => self.sh.as_flattened_mut(),
            ParamGroup::Opacity => std::slice::from_mut(&mut self.opacity_logit),
            ParamGroup::Scale => &mut self.log_scale,
            ParamGroup::Rotation => &mut self.rotation,
        }
    }

    pub fn group(&self, group: ParamGroup) -> &[f64] {
        match group {
            ParamGroup::Position => &self.position,
            ParamGroup::Sh => self.sh.as_flattened(),
            ParamGroup::Opacity => std::slice::from_ref(&self.opacity_logit),
            ParamGroup::Scale => &self.log_scale,
            ParamGroup::Rotation => &self.rotation,
        }
    }
}

/// Mutable counterpart of [`param_slice`].
pub fn param_slice_mut(splat: &mut Splat, group: ParamGroup) -> &mut [f64] {
    match group {
        ParamGroup::Position => &mut splat.position,
        ParamGroup::Sh => splat.sh.as_flattened_mut(),
        ParamGroup::Opacity => std::slice::from_mut(&mut splat.opacity_logit),
        ParamGroup::Scale => &mut splat.log_scale,
        ParamGroup::Rotation => &mut splat.rotation,
    }
}

/// Parameters of a splat as a slice per group (for finite-difference checks).
pub fn param_slice(splat: &Splat, group: ParamGroup) -> &[f64] {
    match group {
        ParamGroup::Position => &splat.position,
        ParamGroup::Sh => splat.sh.as_flattened(),
        ParamGroup::Opacity => std::slice::from_ref(&splat.opacity_logit),
        ParamGroup::Scale => &splat.log_scale,
        ParamGroup::Rotation => &splat.rotation,
    }
}
