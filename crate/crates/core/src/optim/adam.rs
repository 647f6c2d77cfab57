//! Bias-corrected Adam over the splat parameter groups.

use super::{ParamGroup, SplatGrad};
use crate::gaussian::Splat;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Learning rate for each parameter group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRates {
    pub position: f64,
    pub sh: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
}

impl GroupRates {
    pub fn get(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Position => self.position,
            ParamGroup::Sh => self.sh,
            ParamGroup::Opacity => self.opacity,
            ParamGroup::Scale => self.scale,
            ParamGroup::Rotation => self.rotation,
        }
    }
}

/// First and second moments per splat, plus the shared step count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<SplatGrad>,
    pub v: Vec<SplatGrad>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![SplatGrad::default(); len],
            v: vec![SplatGrad::default(); len],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Rebuilds the state after the cloud was restructured: entry `i` of the
    /// new cloud takes the moments of `origin[i]`, or zeros for new splats.
    pub fn remap(&mut self, origin: &[Option<usize>]) {
        let pick = |src: &[SplatGrad]| -> Vec<SplatGrad> {
            origin
                .iter()
                .map(|o| o.map_or_else(SplatGrad::default, |i| src[i]))
                .collect()
        };
        self.m = pick(&self.m);
        self.v = pick(&self.v);
    }
}

/// One Adam update of every parameter in place.
pub fn adam_step(splats: &mut [Splat], grads: &[SplatGrad], state: &mut AdamState, rates: &GroupRates) {
    assert_eq!(splats.len(), grads.len(), "gradient count mismatch");
    assert_eq!(splats.len(), state.len(), "optimizer state size mismatch");
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for (i, splat) in splats.iter_mut().enumerate() {
        let mut g = grads[i];
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for group in ParamGroup::ALL {
            let lr = rates.get(group);
            let params = super::param_slice_mut(splat, group);
            let gs = g.group_mut(group);
            let ms = m.group_mut(group);
            let vs = v.group_mut(group);
            for k in 0..params.len() {
                ms[k] = BETA1 * ms[k] + (1.0 - BETA1) * gs[k];
                vs[k] = BETA2 * vs[k] + (1.0 - BETA2) * gs[k] * gs[k];
                let m_hat = ms[k] / bc1;
                let v_hat = vs[k] / bc2;
                params[k] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}
