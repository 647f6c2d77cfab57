//! Adaptive density control: clone, split and prune.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::gaussian::{normalize_quat, Splat, SplatCloud};
use crate::math;
use crate::raster::RenderStats;

/// Scale divisor applied to split children.
pub const SPLIT_FACTOR: f64 = 1.6;
/// Children produced by one split.
pub const SPLIT_CHILDREN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifyParams {
    pub grad_threshold: f64,
    pub percent_dense: f64,
    pub prune_opacity: f64,
    /// Screen radius cap in pixels; `None` disables the large-splat rule.
    pub max_screen_radius: Option<f64>,
    pub scene_extent: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensifyOutcome {
    /// For each splat of the new cloud, its index in the old cloud if it is
    /// an unchanged survivor.
    pub origin: Vec<Option<usize>>,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// Applies the clone/split rule to splats whose mean screen-space gradient
/// exceeds the threshold, then prunes transparent and oversized splats.
///
/// Survivors keep their relative order, followed by clones and then split
/// children. Split sampling draws three standard normals per child, in splat
/// order.
pub fn densify_and_prune<R: Rng>(
    cloud: &mut SplatCloud,
    stats: &RenderStats,
    params: &DensifyParams,
    rng: &mut R,
) -> DensifyOutcome {
    assert_eq!(cloud.len(), stats.len(), "stats do not match the cloud");
    let size_limit = params.percent_dense * params.scene_extent;
    let mut kept: Vec<(Splat, Option<usize>, f64)> = Vec::with_capacity(cloud.len());
    let mut clones = Vec::new();
    let mut children = Vec::new();
    let mut outcome = DensifyOutcome::default();

    for (i, splat) in cloud.splats.iter().enumerate() {
        let dense = stats.mean_grad(i) > params.grad_threshold;
        let max_scale = splat.max_scale();
        if dense && max_scale <= size_limit {
            kept.push((*splat, Some(i), stats.max_radius[i]));
            clones.push(clone_along_gradient(splat, stats.position_grad[i]));
            outcome.cloned += 1;
        } else if dense {
            children.extend(split(splat, rng));
            outcome.split += 1;
        } else {
            kept.push((*splat, Some(i), stats.max_radius[i]));
        }
    }

    let candidates = kept
        .into_iter()
        .chain(clones.into_iter().map(|s| (s, None, 0.0)))
        .chain(children.into_iter().map(|s| (s, None, 0.0)));
    let mut splats = Vec::with_capacity(cloud.len());
    for (splat, origin, radius) in candidates {
        let transparent = splat.opacity() < params.prune_opacity;
        let oversized = params.max_screen_radius.is_some_and(|cap| radius > cap);
        if transparent || oversized {
            outcome.pruned += 1;
            continue;
        }
        splats.push(splat);
        outcome.origin.push(origin);
    }
    cloud.splats = splats;
    outcome
}

/// Copy displaced by half its largest scale against the accumulated
/// position gradient.
fn clone_along_gradient(splat: &Splat, position_grad: [f64; 3]) -> Splat {
    let mut copy = *splat;
    let n = math::norm(position_grad);
    if n > 0.0 && n.is_finite() {
        let step = -0.5 * splat.max_scale() / n;
        copy.position = math::add(copy.position, math::scale(position_grad, step));
    }
    copy
}

fn split<R: Rng>(splat: &Splat, rng: &mut R) -> Vec<Splat> {
    let rot = normalize_quat(splat.rotation)
        .map(|(q, _)| math::quat_to_mat(q))
        .unwrap_or(math::IDENTITY3);
    let scale = splat.scale();
    (0..SPLIT_CHILDREN)
        .map(|_| {
            let local: [f64; 3] = std::array::from_fn(|k| scale[k] * rng.sample::<f64, _>(StandardNormal));
            let mut child = *splat;
            child.position = math::add(splat.position, math::mat_vec(&rot, local));
            child.log_scale = splat.log_scale.map(|v| v - SPLIT_FACTOR.ln());
            child
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> DensifyParams {
        DensifyParams {
            grad_threshold: 2e-4,
            percent_dense: 0.01,
            prune_opacity: 0.005,
            max_screen_radius: None,
            scene_extent: 1.0,
        }
    }

    fn splat(log_scale: f64, opacity_logit: f64) -> Splat {
        Splat {
            log_scale: [log_scale; 3],
            opacity_logit,
            ..Splat::default()
        }
    }

    fn stats_with_grad(grads: &[f64]) -> RenderStats {
        let mut s = RenderStats::new(grads.len());
        for (i, g) in grads.iter().enumerate() {
            s.grad_accum[i] = *g;
            s.grad_count[i] = 1;
            s.position_grad[i] = [1.0, 0.0, 0.0];
        }
        s
    }

    #[test]
    fn quiet_opaque_cloud_is_unchanged() {
        let mut cloud = SplatCloud::new(vec![splat(-3.0, 4.0), splat(-1.0, 2.0)], 0);
        let before = cloud.clone();
        let out = densify_and_prune(
            &mut cloud,
            &stats_with_grad(&[1e-5, 0.0]),
            &params(),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert_eq!(cloud, before);
        assert_eq!(out.origin, vec![Some(0), Some(1)]);
    }

    #[test]
    fn small_high_gradient_splat_is_cloned() {
        let mut cloud = SplatCloud::new(vec![splat(-6.0, 4.0)], 0);
        let out = densify_and_prune(
            &mut cloud,
            &stats_with_grad(&[1e-3]),
            &params(),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert_eq!(cloud.len(), 2);
        assert_eq!(out.cloned, 1);
        assert_eq!(out.origin, vec![Some(0), None]);
        assert!(cloud.splats[1].position[0] < 0.0);
        assert_eq!(cloud.splats[1].log_scale, cloud.splats[0].log_scale);
    }

    #[test]
    fn large_high_gradient_splat_is_split() {
        let mut cloud = SplatCloud::new(vec![splat(-1.0, 4.0)], 0);
        let out = densify_and_prune(
            &mut cloud,
            &stats_with_grad(&[1e-3]),
            &params(),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert_eq!(cloud.len(), 2);
        assert_eq!(out.split, 1);
        assert_eq!(out.origin, vec![None, None]);
        for child in &cloud.splats {
            assert!((child.log_scale[0] - (-1.0 - 1.6f64.ln())).abs() < 1e-15);
        }
    }

    #[test]
    fn transparent_splat_is_pruned() {
        let mut cloud = SplatCloud::new(vec![splat(-3.0, 4.0), splat(-3.0, -40.0)], 0);
        let out = densify_and_prune(
            &mut cloud,
            &stats_with_grad(&[0.0, 0.0]),
            &params(),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert_eq!(cloud.len(), 1);
        assert_eq!(out.pruned, 1);
        assert_eq!(out.origin, vec![Some(0)]);
    }

    #[test]
    fn oversized_splat_is_pruned_only_when_enabled() {
        let mut stats = stats_with_grad(&[0.0]);
        stats.max_radius[0] = 50.0;
        let mut cloud = SplatCloud::new(vec![splat(-3.0, 4.0)], 0);
        densify_and_prune(&mut cloud, &stats, &params(), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(cloud.len(), 1);
        let capped = DensifyParams {
            max_screen_radius: Some(20.0),
            ..params()
        };
        densify_and_prune(&mut cloud, &stats, &capped, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(cloud.is_empty());
    }
}
