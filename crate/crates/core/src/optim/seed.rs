//! Initial splats from a sparse point cloud.

use std::num::NonZeroUsize;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use thiserror::Error;

use crate::colmap::SparsePoint;
use crate::gaussian::{Splat, SplatCloud};
use crate::math;

pub const INITIAL_OPACITY: f64 = 0.1;
pub const MIN_SEED_POINTS: usize = 4;
const NEIGHBOURS: usize = 3;
const MIN_DISTANCE: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeedError {
    #[error("need at least {MIN_SEED_POINTS} sparse points to seed, got {0}")]
    InsufficientPoints(usize),
    #[error("sparse point {0} has a non-finite coordinate")]
    NonFinite(u64),
}

/// One isotropic splat per point, sized by the mean distance to its three
/// nearest neighbours. The result uses SH degree 0.
pub fn seed_from_points(points: &[SparsePoint]) -> Result<SplatCloud, SeedError> {
    if points.len() < MIN_SEED_POINTS {
        return Err(SeedError::InsufficientPoints(points.len()));
    }
    if let Some(p) = points.iter().find(|p| !p.xyz.iter().all(|v| v.is_finite())) {
        return Err(SeedError::NonFinite(p.id));
    }
    let coords: Vec<[f64; 3]> = points.iter().map(|p| p.xyz).collect();
    let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(&coords);
    let query = NonZeroUsize::new(NEIGHBOURS + 1).expect("nonzero");
    let opacity_logit = math::logit(INITIAL_OPACITY);

    let splats = coords
        .iter()
        .enumerate()
        .map(|(i, xyz)| {
            let found = tree.nearest_n::<SquaredEuclidean>(xyz, query);
            let mut dists: Vec<f64> = found
                .iter()
                .filter(|n| n.item as usize != i)
                .map(|n| n.distance.sqrt())
                .collect();
            dists.truncate(NEIGHBOURS);
            let mean = dists.iter().sum::<f64>() / dists.len() as f64;
            let mut splat = Splat {
                position: *xyz,
                log_scale: [mean.max(MIN_DISTANCE).ln(); 3],
                opacity_logit,
                ..Splat::default()
            };
            splat.set_base_color(points[i].rgb.map(|c| f64::from(c) / 255.0));
            splat
        })
        .collect();
    Ok(SplatCloud::new(splats, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sh::SH_C0;

    fn point(id: u64, xyz: [f64; 3], rgb: [u8; 3]) -> SparsePoint {
        SparsePoint { id, xyz, rgb }
    }

    #[test]
    fn tetrahedron_gets_equal_scales_and_gray_dc() {
        let verts = [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ];
        let pts: Vec<_> = verts
            .iter()
            .enumerate()
            .map(|(i, v)| point(i as u64, *v, [128; 3]))
            .collect();
        let cloud = seed_from_points(&pts).unwrap();
        assert_eq!(cloud.len(), 4);
        let edge = 8f64.sqrt();
        for s in &cloud.splats {
            for k in 0..3 {
                assert!((s.log_scale[k] - edge.ln()).abs() < 1e-12);
                assert!((s.sh[k][0] - (128.0 / 255.0 - 0.5) / SH_C0).abs() < 1e-12);
                assert!(s.sh[k][1..].iter().all(|c| *c == 0.0));
            }
            assert_eq!(s.rotation, [1.0, 0.0, 0.0, 0.0]);
            assert!((s.opacity() - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn three_points_are_insufficient() {
        let pts: Vec<_> = (0..3).map(|i| point(i, [i as f64, 0.0, 0.0], [0; 3])).collect();
        assert_eq!(seed_from_points(&pts), Err(SeedError::InsufficientPoints(3)));
    }

    #[test]
    fn white_point_inverts_dc_convention() {
        let pts: Vec<_> = (0..4)
            .map(|i| point(i, [i as f64, 0.0, 0.0], [255; 3]))
            .collect();
        let cloud = seed_from_points(&pts).unwrap();
        assert!((cloud.splats[0].sh[0][0] - 1.7725).abs() < 1e-4);
    }

    #[test]
    fn coincident_points_get_minimum_scale() {
        let pts: Vec<_> = (0..5).map(|i| point(i, [2.0, 2.0, 2.0], [10; 3])).collect();
        let cloud = seed_from_points(&pts).unwrap();
        assert!(cloud.splats.iter().all(|s| s.log_scale[0] == MIN_DISTANCE.ln()));
    }
}
