use nalgebra::{Matrix3, SymmetricEigen};
use proptest::prelude::*;
use splatcap_core::gaussian::{covariance3d, SplatCloud};
use splatcap_core::raster::{render, render_reference, render_with, RenderOptions};
use splatcap_core::synthetic::random_scene;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_eigenvalues_are_squared_scales(
        ls in prop::array::uniform3(-4.0f64..1.0),
        q in prop::array::uniform4(-1.0f64..1.0),
    ) {
        prop_assume!(q.iter().map(|v| v * v).sum::<f64>() > 1e-2);
        let cov = covariance3d(ls, q).unwrap();
        let m = Matrix3::from_fn(|i, j| cov[i][j]);
        prop_assert!((m - m.transpose()).abs().max() < 1e-12);
        let mut got: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        let mut want: Vec<f64> = ls.iter().map(|l| (2.0 * l).exp()).collect();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-9 * w.max(1.0), "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn covariance_ignores_quaternion_magnitude(
        ls in prop::array::uniform3(-3.0f64..0.5),
        q in prop::array::uniform4(-1.0f64..1.0),
        k in 0.1f64..10.0,
    ) {
        prop_assume!(q.iter().map(|v| v * v).sum::<f64>() > 1e-2);
        let a = covariance3d(ls, q).unwrap();
        let b = covariance3d(ls, q.map(|v| v * k)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((a[i][j] - b[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn tiled_render_matches_reference_on_random_scenes() {
    for seed in 0..40u64 {
        let (cloud, cam) = random_scene(seed, 1 + (seed as usize * 7) % 64, 64, 64);
        let bg = [0.05 * (seed % 5) as f64, 0.3, 0.1];
        let (tiled, _) = render(&cloud, &cam, bg).unwrap();
        let reference = render_reference(&cloud, &cam, bg).unwrap();
        let diff = tiled.max_abs_diff(&reference);
        assert!(diff <= 1e-5, "seed {seed}: {diff}");
    }
}

#[test]
fn tile_size_does_not_change_the_image() {
    for seed in 100..110u64 {
        let (cloud, cam) = random_scene(seed, 40, 61, 47);
        let base = render_with(&cloud, &cam, [0.2; 3], RenderOptions { tile_size: 16 }).unwrap().0;
        for tile_size in [8, 32, 5] {
            let other = render_with(&cloud, &cam, [0.2; 3], RenderOptions { tile_size }).unwrap().0;
            assert!(base.max_abs_diff(&other) <= 1e-5, "tile {tile_size}");
        }
    }
}

#[test]
fn transparent_cloud_renders_background_exactly() {
    let (mut cloud, cam) = random_scene(3, 50, 32, 32);
    for s in &mut cloud.splats {
        s.opacity_logit = -40.0;
    }
    let bg = [0.1, 0.7, 0.4];
    let (img, _) = render(&cloud, &cam, bg).unwrap();
    assert!(img.pixels().iter().all(|p| *p == bg));
}

#[test]
fn pixels_stay_in_unit_range_for_unit_colors() {
    for seed in 200..210u64 {
        let (mut cloud, cam) = random_scene(seed, 64, 48, 48);
        cloud.active_sh_degree = 0;
        for s in &mut cloud.splats {
            for ch in &mut s.sh {
                ch[0] = ch[0].clamp(-0.5 / splatcap_core::sh::SH_C0, 0.5 / splatcap_core::sh::SH_C0);
            }
        }
        let (img, _) = render(&cloud, &cam, [1.0; 3]).unwrap();
        for p in img.pixels() {
            for c in p {
                assert!(c.is_finite() && *c >= 0.0 && *c <= 1.0 + 1e-6, "{c}");
            }
        }
    }
}

#[test]
fn repeated_renders_are_bit_identical() {
    let (cloud, cam) = random_scene(9, 64, 64, 64);
    let a = render(&cloud, &cam, [0.0; 3]).unwrap();
    let b = render(&cloud, &cam, [0.0; 3]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn stats_match_cloud_length() {
    let (cloud, cam) = random_scene(11, 30, 32, 32);
    let (_, stats) = render(&cloud, &cam, [0.0; 3]).unwrap();
    assert_eq!(stats.len(), cloud.len());
    for i in 0..cloud.len() {
        if stats.visible[i] {
            assert!(stats.max_radius[i] >= 1.0);
        }
    }
    let (_, empty) = render(&SplatCloud::default(), &cam, [0.0; 3]).unwrap();
    assert!(empty.is_empty());
}
