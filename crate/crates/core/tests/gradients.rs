use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatcap_core::camera::{Camera, CameraIntrinsics};
use splatcap_core::gaussian::{Splat, SplatCloud};
use splatcap_core::image::ImageBuffer;
use splatcap_core::math::IDENTITY3;
use splatcap_core::optim::{backward, loss_and_gradient, param_slice, param_slice_mut, ParamGroup};
use splatcap_core::raster::render_reference;
use splatcap_core::synthetic::random_scene;

const EPS: f64 = 1e-4;

/// Scalar objective evaluated with the brute-force renderer.
fn objective(cloud: &SplatCloud, cam: &Camera, bg: [f64; 3], weights: &ImageBuffer) -> f64 {
    let img = render_reference(cloud, cam, bg).unwrap();
    img.pixels()
        .iter()
        .zip(weights.pixels())
        .map(|(p, w)| p[0] * w[0] + p[1] * w[1] + p[2] * w[2])
        .sum()
}

fn random_weights(w: u32, h: u32, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = ImageBuffer::new(w, h, [0.0; 3]);
    for px in img.pixels_mut() {
        *px = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    }
    img
}

struct Tally {
    checked: usize,
    passed: usize,
    worst: Vec<String>,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

/// Compares analytic gradients of every parameter against central
/// differences of `f`.
fn check_all<F>(cloud: &SplatCloud, analytic: &[splatcap_core::optim::SplatGrad], f: F, tally: &mut Tally)
where
    F: Fn(&SplatCloud) -> f64,
{
    for i in 0..cloud.len() {
        for group in ParamGroup::ALL {
            let n = param_slice(&cloud.splats[i], group).len();
            for k in 0..n {
                let mut plus = cloud.clone();
                param_slice_mut(&mut plus.splats[i], group)[k] += EPS;
                let mut minus = cloud.clone();
                param_slice_mut(&mut minus.splats[i], group)[k] -= EPS;
                let fd = (f(&plus) - f(&minus)) / (2.0 * EPS);
                let an = analytic[i].group(group)[k];
                if an.abs().max(fd.abs()) <= 1e-6 {
                    continue;
                }
                tally.checked += 1;
                let e = rel_err(an, fd);
                if e < 1e-3 {
                    tally.passed += 1;
                } else if tally.worst.len() < 10 {
                    tally.worst.push(format!("splat {i} {group:?}[{k}] analytic {an:e} fd {fd:e} rel {e:e}"));
                }
            }
        }
    }
}

fn camera(w: u32, h: u32, f: f64) -> Camera {
    Camera::new(
        CameraIntrinsics {
            width: w,
            height: h,
            fx: f,
            fy: f,
            cx: f64::from(w) / 2.0,
            cy: f64::from(h) / 2.0,
        },
        IDENTITY3,
        [0.0; 3],
    )
    .unwrap()
}

fn splat(position: [f64; 3], log_scale: [f64; 3], rotation: [f64; 4], opacity_logit: f64, seed: u64) -> Splat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Splat {
        position,
        log_scale,
        rotation,
        opacity_logit,
        ..Splat::default()
    };
    for ch in &mut s.sh {
        for c in ch.iter_mut() {
            *c = rng.random_range(-0.3..0.3);
        }
        ch[0] = rng.random_range(-1.0..1.0);
    }
    s
}

#[test]
fn single_splat_l1_gradients_match_finite_differences() {
    let cam = camera(16, 16, 16.0);
    let cloud = SplatCloud::new(
        vec![splat([0.1, -0.05, 2.0], [-1.6, -1.9, -1.7], [0.9, 0.2, -0.3, 0.1], 0.3, 3)],
        3,
    );
    let target = ImageBuffer::new(16, 16, [0.3, 0.2, 0.6]);
    let bg = [0.1, 0.0, 0.2];
    let f = |c: &SplatCloud| {
        let img = render_reference(c, &cam, bg).unwrap();
        loss_and_gradient(&img, &target, 0.0, false).unwrap().0
    };
    let img = render_reference(&cloud, &cam, bg).unwrap();
    let (_, d_image) = loss_and_gradient(&img, &target, 0.0, true).unwrap();
    let out = backward(&cloud, &cam, bg, &d_image.unwrap()).unwrap();
    let mut tally = Tally { checked: 0, passed: 0, worst: Vec::new() };
    check_all(&cloud, &out.grads, f, &mut tally);
    assert!(tally.checked > 40, "only {} coordinates checked", tally.checked);
    assert_eq!(tally.passed, tally.checked, "{:#?}", tally.worst);
}

#[test]
fn overlapping_splats_with_ssim_match_finite_differences() {
    let cam = camera(16, 16, 16.0);
    let cloud = SplatCloud::new(
        vec![
            splat([0.05, 0.0, 2.0], [-1.5, -1.8, -1.6], [0.8, -0.1, 0.4, 0.2], 0.8, 5),
            splat([-0.1, 0.08, 2.6], [-1.3, -1.4, -1.9], [0.3, 0.7, 0.1, -0.5], 1.5, 6),
        ],
        2,
    );
    let mut target = ImageBuffer::new(16, 16, [0.0; 3]);
    for (i, px) in target.pixels_mut().iter_mut().enumerate() {
        let t = i as f64 * 0.13;
        *px = [0.5 + 0.3 * t.sin(), 0.4, 0.5 + 0.2 * t.cos()];
    }
    let bg = [0.0; 3];
    let lambda = 0.2;
    let f = |c: &SplatCloud| {
        let img = render_reference(c, &cam, bg).unwrap();
        loss_and_gradient(&img, &target, lambda, false).unwrap().0
    };
    let img = render_reference(&cloud, &cam, bg).unwrap();
    let (_, d_image) = loss_and_gradient(&img, &target, lambda, true).unwrap();
    let out = backward(&cloud, &cam, bg, &d_image.unwrap()).unwrap();
    let mut tally = Tally { checked: 0, passed: 0, worst: Vec::new() };
    check_all(&cloud, &out.grads, f, &mut tally);
    assert!(tally.checked > 50, "only {} coordinates checked", tally.checked);
    assert!(
        tally.passed as f64 >= 0.99 * tally.checked as f64,
        "{}/{} {:#?}",
        tally.passed,
        tally.checked,
        tally.worst
    );
}

#[test]
fn transparent_cloud_has_only_opacity_gradients() {
    let cam = camera(16, 16, 16.0);
    let cloud = SplatCloud::new(
        vec![
            splat([0.0, 0.0, 2.0], [-1.5; 3], [1.0, 0.0, 0.0, 0.0], -40.0, 1),
            splat([0.1, 0.1, 3.0], [-1.2; 3], [1.0, 0.0, 0.0, 0.0], -40.0, 2),
        ],
        0,
    );
    let weights = random_weights(16, 16, 9);
    let out = backward(&cloud, &cam, [0.2; 3], &weights).unwrap();
    assert!(out.image.pixels().iter().all(|p| *p == [0.2; 3]));
    for g in &out.grads {
        for group in ParamGroup::ALL {
            if group != ParamGroup::Opacity {
                assert!(g.group(group).iter().all(|v| *v == 0.0), "{group:?}");
            }
        }
    }
    // Below the 1/255 skip the renderer is locally constant, so the
    // finite-difference opacity gradient is zero as well.
    let f = |c: &SplatCloud| objective(c, &cam, [0.2; 3], &weights);
    let mut plus = cloud.clone();
    plus.splats[0].opacity_logit += EPS;
    assert_eq!(f(&plus), f(&cloud));
}

#[test]
fn random_scenes_match_finite_differences() {
    let mut tally = Tally { checked: 0, passed: 0, worst: Vec::new() };
    for seed in 0..12u64 {
        let (cloud, cam) = random_scene(1000 + seed, 1 + (seed as usize % 8), 16, 16);
        let weights = random_weights(16, 16, seed);
        let out = backward(&cloud, &cam, [0.1, 0.2, 0.3], &weights).unwrap();
        check_all(&cloud, &out.grads, |c| objective(c, &cam, [0.1, 0.2, 0.3], &weights), &mut tally);
    }
    assert!(tally.checked > 500);
    assert!(
        tally.passed as f64 >= 0.99 * tally.checked as f64,
        "{}/{} {:#?}",
        tally.passed,
        tally.checked,
        tally.worst
    );
}

#[test]
fn backward_reports_screen_gradient_stats() {
    let (cloud, cam) = random_scene(77, 6, 16, 16);
    let weights = random_weights(16, 16, 1);
    let out = backward(&cloud, &cam, [0.0; 3], &weights).unwrap();
    assert_eq!(out.stats.len(), cloud.len());
    for i in 0..cloud.len() {
        if out.stats.visible[i] {
            assert_eq!(out.stats.grad_count[i], 1);
            assert!(out.stats.grad_accum[i].is_finite());
            assert_eq!(out.stats.position_grad[i], out.grads[i].position);
        } else {
            assert_eq!(out.stats.grad_count[i], 0);
            assert_eq!(out.grads[i], Default::default());
        }
    }
}
