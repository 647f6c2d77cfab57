//! Seeded synthetic scenes for tests, benchmarks and demos.
//!
//! All random values are rounded to `f32` so that scenes survive a PLY
//! round trip unchanged.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::camera::{Camera, CameraIntrinsics};
use crate::colmap::{
    write_colmap_dir, ColmapError, ColmapFormat, PosedImage, SparseCamera, SparseModel,
    SparsePoint,
};
use crate::dataset::{TrainingDataset, TrainingView};
use crate::gaussian::{Splat, SplatCloud};
use crate::image::ImageError;
use crate::math;
use crate::ply::write_splat_ply;
use crate::raster::{render, RenderError};
use crate::sh::{SH_C0, SH_COEFFS};

pub const SYNTHETIC_SPLATS: usize = 20;
pub const SYNTHETIC_VIEWS: usize = 8;
pub const SYNTHETIC_SIZE: u32 = 64;
/// Camera ring radius, close to the scene extent of the synthetic dataset.
pub const RING_RADIUS: f64 = 4.0;
/// Position noise of the perturbed initialization, as a fraction of the extent.
pub const PERTURBATION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Colmap(#[from] ColmapError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn f32r(v: f64) -> f64 {
    f64::from(v as f32)
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    f32r(rng.random_range(lo..hi))
}

fn random_rotation<R: Rng>(rng: &mut R) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-3 {
            return q.map(|v| f32r(v / n));
        }
    }
}

/// Random splat near `center` with the given scale range (natural log).
pub fn random_splat<R: Rng>(
    rng: &mut R,
    center: [f64; 3],
    spread: f64,
    log_scale: (f64, f64),
    sh_amplitude: f64,
) -> Splat {
    let mut sh = [[0.0; SH_COEFFS]; 3];
    for channel in &mut sh {
        channel[0] = uniform(rng, -0.5 / SH_C0, 0.5 / SH_C0);
        for c in channel.iter_mut().skip(1) {
            *c = if sh_amplitude > 0.0 {
                uniform(rng, -sh_amplitude, sh_amplitude)
            } else {
                0.0
            };
        }
    }
    Splat {
        position: center.map(|c| f32r(c + rng.random_range(-spread..spread))),
        log_scale: std::array::from_fn(|_| uniform(rng, log_scale.0, log_scale.1)),
        rotation: random_rotation(rng),
        opacity_logit: uniform(rng, -2.0, 4.0),
        sh,
    }
}

/// A random cloud of `count` splats in front of a random camera looking at
/// the origin, for renderer and gradient tests.
pub fn random_scene(seed: u64, count: usize, width: u32, height: u32) -> (SplatCloud, Camera) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distance = rng.random_range(2.5..4.0);
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let elevation = rng.random_range(-0.6..0.6);
    let eye = [
        distance * theta.cos() * f64::cos(elevation),
        distance * f64::sin(elevation),
        distance * theta.sin() * f64::cos(elevation),
    ];
    let fov = rng.random_range(40.0..70.0);
    let mut intr = CameraIntrinsics::from_fov(width, height, fov);
    intr.cx += rng.random_range(-2.0..2.0);
    intr.cy += rng.random_range(-2.0..2.0);
    let camera =
        Camera::look_at(intr, eye, [0.0; 3], [0.0, 1.0, 0.0]).expect("eye is never at the origin");
    let sh_amplitude = 0.3;
    let splats = (0..count)
        .map(|_| random_splat(&mut rng, [0.0; 3], 0.8, (-3.0, -1.2), sh_amplitude))
        .collect();
    let degree = rng.random_range(0..=3u8);
    (SplatCloud::new(splats, degree), camera)
}

/// Cameras on a horizontal ring around the origin, slightly alternating in
/// height, all looking at the origin.
pub fn ring_cameras(count: usize, radius: f64, width: u32, height: u32) -> Vec<Camera> {
    let intr = CameraIntrinsics::from_fov(width, height, 50.0);
    (0..count)
        .map(|i| {
            let a = i as f64 * std::f64::consts::TAU / count as f64;
            let y = if i % 2 == 0 { 0.6 } else { -0.4 };
            let eye = [radius * a.cos(), y, radius * a.sin()];
            Camera::look_at(intr, eye, [0.0; 3], [0.0, 1.0, 0.0]).expect("valid ring camera")
        })
        .collect()
}

/// The ground-truth scene: 20 opaque-ish, view-independent splats inside
/// the unit ball.
pub fn ground_truth_cloud(seed: u64) -> SplatCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splats = (0..SYNTHETIC_SPLATS)
        .map(|_| {
            let mut s = random_splat(&mut rng, [0.0; 3], 0.7, (-2.4, -1.4), 0.0);
            s.opacity_logit = uniform(&mut rng, 1.0, 4.0);
            s
        })
        .collect();
    SplatCloud::new(splats, 0)
}

/// Copy with Gaussian position noise of standard deviation `sigma`.
pub fn perturbed(cloud: &SplatCloud, sigma: f64, seed: u64) -> SplatCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = cloud.clone();
    for s in &mut out.splats {
        for v in &mut s.position {
            *v = f32r(*v + sigma * rng.sample::<f64, _>(StandardNormal));
        }
    }
    out
}

/// A complete synthetic training problem.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub truth: SplatCloud,
    pub init: SplatCloud,
    pub dataset: TrainingDataset,
}

/// Renders the ground truth from 8 ring views at 64×64 on black, and
/// perturbs it by 1% of the scene extent for initialization.
pub fn synthetic_scene(seed: u64) -> Result<SyntheticScene, FixtureError> {
    let truth = ground_truth_cloud(seed);
    let cameras = ring_cameras(SYNTHETIC_VIEWS, RING_RADIUS, SYNTHETIC_SIZE, SYNTHETIC_SIZE);
    let mut views = Vec::with_capacity(cameras.len());
    for (i, camera) in cameras.into_iter().enumerate() {
        let (image, _) = render(&truth, &camera, [0.0; 3])?;
        views.push(TrainingView {
            name: format!("view_{i:03}.png"),
            camera,
            image,
        });
    }
    let dataset = TrainingDataset {
        views,
        seed_points: Vec::new(),
    };
    let extent = dataset.scene_extent();
    let init = perturbed(&truth, PERTURBATION * extent, seed.wrapping_add(1));
    let dataset = TrainingDataset {
        seed_points: seed_points(&init),
        ..dataset
    };
    Ok(SyntheticScene {
        truth,
        init,
        dataset,
    })
}

/// Sparse points at the splat centers, colored by their base color.
pub fn seed_points(cloud: &SplatCloud) -> Vec<SparsePoint> {
    cloud
        .splats
        .iter()
        .enumerate()
        .map(|(i, s)| SparsePoint {
            id: i as u64 + 1,
            xyz: s.position,
            rgb: std::array::from_fn(|c| crate::image::quantize(s.sh[c][0] * SH_C0 + 0.5)),
        })
        .collect()
}

/// Sparse model describing the scene's cameras and seed points.
pub fn sparse_model(scene: &SyntheticScene) -> SparseModel {
    let mut model = SparseModel::default();
    for (i, view) in scene.dataset.views.iter().enumerate() {
        let id = i as u32 + 1;
        model
            .cameras
            .insert(id, SparseCamera::pinhole(view.camera.intrinsics));
        model.images.push(PosedImage {
            id,
            name: view.name.clone(),
            camera_id: id,
            rotation: math::mat_to_quat(&view.camera.rotation),
            translation: view.camera.translation,
        });
    }
    model.points = scene.dataset.seed_points.clone();
    model
}

/// Writes `images/*.png`, `sparse/0/*.txt`, `init.ply` (perturbed cloud)
/// and `truth.ply` under `dir`.
pub fn write_synthetic_fixture(scene: &SyntheticScene, dir: &Path) -> Result<(), FixtureError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| FixtureError::Io { path, source }
    };
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(io(&images))?;
    for view in &scene.dataset.views {
        view.image.save_png(&images.join(&view.name))?;
    }
    write_colmap_dir(&sparse_model(scene), &dir.join("sparse").join("0"), ColmapFormat::Text)?;
    for (name, cloud) in [("init.ply", &scene.init), ("truth.ply", &scene.truth)] {
        let path = dir.join(name);
        std::fs::write(&path, write_splat_ply(cloud)).map_err(io(&path))?;
    }
    Ok(())
}

/// A cloud of `count` small splats spread over the view of a 640×480
/// camera, used for throughput benchmarks.
pub fn bench_scene(count: usize, seed: u64) -> (SplatCloud, Camera) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intr = CameraIntrinsics::from_fov(640, 480, 60.0);
    let camera = Camera::look_at(intr, [0.0, 0.0, -5.0], [0.0; 3], [0.0, 1.0, 0.0])
        .expect("valid bench camera");
    let splats = (0..count)
        .map(|_| random_splat(&mut rng, [0.0; 3], 2.0, (-4.5, -3.0), 0.2))
        .collect();
    (SplatCloud::new(splats, 3), camera)
}

/// Random cloud with arbitrary parameters and SH degree, for format tests.
pub fn random_cloud(seed: u64, count: usize) -> SplatCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let degree = rng.random_range(0..=3u8);
    let splats = (0..count)
        .map(|_| {
            let mut s = random_splat(&mut rng, [0.0; 3], 100.0, (-8.0, 3.0), 2.0);
            s.opacity_logit = uniform(&mut rng, -30.0, 30.0);
            s
        })
        .collect();
    SplatCloud::new(splats, degree)
}

/// Random sparse model with every supported camera model, for format tests.
pub fn random_sparse_model(seed: u64) -> SparseModel {
    use crate::colmap::CameraModel;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models = [
        CameraModel::SimplePinhole,
        CameraModel::Pinhole,
        CameraModel::SimpleRadial,
        CameraModel::Radial,
        CameraModel::OpenCv,
    ];
    let mut model = SparseModel::default();
    let cameras = rng.random_range(1..4u32);
    for id in 1..=cameras {
        let kind = models[rng.random_range(0..models.len())];
        let width = rng.random_range(1..4000u32);
        let height = rng.random_range(1..4000u32);
        let params = (0..kind.param_count())
            .map(|k| {
                if k < 2 {
                    rng.random_range(10.0..5000.0)
                } else {
                    rng.random_range(-1.0..1.0) * f64::from(width)
                }
            })
            .collect();
        model.cameras.insert(
            id * 3,
            SparseCamera {
                model: kind,
                width,
                height,
                params,
            },
        );
    }
    let camera_ids: Vec<u32> = model.cameras.keys().copied().collect();
    for i in 0..rng.random_range(0..6u32) {
        let mut rotation: [f64; 4] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
        let n = rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        rotation = rotation.map(|v| v / n);
        let name_len = rng.random_range(1..12);
        let name: String = (0..name_len)
            .map(|_| char::from(b"abcdefghijklmnopqrstuvwxyz0123456789_-."[rng.random_range(0..39)]))
            .collect();
        model.images.push(PosedImage {
            id: i * 2 + 1,
            name: format!("{name}.jpg"),
            camera_id: camera_ids[rng.random_range(0..camera_ids.len())],
            rotation,
            translation: std::array::from_fn(|_| rng.random_range(-50.0..50.0)),
        });
    }
    for i in 0..rng.random_range(0..40u64) {
        model.points.push(SparsePoint {
            id: i * 5 + 7,
            xyz: std::array::from_fn(|_| rng.random_range(-1e3..1e3)),
            rgb: std::array::from_fn(|_| rng.random()),
        });
    }
    model
}
