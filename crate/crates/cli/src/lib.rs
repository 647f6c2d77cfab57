//! Library side of the `splatcap` command: camera paths, reports and
//! dataset loading shared by the binary and its tests.

pub mod path;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use splatcap_core::camera::Camera;
use splatcap_core::colmap::{locate_model_dir, read_colmap_sparse, ColmapError};
use splatcap_core::dataset::{assemble_dataset, DatasetError, TrainingDataset};
use splatcap_core::gaussian::SplatCloud;
use splatcap_core::image::ImageBuffer;
use splatcap_core::math::Vec3;
use splatcap_core::raster::{render, RenderError};
use thiserror::Error;

pub use path::{CameraPath, Keyframe, Orbit, PathError};

/// Parses `WxH`.
pub fn parse_resolution(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<u32>().ok().filter(|n| *n > 0);
    match (parse(w), parse(h)) {
        (Some(w), Some(h)) => Ok((w, h)),
        _ => Err(format!("expected positive WxH, got `{s}`")),
    }
}

/// Parses `x,y,z`.
pub fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("`{s}`: {e}"))?;
    match parts[..] {
        [x, y, z] if parts.iter().all(|v| v.is_finite()) => Ok([x, y, z]),
        _ => Err(format!("expected three finite numbers x,y,z, got `{s}`")),
    }
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// `key: value` summary of a cloud.
pub fn info_report(cloud: &SplatCloud) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "count: {}", cloud.len());
    let _ = writeln!(out, "sh_degree: {}", cloud.active_sh_degree);
    let Some((lo, hi)) = cloud.bounds() else {
        return out;
    };
    let v3 = |v: Vec3| format!("{:.6} {:.6} {:.6}", v[0], v[1], v[2]);
    let _ = writeln!(out, "bbox_min: {}", v3(lo));
    let _ = writeln!(out, "bbox_max: {}", v3(hi));
    let opacity = sorted(cloud.splats.iter().map(|s| s.opacity()).collect());
    let scale = sorted(cloud.splats.iter().map(|s| s.max_scale()).collect());
    for (name, values) in [("opacity", &opacity), ("max_scale", &scale)] {
        for p in [5.0, 50.0, 95.0] {
            let _ = writeln!(out, "{name}_p{p:02}: {:.6}", percentile(values, p));
        }
    }
    out
}

/// Renders every camera of the path; pixels are unquantized.
pub fn render_frames(cloud: &SplatCloud, cameras: &[Camera], background: Vec3) -> Result<Vec<ImageBuffer>, RenderError> {
    cameras
        .iter()
        .map(|cam| render(cloud, cam, background).map(|(img, _)| img))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub splats: usize,
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl BenchReport {
    pub fn fps_median(&self) -> f64 {
        1000.0 / self.median_ms
    }

    /// Machine-readable `key: value` lines.
    pub fn lines(&self) -> String {
        format!(
            "splats: {}\nresolution: {}x{}\nframes: {}\nmedian_ms: {:.4}\np95_ms: {:.4}\nfps_median: {:.3}\n",
            self.splats,
            self.width,
            self.height,
            self.frames,
            self.median_ms,
            self.p95_ms,
            self.fps_median()
        )
    }
}

/// Times one render per camera after `warmup` untimed renders of the
/// first camera.
pub fn bench(cloud: &SplatCloud, cameras: &[Camera], warmup: usize) -> Result<BenchReport, RenderError> {
    let first = cameras
        .first()
        .ok_or_else(|| RenderError::InvalidParameter("benchmark needs at least one camera".into()))?;
    for _ in 0..warmup {
        render(cloud, first, [0.0; 3])?;
    }
    let mut times = Vec::with_capacity(cameras.len());
    for cam in cameras {
        let start = Instant::now();
        std::hint::black_box(render(cloud, cam, [0.0; 3])?);
        times.push((start.elapsed().as_secs_f64() * 1000.0).max(1e-6));
    }
    let times = sorted(times);
    Ok(BenchReport {
        splats: cloud.len(),
        width: first.width(),
        height: first.height(),
        frames: cameras.len(),
        median_ms: percentile(&times, 50.0),
        p95_ms: percentile(&times, 95.0),
    })
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("dataset directory {0} does not exist")]
    MissingDir(PathBuf),
    #[error("dataset has no images directory (looked for {0})")]
    MissingImages(PathBuf),
    #[error(transparent)]
    Colmap(#[from] ColmapError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Loads `dir/images` against the sparse model under `dir/sparse` (or
/// `dir` itself).
pub fn load_dataset(dir: &Path, downscale: u32) -> Result<TrainingDataset, LoadError> {
    if !dir.is_dir() {
        return Err(LoadError::MissingDir(dir.to_path_buf()));
    }
    let images = dir.join("images");
    if !images.is_dir() {
        return Err(LoadError::MissingImages(images));
    }
    let sparse_root = if dir.join("sparse").is_dir() {
        dir.join("sparse")
    } else {
        dir.to_path_buf()
    };
    let model = read_colmap_sparse(&locate_model_dir(&sparse_root))?;
    Ok(assemble_dataset(&model, &images, downscale)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use splatcap_core::synthetic::random_cloud;

    #[test]
    fn resolution_and_vectors() {
        assert_eq!(parse_resolution("640x480"), Ok((640, 480)));
        assert_eq!(parse_resolution("8X2"), Ok((8, 2)));
        assert!(parse_resolution("640").is_err());
        assert!(parse_resolution("0x4").is_err());
        assert_eq!(parse_vec3("1, -2.5,3"), Ok([1.0, -2.5, 3.0]));
        assert!(parse_vec3("1,2").is_err());
        assert!(parse_vec3("1,2,nan").is_err());
    }

    #[test]
    fn nearest_rank_percentiles() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 5.0), 1.0);
        assert_eq!(percentile(&v, 50.0), 10.0);
        assert_eq!(percentile(&v, 95.0), 19.0);
        assert_eq!(percentile(&[3.0], 95.0), 3.0);
    }

    #[test]
    fn info_lists_count_and_bounds() {
        let empty = info_report(&SplatCloud::default());
        assert!(empty.starts_with("count: 0\n"));
        assert!(!empty.contains("bbox"));
        let cloud = random_cloud(1, 10);
        let report = info_report(&cloud);
        assert!(report.contains("count: 10\n"));
        for key in ["bbox_min:", "bbox_max:", "opacity_p05:", "opacity_p50:", "max_scale_p95:"] {
            assert!(report.contains(key), "{key}");
        }
    }
}
