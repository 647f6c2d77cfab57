//! COLMAP sparse reconstruction reader and writer (text and binary).
//!
//! Supported camera models are SIMPLE_PINHOLE (0), PINHOLE (1),
//! SIMPLE_RADIAL (2), RADIAL (3) and OPENCV (4). Distortion coefficients are
//! kept verbatim but ignored by [`SparseCamera::intrinsics`].

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::camera::CameraIntrinsics;

#[derive(Debug, Error)]
pub enum ColmapError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("sparse model is missing `{0}`")]
    MissingFile(String),
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: truncated at byte {offset} (needed {needed} more bytes)")]
    Truncated {
        file: String,
        offset: usize,
        needed: usize,
    },
    #[error("unsupported camera model `{0}`")]
    UnsupportedModel(String),
    #[error("image `{image}` references unknown camera {camera_id}")]
    DanglingCamera { image: String, camera_id: u32 },
    #[error("image `{image}` has a non-unit rotation quaternion (norm {norm})")]
    NonUnitQuaternion { image: String, norm: f64 },
    #[error("camera {id}: {message}")]
    InvalidCamera { id: u32, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
    SimpleRadial,
    Radial,
    OpenCv,
}

impl CameraModel {
    pub fn id(self) -> i32 {
        match self {
            Self::SimplePinhole => 0,
            Self::Pinhole => 1,
            Self::SimpleRadial => 2,
            Self::Radial => 3,
            Self::OpenCv => 4,
        }
    }

    pub fn from_id(id: i32) -> Option<Self> {
        Some(match id {
            0 => Self::SimplePinhole,
            1 => Self::Pinhole,
            2 => Self::SimpleRadial,
            3 => Self::Radial,
            4 => Self::OpenCv,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SimplePinhole => "SIMPLE_PINHOLE",
            Self::Pinhole => "PINHOLE",
            Self::SimpleRadial => "SIMPLE_RADIAL",
            Self::Radial => "RADIAL",
            Self::OpenCv => "OPENCV",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Self::SimplePinhole,
            Self::Pinhole,
            Self::SimpleRadial,
            Self::Radial,
            Self::OpenCv,
        ]
        .into_iter()
        .find(|m| m.name() == name)
    }

    pub fn param_count(self) -> usize {
        match self {
            Self::SimplePinhole => 3,
            Self::Pinhole => 4,
            Self::SimpleRadial => 4,
            Self::Radial => 5,
            Self::OpenCv => 8,
        }
    }

    pub fn has_distortion(self) -> bool {
        !matches!(self, Self::SimplePinhole | Self::Pinhole)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCamera {
    pub model: CameraModel,
    pub width: u32,
    pub height: u32,
    pub params: Vec<f64>,
}

impl SparseCamera {
    pub fn pinhole(intrinsics: CameraIntrinsics) -> Self {
        Self {
            model: CameraModel::Pinhole,
            width: intrinsics.width,
            height: intrinsics.height,
            params: vec![intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy],
        }
    }

    /// Pinhole part of the camera; distortion terms are dropped.
    pub fn intrinsics(&self) -> CameraIntrinsics {
        let p = &self.params;
        let (fx, fy, cx, cy) = match self.model {
            CameraModel::SimplePinhole | CameraModel::SimpleRadial | CameraModel::Radial => {
                (p[0], p[0], p[1], p[2])
            }
            CameraModel::Pinhole | CameraModel::OpenCv => (p[0], p[1], p[2], p[3]),
        };
        CameraIntrinsics {
            width: self.width,
            height: self.height,
            fx,
            fy,
            cx,
            cy,
        }
    }
}

/// A registered image: world-to-camera rotation (w, x, y, z) and translation.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedImage {
    pub id: u32,
    pub name: String,
    pub camera_id: u32,
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsePoint {
    pub id: u64,
    pub xyz: [f64; 3],
    pub rgb: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseModel {
    pub cameras: BTreeMap<u32, SparseCamera>,
    pub images: Vec<PosedImage>,
    pub points: Vec<SparsePoint>,
}

impl SparseModel {
    pub fn intrinsics(&self, camera_id: u32) -> Option<CameraIntrinsics> {
        self.cameras.get(&camera_id).map(SparseCamera::intrinsics)
    }

    fn validate(&self) -> Result<(), ColmapError> {
        for (&id, cam) in &self.cameras {
            cam.intrinsics()
                .validate()
                .map_err(|e| ColmapError::InvalidCamera {
                    id,
                    message: e.to_string(),
                })?;
            if cam.model.has_distortion() {
                tracing::warn!(
                    camera = id,
                    model = cam.model.name(),
                    "distortion parameters are ignored"
                );
            }
        }
        for img in &self.images {
            if !self.cameras.contains_key(&img.camera_id) {
                return Err(ColmapError::DanglingCamera {
                    image: img.name.clone(),
                    camera_id: img.camera_id,
                });
            }
            let norm = img.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= 1e-6) {
                return Err(ColmapError::NonUnitQuaternion {
                    image: img.name.clone(),
                    norm,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColmapFormat {
    Text,
    Binary,
}

impl ColmapFormat {
    fn ext(self) -> &'static str {
        match self {
            Self::Text => "txt",
            Self::Binary => "bin",
        }
    }
}

const STEMS: [&str; 3] = ["cameras", "images", "points3D"];

/// Raw contents of the three model files.
#[derive(Debug, Clone, PartialEq)]
pub struct ColmapFiles {
    pub format: ColmapFormat,
    pub cameras: Vec<u8>,
    pub images: Vec<u8>,
    pub points3d: Vec<u8>,
}

pub fn parse_colmap(files: &ColmapFiles) -> Result<SparseModel, ColmapError> {
    let model = match files.format {
        ColmapFormat::Text => SparseModel {
            cameras: text::cameras(&files.cameras)?,
            images: text::images(&files.images)?,
            points: text::points(&files.points3d)?,
        },
        ColmapFormat::Binary => SparseModel {
            cameras: binary::cameras(&files.cameras)?,
            images: binary::images(&files.images)?,
            points: binary::points(&files.points3d)?,
        },
    };
    model.validate()?;
    Ok(model)
}

/// Reads a sparse model from a directory (or its `0/` subdirectory) or a tar
/// archive containing the three files. Binary files win over text when both
/// are present.
pub fn read_colmap_sparse(path: &Path) -> Result<SparseModel, ColmapError> {
    let files = if path.is_dir() {
        load_dir(&locate_model_dir(path))?
    } else {
        load_tar(path)?
    };
    parse_colmap(&files)
}

/// Directory holding `cameras.{bin,txt}`: `root` itself, else the first
/// match in name order one or two levels down (`0/`, `sparse/0/`).
pub fn locate_model_dir(root: &Path) -> PathBuf {
    let has_model = |dir: &Path| {
        dir.join("cameras.bin").is_file() || dir.join("cameras.txt").is_file()
    };
    let subdirs = |dir: &Path| {
        let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
            .into_iter()
            .flatten()
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        v.sort();
        v
    };
    if has_model(root) {
        return root.to_path_buf();
    }
    let first = subdirs(root);
    if let Some(d) = first.iter().find(|d| has_model(d)) {
        return d.clone();
    }
    first
        .iter()
        .flat_map(|d| subdirs(d))
        .find(|d| has_model(d))
        .unwrap_or_else(|| root.to_path_buf())
}

fn load_dir(dir: &Path) -> Result<ColmapFiles, ColmapError> {
    let format = if dir.join("cameras.bin").is_file() {
        ColmapFormat::Binary
    } else {
        ColmapFormat::Text
    };
    let read = |stem: &str| {
        let name = format!("{stem}.{}", format.ext());
        let path = dir.join(&name);
        if !path.is_file() {
            return Err(ColmapError::MissingFile(name));
        }
        std::fs::read(&path).map_err(|source| ColmapError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    Ok(ColmapFiles {
        format,
        cameras: read(STEMS[0])?,
        images: read(STEMS[1])?,
        points3d: read(STEMS[2])?,
    })
}

fn load_tar(path: &Path) -> Result<ColmapFiles, ColmapError> {
    let io_err = |source| ColmapError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut archive = tar::Archive::new(file);
    let mut found: HashMap<String, Vec<u8>> = HashMap::new();
    for entry in archive.entries().map_err(io_err)? {
        let mut entry = entry.map_err(io_err)?;
        let name = entry
            .path()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()));
        let Some(name) = name else { continue };
        let wanted = STEMS
            .iter()
            .any(|s| name == format!("{s}.bin") || name == format!("{s}.txt"));
        if wanted && !found.contains_key(&name) {
            let mut buf = Vec::new();
            entry.read_to_end(&mut buf).map_err(io_err)?;
            found.insert(name, buf);
        }
    }
    let format = if found.contains_key("cameras.bin") {
        ColmapFormat::Binary
    } else {
        ColmapFormat::Text
    };
    let mut take = |stem: &str| {
        let name = format!("{stem}.{}", format.ext());
        found.remove(&name).ok_or(ColmapError::MissingFile(name))
    };
    Ok(ColmapFiles {
        format,
        cameras: take(STEMS[0])?,
        images: take(STEMS[1])?,
        points3d: take(STEMS[2])?,
    })
}

/// Serializes a model in the given format.
pub fn write_colmap(model: &SparseModel, format: ColmapFormat) -> ColmapFiles {
    match format {
        ColmapFormat::Text => ColmapFiles {
            format,
            cameras: text::write_cameras(model).into_bytes(),
            images: text::write_images(model).into_bytes(),
            points3d: text::write_points(model).into_bytes(),
        },
        ColmapFormat::Binary => ColmapFiles {
            format,
            cameras: binary::write_cameras(model),
            images: binary::write_images(model),
            points3d: binary::write_points(model),
        },
    }
}

pub fn write_colmap_dir(
    model: &SparseModel,
    dir: &Path,
    format: ColmapFormat,
) -> Result<(), ColmapError> {
    let files = write_colmap(model, format);
    std::fs::create_dir_all(dir).map_err(|source| ColmapError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    for (stem, bytes) in STEMS
        .iter()
        .zip([&files.cameras, &files.images, &files.points3d])
    {
        let path = dir.join(format!("{stem}.{}", format.ext()));
        std::fs::write(&path, bytes).map_err(|source| ColmapError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

mod text {
    use super::*;

    fn utf8<'a>(file: &str, bytes: &'a [u8]) -> Result<&'a str, ColmapError> {
        std::str::from_utf8(bytes).map_err(|e| ColmapError::Parse {
            file: file.into(),
            line: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
            message: "not valid UTF-8".into(),
        })
    }

    fn err(file: &str, line: usize, message: impl Into<String>) -> ColmapError {
        ColmapError::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    fn field<T: std::str::FromStr>(
        file: &str,
        line: usize,
        what: &str,
        token: Option<&str>,
    ) -> Result<T, ColmapError> {
        let token = token.ok_or_else(|| err(file, line, format!("missing {what}")))?;
        token
            .parse()
            .map_err(|_| err(file, line, format!("invalid {what} `{token}`")))
    }

    pub fn cameras(bytes: &[u8]) -> Result<BTreeMap<u32, SparseCamera>, ColmapError> {
        const F: &str = "cameras.txt";
        let mut out = BTreeMap::new();
        for (i, line) in utf8(F, bytes)?.lines().enumerate() {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut t = line.split_whitespace();
            let id: u32 = field(F, n, "camera id", t.next())?;
            let model_name = t.next().ok_or_else(|| err(F, n, "missing model"))?;
            let model = CameraModel::from_name(model_name)
                .ok_or_else(|| ColmapError::UnsupportedModel(model_name.to_string()))?;
            let width: u32 = field(F, n, "width", t.next())?;
            let height: u32 = field(F, n, "height", t.next())?;
            let params = (0..model.param_count())
                .map(|_| field::<f64>(F, n, "parameter", t.next()))
                .collect::<Result<Vec<_>, _>>()?;
            if t.next().is_some() {
                return Err(err(F, n, "too many parameters for camera model"));
            }
            out.insert(
                id,
                SparseCamera {
                    model,
                    width,
                    height,
                    params,
                },
            );
        }
        Ok(out)
    }

    pub fn images(bytes: &[u8]) -> Result<Vec<PosedImage>, ColmapError> {
        const F: &str = "images.txt";
        let mut out = Vec::new();
        let mut lines = utf8(F, bytes)?.lines().enumerate();
        while let Some((i, line)) = lines.next() {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut t = line.split_whitespace();
            let id: u32 = field(F, n, "image id", t.next())?;
            let mut rotation = [0.0; 4];
            for (k, q) in rotation.iter_mut().enumerate() {
                *q = field(F, n, ["QW", "QX", "QY", "QZ"][k], t.next())?;
            }
            let mut translation = [0.0; 3];
            for (k, v) in translation.iter_mut().enumerate() {
                *v = field(F, n, ["TX", "TY", "TZ"][k], t.next())?;
            }
            let camera_id: u32 = field(F, n, "camera id", t.next())?;
            // Names may contain spaces; everything after the camera id.
            let rest: Vec<&str> = t.collect();
            if rest.is_empty() {
                return Err(err(F, n, "missing image name"));
            }
            let name = rest.join(" ");
            // Second line holds 2D observations, which are not needed.
            lines.next();
            out.push(PosedImage {
                id,
                name,
                camera_id,
                rotation,
                translation,
            });
        }
        Ok(out)
    }

    pub fn points(bytes: &[u8]) -> Result<Vec<SparsePoint>, ColmapError> {
        const F: &str = "points3D.txt";
        let mut out = Vec::new();
        for (i, line) in utf8(F, bytes)?.lines().enumerate() {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut t = line.split_whitespace();
            let id: u64 = field(F, n, "point id", t.next())?;
            let mut xyz = [0.0; 3];
            for (k, v) in xyz.iter_mut().enumerate() {
                *v = field(F, n, ["X", "Y", "Z"][k], t.next())?;
            }
            let mut rgb = [0u8; 3];
            for (k, v) in rgb.iter_mut().enumerate() {
                *v = field(F, n, ["R", "G", "B"][k], t.next())?;
            }
            let _error: f64 = field(F, n, "error", t.next())?;
            out.push(SparsePoint { id, xyz, rgb });
        }
        Ok(out)
    }

    pub fn write_cameras(model: &SparseModel) -> String {
        let mut s = String::from("# Camera list with one line of data per camera:\n");
        s.push_str("#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
        let _ = writeln!(s, "# Number of cameras: {}", model.cameras.len());
        for (id, cam) in &model.cameras {
            let _ = write!(s, "{id} {} {} {}", cam.model.name(), cam.width, cam.height);
            for p in &cam.params {
                let _ = write!(s, " {p:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_images(model: &SparseModel) -> String {
        let mut s = String::from("# Image list with two lines of data per image:\n");
        s.push_str("#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n");
        s.push_str("#   POINTS2D[] as (X, Y, POINT3D_ID)\n");
        let _ = writeln!(s, "# Number of images: {}", model.images.len());
        for img in &model.images {
            let [qw, qx, qy, qz] = img.rotation;
            let [tx, ty, tz] = img.translation;
            let _ = writeln!(
                s,
                "{} {qw:?} {qx:?} {qy:?} {qz:?} {tx:?} {ty:?} {tz:?} {} {}",
                img.id, img.camera_id, img.name
            );
            s.push('\n');
        }
        s
    }

    pub fn write_points(model: &SparseModel) -> String {
        let mut s = String::from("# 3D point list with one line of data per point:\n");
        s.push_str("#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n");
        let _ = writeln!(s, "# Number of points: {}", model.points.len());
        for p in &model.points {
            let [x, y, z] = p.xyz;
            let [r, g, b] = p.rgb;
            let _ = writeln!(s, "{} {x:?} {y:?} {z:?} {r} {g} {b} 0.0", p.id);
        }
        s
    }
}

mod binary {
    use super::*;

    struct Cursor<'a> {
        file: &'static str,
        bytes: &'a [u8],
        pos: usize,
    }

    impl<'a> Cursor<'a> {
        fn new(file: &'static str, bytes: &'a [u8]) -> Self {
            Self {
                file,
                bytes,
                pos: 0,
            }
        }

        fn remaining(&self) -> usize {
            self.bytes.len() - self.pos
        }

        fn take(&mut self, n: usize) -> Result<&'a [u8], ColmapError> {
            if self.remaining() < n {
                return Err(ColmapError::Truncated {
                    file: self.file.into(),
                    offset: self.pos,
                    needed: n - self.remaining(),
                });
            }
            let s = &self.bytes[self.pos..self.pos + n];
            self.pos += n;
            Ok(s)
        }

        fn skip(&mut self, n: u64) -> Result<(), ColmapError> {
            let n = usize::try_from(n).unwrap_or(usize::MAX);
            self.take(n).map(|_| ())
        }

        fn u8(&mut self) -> Result<u8, ColmapError> {
            Ok(self.take(1)?[0])
        }

        fn i32(&mut self) -> Result<i32, ColmapError> {
            Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }

        fn u32(&mut self) -> Result<u32, ColmapError> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }

        fn u64(&mut self) -> Result<u64, ColmapError> {
            Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }

        fn f64(&mut self) -> Result<f64, ColmapError> {
            Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }

        fn cstr(&mut self) -> Result<String, ColmapError> {
            let rest = &self.bytes[self.pos..];
            let len = rest.iter().position(|&b| b == 0).ok_or(ColmapError::Truncated {
                file: self.file.into(),
                offset: self.bytes.len(),
                needed: 1,
            })?;
            let s = String::from_utf8_lossy(&rest[..len]).into_owned();
            self.pos += len + 1;
            Ok(s)
        }

        /// Capacity hint that never exceeds what the remaining bytes could hold.
        fn capacity(&self, count: u64, min_record: usize) -> usize {
            (count.min((self.remaining() / min_record) as u64)) as usize
        }
    }

    fn dimension(v: u64, file: &str, what: &str) -> Result<u32, ColmapError> {
        u32::try_from(v).map_err(|_| ColmapError::Parse {
            file: file.into(),
            line: 0,
            message: format!("{what} {v} out of range"),
        })
    }

    pub fn cameras(bytes: &[u8]) -> Result<BTreeMap<u32, SparseCamera>, ColmapError> {
        let mut c = Cursor::new("cameras.bin", bytes);
        let count = c.u64()?;
        let mut out = BTreeMap::new();
        for _ in 0..count {
            let id = c.u32()?;
            let model_id = c.i32()?;
            let model = CameraModel::from_id(model_id)
                .ok_or_else(|| ColmapError::UnsupportedModel(format!("id {model_id}")))?;
            let width = dimension(c.u64()?, c.file, "width")?;
            let height = dimension(c.u64()?, c.file, "height")?;
            let params = (0..model.param_count())
                .map(|_| c.f64())
                .collect::<Result<Vec<_>, _>>()?;
            out.insert(
                id,
                SparseCamera {
                    model,
                    width,
                    height,
                    params,
                },
            );
        }
        Ok(out)
    }

    pub fn images(bytes: &[u8]) -> Result<Vec<PosedImage>, ColmapError> {
        let mut c = Cursor::new("images.bin", bytes);
        let count = c.u64()?;
        let mut out = Vec::with_capacity(c.capacity(count, 4 + 56 + 4 + 1 + 8));
        for _ in 0..count {
            let id = c.u32()?;
            let mut rotation = [0.0; 4];
            for q in &mut rotation {
                *q = c.f64()?;
            }
            let mut translation = [0.0; 3];
            for t in &mut translation {
                *t = c.f64()?;
            }
            let camera_id = c.u32()?;
            let name = c.cstr()?;
            let observations = c.u64()?;
            c.skip(observations.saturating_mul(24))?;
            out.push(PosedImage {
                id,
                name,
                camera_id,
                rotation,
                translation,
            });
        }
        Ok(out)
    }

    pub fn points(bytes: &[u8]) -> Result<Vec<SparsePoint>, ColmapError> {
        let mut c = Cursor::new("points3D.bin", bytes);
        let count = c.u64()?;
        let mut out = Vec::with_capacity(c.capacity(count, 8 + 24 + 3 + 8 + 8));
        for _ in 0..count {
            let id = c.u64()?;
            let xyz = [c.f64()?, c.f64()?, c.f64()?];
            let rgb = [c.u8()?, c.u8()?, c.u8()?];
            let _error = c.f64()?;
            let track = c.u64()?;
            c.skip(track.saturating_mul(8))?;
            out.push(SparsePoint { id, xyz, rgb });
        }
        Ok(out)
    }

    pub fn write_cameras(model: &SparseModel) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&(model.cameras.len() as u64).to_le_bytes());
        for (id, cam) in &model.cameras {
            b.extend_from_slice(&id.to_le_bytes());
            b.extend_from_slice(&cam.model.id().to_le_bytes());
            b.extend_from_slice(&u64::from(cam.width).to_le_bytes());
            b.extend_from_slice(&u64::from(cam.height).to_le_bytes());
            for p in &cam.params {
                b.extend_from_slice(&p.to_le_bytes());
            }
        }
        b
    }

    pub fn write_images(model: &SparseModel) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&(model.images.len() as u64).to_le_bytes());
        for img in &model.images {
            b.extend_from_slice(&img.id.to_le_bytes());
            for v in img.rotation.iter().chain(&img.translation) {
                b.extend_from_slice(&v.to_le_bytes());
            }
            b.extend_from_slice(&img.camera_id.to_le_bytes());
            b.extend_from_slice(img.name.as_bytes());
            b.push(0);
            b.extend_from_slice(&0u64.to_le_bytes());
        }
        b
    }

    pub fn write_points(model: &SparseModel) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&(model.points.len() as u64).to_le_bytes());
        for p in &model.points {
            b.extend_from_slice(&p.id.to_le_bytes());
            for v in &p.xyz {
                b.extend_from_slice(&v.to_le_bytes());
            }
            b.extend_from_slice(&p.rgb);
            b.extend_from_slice(&0f64.to_le_bytes());
            b.extend_from_slice(&0u64.to_le_bytes());
        }
        b
    }
}
