//! Splat PLY reader and writer.
//!
//! Each vertex carries 62 float32 properties in this order:
//! `x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3`.
//! Normals are written as zero. `f_rest` is channel-major (15 coefficients of
//! red, then green, then blue). Opacity and scale are stored pre-activation
//! and the rotation is (w, x, y, z).
//!
//! The writer always emits `binary_little_endian`; the reader also accepts
//! ASCII bodies, extra properties, and extra scalar-only elements. Values are
//! stored as float32, so writing rounds each parameter to the nearest f32.

use std::fmt::Write as _;
use std::sync::LazyLock;

use thiserror::Error;

use crate::gaussian::{Splat, SplatCloud};
use crate::sh::{MAX_SH_DEGREE, SH_COEFFS};

pub const PROPERTIES_PER_SPLAT: usize = 62;
const REST_PER_CHANNEL: usize = SH_COEFFS - 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlyError {
    #[error("malformed PLY at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("PLY is missing required property `{0}`")]
    MissingProperty(String),
    #[error("PLY body truncated at byte {offset}: expected {expected} {unit}, found {actual}")]
    Truncated {
        /// End of the input, where data ran out.
        offset: usize,
        expected: u64,
        actual: u64,
        unit: &'static str,
    },
    #[error("unsupported PLY feature at byte {offset}: {message}")]
    Unsupported { offset: usize, message: String },
}

/// Property names in file order.
pub static SCHEMA: LazyLock<Vec<String>> = LazyLock::new(|| {
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..3).map(|i| format!("f_dc_{i}")));
    names.extend((0..3 * REST_PER_CHANNEL).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
});

fn splat_to_values(s: &Splat) -> [f32; PROPERTIES_PER_SPLAT] {
    let mut v = [0f32; PROPERTIES_PER_SPLAT];
    for i in 0..3 {
        v[i] = s.position[i] as f32;
        // normals stay zero
        v[6 + i] = s.sh[i][0] as f32;
    }
    for ch in 0..3 {
        for k in 1..SH_COEFFS {
            v[9 + ch * REST_PER_CHANNEL + k - 1] = s.sh[ch][k] as f32;
        }
    }
    v[54] = s.opacity_logit as f32;
    for i in 0..3 {
        v[55 + i] = s.log_scale[i] as f32;
    }
    for i in 0..4 {
        v[58 + i] = s.rotation[i] as f32;
    }
    v
}

fn values_to_splat(v: &[f64; PROPERTIES_PER_SPLAT]) -> Splat {
    let mut s = Splat::default();
    for i in 0..3 {
        s.position[i] = v[i];
        s.sh[i][0] = v[6 + i];
        s.log_scale[i] = v[55 + i];
    }
    for ch in 0..3 {
        for k in 1..SH_COEFFS {
            s.sh[ch][k] = v[9 + ch * REST_PER_CHANNEL + k - 1];
        }
    }
    s.opacity_logit = v[54];
    for i in 0..4 {
        s.rotation[i] = v[58 + i];
    }
    s
}

fn header(format: &str, cloud: &SplatCloud) -> String {
    let mut h = String::with_capacity(1200);
    h.push_str("ply\n");
    let _ = writeln!(h, "format {format} 1.0");
    let _ = writeln!(h, "comment sh_degree {}", cloud.active_sh_degree);
    let _ = writeln!(h, "element vertex {}", cloud.len());
    for name in SCHEMA.iter() {
        let _ = writeln!(h, "property float {name}");
    }
    h.push_str("end_header\n");
    h
}

/// Serializes a cloud as binary little-endian PLY.
pub fn write_splat_ply(cloud: &SplatCloud) -> Vec<u8> {
    let head = header("binary_little_endian", cloud);
    let mut out = Vec::with_capacity(head.len() + cloud.len() * PROPERTIES_PER_SPLAT * 4);
    out.extend_from_slice(head.as_bytes());
    for s in &cloud.splats {
        for v in splat_to_values(s) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Serializes a cloud as ASCII PLY; float text round-trips exactly.
pub fn write_splat_ply_ascii(cloud: &SplatCloud) -> Vec<u8> {
    let mut out = header("ascii", cloud);
    for s in &cloud.splats {
        let values = splat_to_values(s);
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out.into_bytes()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F64 => f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]),
        }
    }

    fn parse_text(self, token: &str) -> Option<f64> {
        match self {
            Self::F32 => token.parse::<f32>().ok().map(f64::from),
            Self::F64 => token.parse::<f64>().ok(),
            Self::I8 => token.parse::<i8>().ok().map(f64::from),
            Self::U8 => token.parse::<u8>().ok().map(f64::from),
            Self::I16 => token.parse::<i16>().ok().map(f64::from),
            Self::U16 => token.parse::<u16>().ok().map(f64::from),
            Self::I32 => token.parse::<i32>().ok().map(f64::from),
            Self::U32 => token.parse::<u32>().ok().map(f64::from),
        }
    }
}

#[derive(Debug)]
struct Element {
    name: String,
    count: u64,
    props: Vec<(String, Scalar)>,
}

impl Element {
    fn stride(&self) -> usize {
        self.props.iter().map(|(_, t)| t.size()).sum()
    }
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    sh_degree: Option<u8>,
    body_offset: usize,
}

fn parse_err(offset: usize, message: impl Into<String>) -> PlyError {
    PlyError::Parse {
        offset,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let mut pos = 0usize;
    let next_line = |pos: &mut usize| -> Option<(usize, &[u8])> {
        if *pos >= bytes.len() {
            return None;
        }
        let start = *pos;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |i| start + i);
        *pos = (end + 1).min(bytes.len());
        let mut line = &bytes[start..end];
        if line.last() == Some(&b'\r') {
            line = &line[..line.len() - 1];
        }
        Some((start, line))
    };

    match next_line(&mut pos) {
        Some((_, b"ply")) => {}
        _ => return Err(parse_err(0, "missing `ply` magic")),
    }

    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut sh_degree = None;
    loop {
        let Some((offset, raw)) = next_line(&mut pos) else {
            return Err(parse_err(bytes.len(), "header ended without `end_header`"));
        };
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_err(offset, "header line is not valid UTF-8"))?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("end_header") => break,
            Some("format") => {
                let kind = words.next();
                let version = words.next();
                format = Some(match (kind, version) {
                    (Some("ascii"), Some("1.0")) => Format::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => Format::BinaryLe,
                    (Some("binary_big_endian"), _) => {
                        return Err(PlyError::Unsupported {
                            offset,
                            message: "big-endian bodies are not supported".into(),
                        })
                    }
                    _ => return Err(parse_err(offset, format!("bad format line `{line}`"))),
                });
            }
            Some("comment") => {
                if let (Some("sh_degree"), Some(d)) = (words.next(), words.next()) {
                    if let Ok(d) = d.parse::<u8>() {
                        if d <= MAX_SH_DEGREE {
                            sh_degree = Some(d);
                        }
                    }
                }
            }
            Some("obj_info") | None => {}
            Some("element") => {
                let (Some(name), Some(count), None) = (words.next(), words.next(), words.next())
                else {
                    return Err(parse_err(offset, format!("bad element line `{line}`")));
                };
                let count = count
                    .parse::<u64>()
                    .map_err(|_| parse_err(offset, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let Some(element) = elements.last_mut() else {
                    return Err(parse_err(offset, "property before any element"));
                };
                let (Some(ty), Some(name), None) = (words.next(), words.next(), words.next())
                else {
                    if line.split_whitespace().nth(1) == Some("list") {
                        return Err(PlyError::Unsupported {
                            offset,
                            message: "list properties are not supported".into(),
                        });
                    }
                    return Err(parse_err(offset, format!("bad property line `{line}`")));
                };
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| parse_err(offset, format!("unknown property type `{ty}`")))?;
                element.props.push((name.to_string(), ty));
            }
            Some(other) => {
                return Err(parse_err(offset, format!("unknown header keyword `{other}`")))
            }
        }
    }
    let format = format.ok_or_else(|| parse_err(0, "header has no format line"))?;
    Ok(Header {
        format,
        elements,
        sh_degree,
        body_offset: pos,
    })
}

/// Parses a splat PLY file (binary little-endian or ASCII).
pub fn read_splat_ply(bytes: &[u8]) -> Result<SplatCloud, PlyError> {
    let header = parse_header(bytes)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(header.body_offset, "no `vertex` element"))?;
    let vertex = &header.elements[vertex_pos];

    let mut columns = [0usize; PROPERTIES_PER_SPLAT];
    for (slot, name) in columns.iter_mut().zip(SCHEMA.iter()) {
        *slot = vertex
            .props
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| PlyError::MissingProperty(name.clone()))?;
    }

    let body = &bytes[header.body_offset..];
    let at_end = |e| match e {
        PlyError::Truncated {
            expected,
            actual,
            unit,
            ..
        } => PlyError::Truncated {
            offset: bytes.len(),
            expected,
            actual,
            unit,
        },
        e => e,
    };
    let splats = match header.format {
        Format::BinaryLe => read_binary(body, &header.elements, vertex_pos, &columns).map_err(at_end)?,
        Format::Ascii => read_ascii(body, &header.elements, vertex_pos, &columns).map_err(at_end)?,
    };
    let degree = header.sh_degree.unwrap_or(MAX_SH_DEGREE);
    Ok(SplatCloud::new(splats, degree))
}

fn read_binary(
    body: &[u8],
    elements: &[Element],
    vertex_pos: usize,
    columns: &[usize; PROPERTIES_PER_SPLAT],
) -> Result<Vec<Splat>, PlyError> {
    let mut skip: u64 = 0;
    for e in &elements[..vertex_pos] {
        skip = e
            .count
            .checked_mul(e.stride() as u64)
            .and_then(|n| n.checked_add(skip))
            .unwrap_or(u64::MAX);
    }
    let vertex = &elements[vertex_pos];
    let stride = vertex.stride();
    let expected = vertex
        .count
        .checked_mul(stride as u64)
        .and_then(|n| n.checked_add(skip))
        .unwrap_or(u64::MAX);
    if (body.len() as u64) < expected {
        return Err(PlyError::Truncated {
            offset: 0,
            expected,
            actual: body.len() as u64,
            unit: "bytes",
        });
    }
    let mut offsets = Vec::with_capacity(vertex.props.len());
    let mut acc = 0;
    for (_, ty) in &vertex.props {
        offsets.push(acc);
        acc += ty.size();
    }
    let start = skip as usize;
    let count = vertex.count as usize;
    let mut splats = Vec::with_capacity(count);
    let mut values = [0f64; PROPERTIES_PER_SPLAT];
    for i in 0..count {
        let record = &body[start + i * stride..start + (i + 1) * stride];
        for (v, &col) in values.iter_mut().zip(columns) {
            let ty = vertex.props[col].1;
            *v = ty.read_le(&record[offsets[col]..]);
        }
        splats.push(values_to_splat(&values));
    }
    Ok(splats)
}

fn read_ascii(
    body: &[u8],
    elements: &[Element],
    vertex_pos: usize,
    columns: &[usize; PROPERTIES_PER_SPLAT],
) -> Result<Vec<Splat>, PlyError> {
    let text = std::str::from_utf8(body).map_err(|e| {
        parse_err(e.valid_up_to(), "ASCII body is not valid UTF-8")
    })?;
    let mut tokens = text.split_ascii_whitespace();
    let mut consumed: u64 = 0;
    let vertex = &elements[vertex_pos];
    let mut expected: u64 = 0;
    for e in &elements[..=vertex_pos] {
        expected = expected.saturating_add(e.count.saturating_mul(e.props.len() as u64));
    }
    let truncated = |consumed| PlyError::Truncated {
        offset: 0,
        expected,
        actual: consumed,
        unit: "values",
    };
    for e in &elements[..vertex_pos] {
        for _ in 0..e.count.saturating_mul(e.props.len() as u64) {
            tokens.next().ok_or_else(|| truncated(consumed))?;
            consumed += 1;
        }
    }
    let mut splats = Vec::new();
    let mut row = vec![0f64; vertex.props.len()];
    let mut values = [0f64; PROPERTIES_PER_SPLAT];
    for _ in 0..vertex.count {
        for (slot, (name, ty)) in row.iter_mut().zip(&vertex.props) {
            let token = tokens.next().ok_or_else(|| truncated(consumed))?;
            *slot = ty.parse_text(token).ok_or_else(|| {
                let offset = token.as_ptr() as usize - text.as_ptr() as usize;
                parse_err(
                    offset,
                    format!("cannot parse `{token}` as {ty:?} for property `{name}`"),
                )
            })?;
            consumed += 1;
        }
        for (v, &col) in values.iter_mut().zip(columns) {
            *v = row[col];
        }
        splats.push(values_to_splat(&values));
    }
    Ok(splats)
}
