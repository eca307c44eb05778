//! Binary little-endian PLY storage in the layout third-party splat viewers
//! expect: positions, zeroed normals, `f_dc_*`/`f_rest_*` SH coefficients
//! (channel-major rest block), logit opacity, log scales, w-first rotation.
//!
//! PLY carries no view provenance, so scenes read back get synthesized
//! single-view metadata (`num_views = 1`, `view_shape = (1, N)`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::math::{logit, sigmoid, Vec3};
use crate::scene::{validate_scene, CanonicalScene, GaussianPrimitive};

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a PLY file (bad magic)")]
    BadMagic,
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("unsupported format '{0}', expected binary_little_endian")]
    UnsupportedFormat(String),
    #[error("missing required property '{0}'")]
    MissingProperty(String),
    #[error("f_rest count {0} does not correspond to an SH degree <= 3")]
    UnknownShDegree(usize),
    #[error("payload truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("refusing to write invalid scene:\n{0}")]
    InvalidScene(String),
    #[error("stored value produced invalid primitive at index {index}: {source}")]
    BadPrimitive {
        index: usize,
        source: crate::scene::SceneError,
    },
}

const BASE_PROPS: [&str; 9] = [
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
];
const TAIL_PROPS: [&str; 8] = [
    "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
];

/// Property names for a given SH degree, in on-disk order.
pub fn schema_property_names(sh_degree: usize) -> Vec<String> {
    let rest = 3 * ((sh_degree + 1) * (sh_degree + 1) - 1);
    let mut names: Vec<String> = BASE_PROPS.iter().map(|s| s.to_string()).collect();
    names.extend((0..rest).map(|i| format!("f_rest_{i}")));
    names.extend(TAIL_PROPS.iter().map(|s| s.to_string()));
    names
}

pub fn write_scene(scene: &CanonicalScene, path: impl AsRef<Path>) -> Result<(), PlyError> {
    let report = validate_scene(scene);
    if !report.is_pass() {
        return Err(PlyError::InvalidScene(report.to_string()));
    }

    let mut out = BufWriter::new(File::create(path)?);
    let names = schema_property_names(scene.sh_degree);
    write!(out, "ply\nformat binary_little_endian 1.0\nelement vertex {}\n", scene.len())?;
    for name in &names {
        writeln!(out, "property float {name}")?;
    }
    write!(out, "end_header\n")?;

    let n_coeffs = (scene.sh_degree + 1) * (scene.sh_degree + 1);
    let put = |out: &mut BufWriter<File>, v: f64| out.write_all(&(v as f32).to_le_bytes());
    for p in &scene.primitives {
        for v in [p.center.x, p.center.y, p.center.z, 0.0, 0.0, 0.0] {
            put(&mut out, v)?;
        }
        for ch in 0..3 {
            put(&mut out, p.sh[ch * n_coeffs])?;
        }
        for ch in 0..3 {
            for i in 1..n_coeffs {
                put(&mut out, p.sh[ch * n_coeffs + i])?;
            }
        }
        put(&mut out, logit(p.opacity))?;
        for s in [p.scale.x, p.scale.y, p.scale.z] {
            put(&mut out, s.ln())?;
        }
        for q in p.rotation {
            put(&mut out, q)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_scene(path: impl AsRef<Path>) -> Result<CanonicalScene, PlyError> {
    let mut reader = BufReader::new(File::open(path)?);
    let header = parse_header(&mut reader)?;

    let col = |name: &str| -> Result<usize, PlyError> {
        header
            .properties
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| PlyError::MissingProperty(name.to_string()))
    };

    let rest_count = header
        .properties
        .iter()
        .filter(|p| p.starts_with("f_rest_"))
        .count();
    let per_channel_rest = rest_count / 3;
    let sh_degree = (0..=crate::math::sh::MAX_DEGREE)
        .find(|l| (l + 1) * (l + 1) - 1 == per_channel_rest && per_channel_rest * 3 == rest_count)
        .ok_or(PlyError::UnknownShDegree(rest_count))?;
    let n_coeffs = (sh_degree + 1) * (sh_degree + 1);

    let xyz = [col("x")?, col("y")?, col("z")?];
    let dc = [col("f_dc_0")?, col("f_dc_1")?, col("f_dc_2")?];
    let mut rest_cols = Vec::with_capacity(rest_count);
    for i in 0..rest_count {
        rest_cols.push(col(&format!("f_rest_{i}"))?);
    }
    let opacity_col = col("opacity")?;
    let scale_cols = [col("scale_0")?, col("scale_1")?, col("scale_2")?];
    let rot_cols = [col("rot_0")?, col("rot_1")?, col("rot_2")?, col("rot_3")?];

    let stride = header.properties.len();
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let expected = header.count * stride * 4;
    if payload.len() < expected {
        return Err(PlyError::Truncated { expected, got: payload.len() });
    }

    let at = |row: usize, c: usize| -> f64 {
        let off = (row * stride + c) * 4;
        f32::from_le_bytes(payload[off..off + 4].try_into().unwrap()) as f64
    };

    let mut primitives = Vec::with_capacity(header.count);
    for row in 0..header.count {
        let center = Vec3::new(at(row, xyz[0]), at(row, xyz[1]), at(row, xyz[2]));
        let mut sh = vec![0.0; 3 * n_coeffs];
        for ch in 0..3 {
            sh[ch * n_coeffs] = at(row, dc[ch]);
            for i in 1..n_coeffs {
                sh[ch * n_coeffs + i] = at(row, rest_cols[ch * (n_coeffs - 1) + i - 1]);
            }
        }
        let opacity = sigmoid(at(row, opacity_col));
        let scale = Vec3::new(
            at(row, scale_cols[0]).exp(),
            at(row, scale_cols[1]).exp(),
            at(row, scale_cols[2]).exp(),
        );
        let mut rotation = [
            at(row, rot_cols[0]),
            at(row, rot_cols[1]),
            at(row, rot_cols[2]),
            at(row, rot_cols[3]),
        ];
        // Third-party files may carry slightly off-unit quaternions; only
        // renormalize when the stored value would fail validation.
        let norm = rotation.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            rotation = crate::math::quat::normalize_wpos(rotation)
                .ok_or(PlyError::BadPrimitive {
                    index: row,
                    source: crate::scene::SceneError::QuaternionNorm(norm),
                })?;
        }
        let prim = GaussianPrimitive::new(center, opacity, rotation, scale, sh)
            .map_err(|source| PlyError::BadPrimitive { index: row, source })?;
        primitives.push(prim);
    }

    Ok(CanonicalScene::from_primitives(primitives, sh_degree))
}

struct Header {
    count: usize,
    properties: Vec<String>,
}

fn parse_header(reader: &mut impl BufRead) -> Result<Header, PlyError> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(PlyError::BadMagic);
    }

    let mut count = None;
    let mut properties = Vec::new();
    let mut in_vertex_element = false;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(PlyError::BadHeader("missing end_header".into()));
        }
        let trimmed = line.trim_end();
        let mut parts = trimmed.split_whitespace();
        match parts.next() {
            Some("comment") => {}
            Some("format") => {
                let fmt = parts.next().unwrap_or("");
                if fmt != "binary_little_endian" {
                    return Err(PlyError::UnsupportedFormat(fmt.to_string()));
                }
            }
            Some("element") => {
                let name = parts.next().unwrap_or("");
                in_vertex_element = name == "vertex";
                if in_vertex_element {
                    let n = parts
                        .next()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| PlyError::BadHeader(format!("bad element line '{trimmed}'")))?;
                    count = Some(n);
                }
            }
            Some("property") => {
                if in_vertex_element {
                    let ty = parts.next().unwrap_or("");
                    if ty != "float" && ty != "float32" {
                        return Err(PlyError::BadHeader(format!(
                            "unsupported property type '{ty}' (only float32 supported)"
                        )));
                    }
                    let name = parts
                        .next()
                        .ok_or_else(|| PlyError::BadHeader(format!("bad property line '{trimmed}'")))?;
                    properties.push(name.to_string());
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(PlyError::BadHeader(format!("unexpected header line '{other}'")));
            }
            None => {}
        }
    }
    let count = count.ok_or_else(|| PlyError::BadHeader("no vertex element".into()))?;
    if properties.is_empty() {
        return Err(PlyError::BadHeader("vertex element has no properties".into()));
    }
    Ok(Header { count, properties })
}
