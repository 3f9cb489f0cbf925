//! Viewer-compatible 3DGS PLY export/import.
//!
//! Binary little-endian, one vertex per Gaussian with the de-facto field
//! convention: `x y z nx ny nz f_dc_0..2 opacity scale_0..2 rot_0..3`, where
//! `f_dc = (c - 0.5) / C0` (zeroth spherical harmonic, `C0 = 0.28209479177`),
//! `opacity = logit(α)`, `scale = log(s)`, `rot` = (w,x,y,z) quaternion.

use std::io::Write;
use std::path::Path;

use crate::error::{DdError, Result};
use crate::gaussians::{GaussianSet, OPACITY_EPS, SCALE_LOG_MAX, SCALE_LOG_MIN};
use crate::scalar::{s, Scalar};

pub const SH_C0: f64 = 0.28209479177;

const PROPERTIES: [&str; 17] = [
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0",
    "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
];

pub fn export_ply<T: Scalar>(g: &GaussianSet<T>, path: &Path) -> Result<()> {
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", g.len()));
    for p in PROPERTIES {
        header.push_str(&format!("property float {p}\n"));
    }
    header.push_str("end_header\n");

    let mut bytes = header.into_bytes();
    for i in 0..g.len() {
        let pos = g.position(i);
        let sc = g.scale(i);
        let rot = g.rotation(i);
        let col = g.color(i);
        let alpha = g.opacity(i).dbl();
        let mut row = [0f32; 17];
        for c in 0..3 {
            row[c] = pos[c].dbl() as f32;
            row[3 + c] = 0.0; // normals unused
            row[6 + c] = ((col[c].dbl() - 0.5) / SH_C0) as f32;
            row[10 + c] = sc[c].dbl().ln() as f32;
        }
        row[9] = (alpha / (1.0 - alpha)).ln() as f32;
        for c in 0..4 {
            row[13 + c] = rot[c].dbl() as f32;
        }
        for v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Read a 3DGS PLY back. Properties may appear in any order; extra float
/// properties are ignored. Values are mapped back through the inverse
/// transforms and clamped into the attribute ranges.
pub fn import_ply<T: Scalar>(path: &Path) -> Result<GaussianSet<T>> {
    let bytes = std::fs::read(path)?;
    let header_end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| DdError::Format("ply: no end_header".into()))?
        + 11;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| DdError::Format("ply: non-utf8 header".into()))?;

    let mut count = 0usize;
    let mut props: Vec<String> = Vec::new();
    let mut binary_le = false;
    for line in header.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("format") => {
                binary_le = line.contains("binary_little_endian");
            }
            Some("element") => {
                if it.next() == Some("vertex") {
                    count = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| DdError::Format("ply: bad vertex count".into()))?;
                }
            }
            Some("property") => {
                let ty = it.next().unwrap_or("");
                if ty != "float" {
                    return Err(DdError::Format(format!("ply: unsupported property type {ty}")));
                }
                props.push(it.next().unwrap_or("").to_string());
            }
            _ => {}
        }
    }
    if !binary_le {
        return Err(DdError::Format("ply: expected binary_little_endian".into()));
    }
    let col = |name: &str| -> Result<usize> {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| DdError::Format(format!("ply: missing property {name}")))
    };
    let stride = props.len() * 4;
    let body = &bytes[header_end..];
    if body.len() < count * stride {
        return Err(DdError::Format(format!(
            "ply: body too short: {} < {}",
            body.len(),
            count * stride
        )));
    }
    let read_f = |row: usize, c: usize| -> f64 {
        let off = row * stride + c * 4;
        f32::from_le_bytes([body[off], body[off + 1], body[off + 2], body[off + 3]]) as f64
    };

    let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);
    let cdc = [col("f_dc_0")?, col("f_dc_1")?, col("f_dc_2")?];
    let cop = col("opacity")?;
    let csc = [col("scale_0")?, col("scale_1")?, col("scale_2")?];
    let crt = [col("rot_0")?, col("rot_1")?, col("rot_2")?, col("rot_3")?];

    let mut positions = Vec::with_capacity(count * 3);
    let mut scales = Vec::with_capacity(count * 3);
    let mut rotations = Vec::with_capacity(count * 4);
    let mut colors = Vec::with_capacity(count * 3);
    let mut opacities = Vec::with_capacity(count);
    for i in 0..count {
        positions.push(s::<T>(read_f(i, cx)));
        positions.push(s::<T>(read_f(i, cy)));
        positions.push(s::<T>(read_f(i, cz)));
        for c in 0..3 {
            let log_s = read_f(i, csc[c]).clamp(SCALE_LOG_MIN, SCALE_LOG_MAX);
            scales.push(s::<T>(log_s.exp()));
            colors.push(s::<T>((0.5 + SH_C0 * read_f(i, cdc[c])).clamp(0.0, 1.0)));
        }
        let q = [
            read_f(i, crt[0]),
            read_f(i, crt[1]),
            read_f(i, crt[2]),
            read_f(i, crt[3]),
        ];
        let n = (q.iter().map(|v| v * v).sum::<f64>()).sqrt().max(1e-12);
        for v in q {
            rotations.push(s::<T>(v / n));
        }
        let logit = read_f(i, cop);
        let alpha = (1.0 / (1.0 + (-logit).exp())).clamp(OPACITY_EPS, 1.0 - OPACITY_EPS);
        opacities.push(s::<T>(alpha));
    }
    GaussianSet::new(positions, scales, rotations, colors, opacities)
}
