//! Binary little-endian PLY in the layout written by 3DGS trainers.
//!
//! Opacity is stored as a logit and scale as a natural log; both are
//! activated on load and inverted on save. Normals are read and dropped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::{Gaussian, GaussianCloud, SH_COEFFS};
use crate::error::{Error, Result};

const REST_PER_CHANNEL: usize = SH_COEFFS - 1;

/// Property names of the vertex element in write order.
pub const PLY_FLOAT_PROPERTIES: [&str; 62] = [
        "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "f_rest_0", "f_rest_1",
        "f_rest_2", "f_rest_3", "f_rest_4", "f_rest_5", "f_rest_6", "f_rest_7", "f_rest_8",
        "f_rest_9", "f_rest_10", "f_rest_11", "f_rest_12", "f_rest_13", "f_rest_14", "f_rest_15",
        "f_rest_16", "f_rest_17", "f_rest_18", "f_rest_19", "f_rest_20", "f_rest_21", "f_rest_22",
        "f_rest_23", "f_rest_24", "f_rest_25", "f_rest_26", "f_rest_27", "f_rest_28", "f_rest_29",
        "f_rest_30", "f_rest_31", "f_rest_32", "f_rest_33", "f_rest_34", "f_rest_35", "f_rest_36",
        "f_rest_37", "f_rest_38", "f_rest_39", "f_rest_40", "f_rest_41", "f_rest_42", "f_rest_43",
        "f_rest_44", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",
    "rot_3",
];

const OPACITY_FLOOR: f64 = 1e-6;

/// What `save_splat_ply` had to adjust while encoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SaveReport {
    pub splats_written: usize,
    /// Splats whose opacity was exactly 0 or 1 and got clamped before the logit.
    pub opacity_clamped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

struct Header {
    vertex_count: usize,
    properties: Vec<(String, ScalarType)>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidAsset(msg.into())
}

fn read_header<R: BufRead>(reader: &mut R) -> Result<Header> {
    let mut line = String::new();
    let mut next_line = |reader: &mut R| -> Result<String> {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| invalid(format!("reading PLY header: {e}")))?;
        if n == 0 {
            return Err(invalid("PLY header ended before end_header"));
        }
        Ok(line.trim_end().to_owned())
    };

    if next_line(reader)? != "ply" {
        return Err(invalid("missing 'ply' magic"));
    }
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut properties = Vec::new();
    loop {
        let l = next_line(reader)?;
        let mut tok = l.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("binary_little_endian") {
                    return Err(invalid("only binary_little_endian PLY is supported"));
                }
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().unwrap_or("");
                if vertex_count.is_none() {
                    if name != "vertex" {
                        return Err(invalid(format!(
                            "expected element 'vertex', found '{name}'"
                        )));
                    }
                    let count = tok
                        .next()
                        .and_then(|c| c.parse().ok())
                        .ok_or_else(|| invalid("bad vertex count"))?;
                    vertex_count = Some(count);
                    in_vertex = true;
                } else {
                    // Later elements (faces and the like) are not read.
                    in_vertex = false;
                }
            }
            Some("property") if in_vertex => {
                let ty = tok.next().unwrap_or("");
                if ty == "list" {
                    return Err(invalid("list properties on the vertex element are not supported"));
                }
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| invalid(format!("unknown property type '{ty}'")))?;
                let name = tok.next().ok_or_else(|| invalid("property without a name"))?;
                properties.push((name.to_owned(), ty));
            }
            Some("property") => {}
            Some("end_header") => break,
            Some(other) => return Err(invalid(format!("unexpected header line '{other}'"))),
        }
    }
    let vertex_count = vertex_count.ok_or_else(|| invalid("no vertex element"))?;
    Ok(Header {
        vertex_count,
        properties,
    })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Loads a trained-splat PLY file, applying the sigmoid/exp activations.
///
/// Quaternions further than 1e-6 from unit norm are normalized; a zero
/// quaternion is rejected.
pub fn load_splat_ply(path: impl AsRef<Path>) -> Result<GaussianCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let header = read_header(&mut reader)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;

    let mut offsets = Vec::with_capacity(header.properties.len());
    let mut stride = 0;
    for (_, ty) in &header.properties {
        offsets.push(stride);
        stride += ty.size();
    }
    let slot = |name: &str| -> Result<usize> {
        let idx = header
            .properties
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| invalid(format!("{}: missing property '{name}'", path.display())))?;
        if header.properties[idx].1 != ScalarType::F32 {
            return Err(invalid(format!(
                "{}: property '{name}' must be float",
                path.display()
            )));
        }
        Ok(offsets[idx])
    };
    // Normals are optional and ignored.
    let wanted: Vec<(&str, usize)> = PLY_FLOAT_PROPERTIES
        .iter()
        .filter(|n| !matches!(**n, "nx" | "ny" | "nz"))
        .map(|&n| slot(n).map(|off| (n, off)))
        .collect::<Result<_>>()?;

    let mut row = vec![0u8; stride];
    let mut splats = Vec::with_capacity(header.vertex_count);
    let mut values = [0f64; 59];
    for i in 0..header.vertex_count {
        reader.read_exact(&mut row).map_err(|e| {
            invalid(format!(
                "{}: truncated vertex data at splat {i}: {e}",
                path.display()
            ))
        })?;
        for (v, (_, off)) in values.iter_mut().zip(&wanted) {
            let bytes = [row[*off], row[off + 1], row[off + 2], row[off + 3]];
            *v = f32::from_le_bytes(bytes) as f64;
        }
        let g = decode(&values).map_err(|name| {
            invalid(format!(
                "{}: splat {i}: non-finite or invalid value for '{name}'",
                path.display()
            ))
        })?;
        splats.push(g);
    }
    let mut cloud = GaussianCloud::new(splats, 0);
    cloud.source_path = Some(path.display().to_string());
    Ok(cloud)
}

/// `values` follows `PLY_FLOAT_PROPERTIES` with the normals removed.
fn decode(values: &[f64; 59]) -> std::result::Result<Gaussian, &'static str> {
    let finite = |v: f64, name: &'static str| if v.is_finite() { Ok(v) } else { Err(name) };
    let mean = Vector3::new(
        finite(values[0], "x")?,
        finite(values[1], "y")?,
        finite(values[2], "z")?,
    );
    let mut sh = [[0.0; SH_COEFFS]; 3];
    for c in 0..3 {
        sh[c][0] = finite(values[3 + c], "f_dc")?;
        for j in 0..REST_PER_CHANNEL {
            sh[c][1 + j] = finite(values[6 + REST_PER_CHANNEL * c + j], "f_rest")?;
        }
    }
    let opacity = sigmoid(finite(values[51], "opacity")?);
    let scale_names = ["scale_0", "scale_1", "scale_2"];
    let mut scale = Vector3::zeros();
    for k in 0..3 {
        let s = finite(values[52 + k], scale_names[k])?.exp();
        if !(s.is_finite() && s > 0.0) {
            return Err(scale_names[k]);
        }
        scale[k] = s;
    }
    let q = Quaternion::new(
        finite(values[55], "rot_0")?,
        finite(values[56], "rot_1")?,
        finite(values[57], "rot_2")?,
        finite(values[58], "rot_3")?,
    );
    let n = q.norm();
    if n == 0.0 {
        return Err("rot_0..rot_3 (zero quaternion)");
    }
    let orientation = if (n - 1.0).abs() <= 1e-6 {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::new_unchecked(q / n)
    };
    Ok(Gaussian {
        mean,
        scale,
        orientation,
        opacity,
        sh,
    })
}

/// Writes `cloud` in the layout `load_splat_ply` reads.
pub fn save_splat_ply(cloud: &GaussianCloud, path: impl AsRef<Path>) -> Result<SaveReport> {
    let path = path.as_ref();
    cloud.check()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n",
        cloud.len()
    );
    for name in PLY_FLOAT_PROPERTIES {
        header.push_str("property float ");
        header.push_str(name);
        header.push('\n');
    }
    header.push_str("end_header\n");

    let mut report = SaveReport {
        splats_written: cloud.len(),
        opacity_clamped: 0,
    };
    let mut buf = Vec::with_capacity(header.len() + cloud.len() * 62 * 4);
    buf.extend_from_slice(header.as_bytes());
    let mut put = |v: f64| buf.extend_from_slice(&(v as f32).to_le_bytes());
    for g in &cloud.splats {
        for v in g.mean.iter() {
            put(*v);
        }
        for _ in 0..3 {
            put(0.0);
        }
        for c in 0..3 {
            put(g.sh[c][0]);
        }
        for c in 0..3 {
            for j in 0..REST_PER_CHANNEL {
                put(g.sh[c][1 + j]);
            }
        }
        let mut p = g.opacity;
        if p <= 0.0 || p >= 1.0 {
            p = p.clamp(OPACITY_FLOOR, 1.0 - OPACITY_FLOOR);
            report.opacity_clamped += 1;
        }
        put(logit(p));
        for s in g.scale.iter() {
            put(s.ln());
        }
        let q = g.orientation.quaternion();
        put(q.w);
        put(q.i);
        put(q.j);
        put(q.k);
    }
    w.write_all(&buf)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;
    if report.opacity_clamped > 0 {
        log::warn!(
            "{}: clamped {} opacities of exactly 0 or 1",
            path.display(),
            report.opacity_clamped
        );
    }
    Ok(report)
}
