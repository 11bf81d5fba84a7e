//! 3DGS PLY ingestion.
//!
//! Reads the vertex layout written by the reference 3DGS trainer and most
//! splat tools: `x y z`, `f_dc_0..2`, optional `f_rest_*`, `opacity`,
//! `scale_0..2`, `rot_0..3` (quaternion `w x y z`). Stored values are raw
//! (logit opacity, log scale) and pass through [`activate_parameters`].

use std::collections::HashMap;

use nalgebra::Vector3;

use super::{activate_parameters, deactivate_parameters, Gaussian, SplatCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLittleEndian,
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
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, ScalarType)>,
}

impl Element {
    fn stride(&self) -> usize {
        self.properties.iter().map(|(_, t)| t.size()).sum()
    }
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::Format("missing end_header".into()))?;
    let mut body_offset = end + END.len();
    if bytes.get(body_offset) == Some(&b'\r') {
        body_offset += 1;
    }
    if bytes.get(body_offset) == Some(&b'\n') {
        body_offset += 1;
    }
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format("header is not ASCII".into()))?;
    let mut lines = text.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(Error::Format("missing 'ply' magic".into()));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                encoding = Some(match tok.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLittleEndian,
                    other => {
                        return Err(Error::Format(format!("unsupported PLY format {other:?}")));
                    }
                });
            }
            Some("element") => {
                let name = tok.next().ok_or_else(|| Error::Format("element without name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Format(format!("element {name}: bad count")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::Format("property before any element".into()))?;
                let ty = tok.next().unwrap_or_default();
                if ty == "list" {
                    return Err(Error::Format(format!(
                        "list property in element {} is not supported",
                        element.name
                    )));
                }
                let ty = ScalarType::parse(ty).ok_or_else(|| Error::Format(format!("unknown property type {ty}")))?;
                let name = tok.next().ok_or_else(|| Error::Format("property without name".into()))?;
                element.properties.push((name.to_string(), ty));
            }
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(Error::Format(format!("unexpected header keyword {other}"))),
        }
    }
    Ok(Header {
        encoding: encoding.ok_or_else(|| Error::Format("missing format line".into()))?,
        elements,
        body_offset,
    })
}

/// Column indices of the splat attributes inside one vertex record.
struct Layout {
    mean: [usize; 3],
    dc: [usize; 3],
    rest: Vec<usize>,
    opacity: usize,
    scale: [usize; 3],
    rot: [usize; 4],
    degree: u8,
}

impl Layout {
    fn resolve(element: &Element) -> Result<Self> {
        let index: HashMap<&str, usize> = element
            .properties
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.as_str(), i))
            .collect();
        let get = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Format(format!("missing required property '{name}'")))
        };
        let rest_count = (0..).take_while(|i| index.contains_key(format!("f_rest_{i}").as_str())).count();
        let degree = match rest_count {
            0 => 0,
            9 => 1,
            24 => 2,
            45 => 3,
            n => return Err(Error::Format(format!("{n} f_rest properties do not form an SH degree"))),
        };
        let rest = (0..rest_count).map(|i| index[format!("f_rest_{i}").as_str()]).collect();
        Ok(Self {
            mean: [get("x")?, get("y")?, get("z")?],
            dc: [get("f_dc_0")?, get("f_dc_1")?, get("f_dc_2")?],
            rest,
            opacity: get("opacity")?,
            scale: [get("scale_0")?, get("scale_1")?, get("scale_2")?],
            rot: [get("rot_0")?, get("rot_1")?, get("rot_2")?, get("rot_3")?],
            degree,
        })
    }

    fn build(&self, row: &[f64], vertex: usize) -> Result<Gaussian> {
        if let Some(bad) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("vertex {vertex}: non-finite value in column {bad}")));
        }
        let (opacity, scale, rotation) = activate_parameters(
            row[self.opacity],
            self.scale.map(|i| row[i]),
            self.rot.map(|i| row[i]),
        )
        .map_err(|e| Error::Data(format!("vertex {vertex}: {e}")))?;
        let per_channel = self.rest.len() / 3;
        let mut sh = Vec::with_capacity(per_channel + 1);
        sh.push(self.dc.map(|i| row[i]));
        for k in 0..per_channel {
            sh.push([0, 1, 2].map(|c| row[self.rest[c * per_channel + k]]));
        }
        Ok(Gaussian {
            mean: Vector3::new(row[self.mean[0]], row[self.mean[1]], row[self.mean[2]]),
            scale,
            rotation,
            opacity,
            sh,
        })
    }
}

/// Parse a 3DGS PLY byte stream into a cloud named `asset_id`.
pub fn parse_ply(bytes: &[u8], asset_id: &str) -> Result<SplatCloud> {
    let header = parse_header(bytes)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Format("no vertex element".into()))?;
    let vertex = &header.elements[vertex_pos];
    let layout = Layout::resolve(vertex)?;
    let body = &bytes[header.body_offset..];
    let ncols = vertex.properties.len();
    let mut gaussians = Vec::with_capacity(vertex.count);

    match header.encoding {
        Encoding::BinaryLittleEndian => {
            let skip: usize = header.elements[..vertex_pos].iter().map(|e| e.count * e.stride()).sum();
            let stride = vertex.stride();
            let need = skip + stride * vertex.count;
            if body.len() < need {
                return Err(Error::Length(format!(
                    "payload has {} bytes, header requires {need}",
                    body.len()
                )));
            }
            let mut row = vec![0.0; ncols];
            for v in 0..vertex.count {
                let mut off = skip + v * stride;
                for (col, (_, ty)) in vertex.properties.iter().enumerate() {
                    row[col] = ty.read_le(&body[off..]);
                    off += ty.size();
                }
                gaussians.push(layout.build(&row, v)?);
            }
        }
        Encoding::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| Error::Format("ASCII body is not UTF-8".into()))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            for e in &header.elements[..vertex_pos] {
                for _ in 0..e.count {
                    lines.next().ok_or_else(|| Error::Length(format!("element {} truncated", e.name)))?;
                }
            }
            for v in 0..vertex.count {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Length(format!("expected {} vertices, found {v}", vertex.count)))?;
                let row = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Data(format!("vertex {v}: {e}")))?;
                if row.len() < ncols {
                    return Err(Error::Length(format!("vertex {v}: {} of {ncols} values", row.len())));
                }
                gaussians.push(layout.build(&row, v)?);
            }
        }
    }
    SplatCloud::new(asset_id, layout.degree, gaussians)
}

/// Serialise a cloud as binary little-endian PLY with float32 properties,
/// applying the inverse activations.
pub fn write_ply(cloud: &SplatCloud) -> Vec<u8> {
    let rest = 3 * (super::sh_coeff_count(cloud.sh_degree()) - 1);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..rest).map(|i| format!("f_rest_{i}")));
    names.extend(
        ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
            .iter()
            .map(|s| s.to_string()),
    );
    for n in &names {
        header.push_str(&format!("property float {n}\n"));
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    out.reserve(cloud.len() * names.len() * 4);
    let per_channel = rest / 3;
    for g in cloud.gaussians() {
        let (o, s, q) = deactivate_parameters(g);
        let mut row = vec![g.mean.x, g.mean.y, g.mean.z, 0.0, 0.0, 0.0];
        row.extend_from_slice(&g.sh[0]);
        for c in 0..3 {
            row.extend((0..per_channel).map(|k| g.sh[k + 1][c]));
        }
        row.push(o);
        row.extend_from_slice(&s);
        row.extend_from_slice(&q);
        for v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}
