//! Minimal PLY reader/writer for point clouds.
//!
//! Reads ASCII and binary-little-endian files with float or double x/y/z
//! vertex properties; every other property is ignored. Non-finite points are
//! dropped and counted rather than failing the whole file.

use crate::detect::PointCloud;
use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;
use std::fs;
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// A parsed cloud plus the number of non-finite vertices that were dropped.
#[derive(Clone, Debug)]
pub struct PlyCloud {
    pub cloud: PointCloud,
    pub dropped_non_finite: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
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
    fn parse(token: &str) -> Option<Self> {
        Some(match token {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 => 4,
            Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

struct Property {
    name: String,
    scalar: Option<Scalar>, // None for list properties
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let err = |line: usize, msg: &str| {
        Error::Parse(format!("{}: header line {line}: {msg}", path.display()))
    };
    // The header is ASCII text terminated by an "end_header" line.
    let mut offset = 0usize;
    let mut lines: Vec<(usize, String)> = Vec::new();
    let mut line_no = 0usize;
    loop {
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(err(line_no + 1, "unterminated header (no end_header)"));
        };
        let raw = &rest[..nl];
        let text = std::str::from_utf8(raw)
            .map_err(|_| err(line_no + 1, "header is not valid ASCII/UTF-8"))?
            .trim_end_matches('\r')
            .to_string();
        offset += nl + 1;
        line_no += 1;
        let done = text.trim() == "end_header";
        lines.push((line_no, text));
        if done {
            break;
        }
        if offset >= bytes.len() {
            return Err(err(line_no, "unterminated header (no end_header)"));
        }
    }

    let mut it = lines.iter();
    let (l, magic) = it.next().ok_or_else(|| err(1, "empty file"))?;
    if magic.trim() != "ply" {
        return Err(err(*l, "missing 'ply' magic"));
    }

    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for (l, line) in it {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("end_header") => break,
            Some("format") => {
                let spec = tokens.get(1).copied().unwrap_or("");
                format = Some(match spec {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(err(*l, &format!("unsupported encoding '{other}'")));
                    }
                });
            }
            Some("element") => {
                if tokens.len() != 3 {
                    return Err(err(*l, "malformed element line"));
                }
                let count: usize = tokens[2]
                    .parse()
                    .map_err(|_| err(*l, "element count is not an integer"))?;
                elements.push(Element {
                    name: tokens[1].to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err(*l, "property before any element"))?;
                if tokens.get(1) == Some(&"list") {
                    let name = tokens.last().copied().unwrap_or("").to_string();
                    element.properties.push(Property { name, scalar: None });
                } else {
                    if tokens.len() != 3 {
                        return Err(err(*l, "malformed property line"));
                    }
                    let scalar = Scalar::parse(tokens[1])
                        .ok_or_else(|| err(*l, &format!("unknown property type '{}'", tokens[1])))?;
                    element.properties.push(Property {
                        name: tokens[2].to_string(),
                        scalar: Some(scalar),
                    });
                }
            }
            Some(other) => return Err(err(*l, &format!("unexpected keyword '{other}'"))),
        }
    }

    let format = format.ok_or_else(|| err(line_no, "missing format line"))?;
    Ok(Header {
        format,
        elements,
        body_offset: offset,
    })
}

fn xyz_layout(vertex: &Element, path: &Path) -> Result<[usize; 3]> {
    let mut idx = [usize::MAX; 3];
    for (i, prop) in vertex.properties.iter().enumerate() {
        let slot = match prop.name.as_str() {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            _ => continue,
        };
        match prop.scalar {
            Some(Scalar::F32) | Some(Scalar::F64) => idx[slot] = i,
            _ => {
                return Err(Error::Parse(format!(
                    "{}: vertex property '{}' must be float or double",
                    path.display(),
                    prop.name
                )));
            }
        }
    }
    if idx.iter().any(|&i| i == usize::MAX) {
        return Err(Error::Parse(format!(
            "{}: vertex element is missing x/y/z properties",
            path.display()
        )));
    }
    Ok(idx)
}

/// Reads a PLY point cloud from disk.
pub fn read_ply(path: &Path) -> Result<PlyCloud> {
    let bytes = fs::read(path)?;
    let header = parse_header(&bytes, path)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Parse(format!("{}: no vertex element", path.display())))?;
    let vertex = &header.elements[vertex_pos];
    let xyz = xyz_layout(vertex, path)?;
    let body = &bytes[header.body_offset..];

    match header.format {
        PlyFormat::Ascii => read_ascii(body, &header, vertex_pos, xyz, path),
        PlyFormat::BinaryLittleEndian => read_binary(body, &header, vertex_pos, xyz, path),
    }
}

fn read_ascii(
    body: &[u8],
    header: &Header,
    vertex_pos: usize,
    xyz: [usize; 3],
    path: &Path,
) -> Result<PlyCloud> {
    let text = std::str::from_utf8(body)
        .map_err(|_| Error::Parse(format!("{}: ASCII body is not valid UTF-8", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());

    // Skip any elements declared before the vertices (one line per instance).
    for element in &header.elements[..vertex_pos] {
        for _ in 0..element.count {
            lines.next().ok_or_else(|| {
                Error::Parse(format!(
                    "{}: unexpected end of file in element '{}'",
                    path.display(),
                    element.name
                ))
            })?;
        }
    }

    let vertex = &header.elements[vertex_pos];
    if vertex.properties.iter().any(|p| p.scalar.is_none()) {
        return Err(Error::Parse(format!(
            "{}: list-typed vertex properties are not supported",
            path.display()
        )));
    }
    let mut points = Vec::with_capacity(vertex.count);
    let mut dropped = 0usize;
    for i in 0..vertex.count {
        let line = lines.next().ok_or_else(|| {
            Error::Parse(format!(
                "{}: vertex {} of {} missing (truncated file)",
                path.display(),
                i + 1,
                vertex.count
            ))
        })?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < vertex.properties.len() {
            return Err(Error::Parse(format!(
                "{}: vertex {} has {} values, expected {}",
                path.display(),
                i + 1,
                tokens.len(),
                vertex.properties.len()
            )));
        }
        let mut coords = [0.0f64; 3];
        for (slot, &prop_idx) in xyz.iter().enumerate() {
            coords[slot] = tokens[prop_idx].parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: vertex {}: '{}' is not a number",
                    path.display(),
                    i + 1,
                    tokens[prop_idx]
                ))
            })?;
        }
        if coords.iter().all(|c| c.is_finite()) {
            points.push(Vector3::new(coords[0], coords[1], coords[2]));
        } else {
            dropped += 1;
        }
    }
    Ok(PlyCloud {
        cloud: PointCloud::new(points),
        dropped_non_finite: dropped,
    })
}

fn read_binary(
    body: &[u8],
    header: &Header,
    vertex_pos: usize,
    xyz: [usize; 3],
    path: &Path,
) -> Result<PlyCloud> {
    // Fixed strides are required to locate the vertex data; list properties
    // have per-instance sizes we cannot skip.
    let mut offset = 0usize;
    for element in &header.elements[..vertex_pos] {
        let stride: Option<usize> = element
            .properties
            .iter()
            .map(|p| p.scalar.map(Scalar::size))
            .sum();
        let stride = stride.ok_or_else(|| {
            Error::Parse(format!(
                "{}: cannot skip list-typed properties of element '{}' in binary PLY",
                path.display(),
                element.name
            ))
        })?;
        offset += stride * element.count;
    }

    let vertex = &header.elements[vertex_pos];
    let mut field_offsets = Vec::with_capacity(vertex.properties.len());
    let mut stride = 0usize;
    for prop in &vertex.properties {
        let Some(scalar) = prop.scalar else {
            return Err(Error::Parse(format!(
                "{}: list-typed vertex properties are not supported",
                path.display()
            )));
        };
        field_offsets.push((stride, scalar));
        stride += scalar.size();
    }

    let needed = offset + stride * vertex.count;
    if body.len() < needed {
        return Err(Error::Parse(format!(
            "{}: truncated binary body: {} bytes present, {} required for {} vertices",
            path.display(),
            body.len(),
            needed,
            vertex.count
        )));
    }

    let mut points = Vec::with_capacity(vertex.count);
    let mut dropped = 0usize;
    for i in 0..vertex.count {
        let row = &body[offset + i * stride..offset + (i + 1) * stride];
        let mut coords = [0.0f64; 3];
        for (slot, &prop_idx) in xyz.iter().enumerate() {
            let (field_off, scalar) = field_offsets[prop_idx];
            let mut cursor = &row[field_off..];
            coords[slot] = match scalar {
                Scalar::F32 => cursor.read_f32::<LittleEndian>().unwrap() as f64,
                Scalar::F64 => cursor.read_f64::<LittleEndian>().unwrap(),
                _ => unreachable!("xyz_layout enforces float/double"),
            };
        }
        if coords.iter().all(|c| c.is_finite()) {
            points.push(Vector3::new(coords[0], coords[1], coords[2]));
        } else {
            dropped += 1;
        }
    }
    Ok(PlyCloud {
        cloud: PointCloud::new(points),
        dropped_non_finite: dropped,
    })
}

/// Writes a point cloud as PLY with double-precision x/y/z, so a read-back
/// reproduces the input exactly.
pub fn write_ply(path: &Path, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "ply")?;
    match format {
        PlyFormat::Ascii => writeln!(out, "format ascii 1.0")?,
        PlyFormat::BinaryLittleEndian => writeln!(out, "format binary_little_endian 1.0")?,
    }
    writeln!(out, "element vertex {}", cloud.len())?;
    writeln!(out, "property double x")?;
    writeln!(out, "property double y")?;
    writeln!(out, "property double z")?;
    writeln!(out, "end_header")?;
    match format {
        PlyFormat::Ascii => {
            for p in &cloud.points {
                writeln!(out, "{} {} {}", p.x, p.y, p.z)?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for p in &cloud.points {
                out.write_f64::<LittleEndian>(p.x)?;
                out.write_f64::<LittleEndian>(p.y)?;
                out.write_f64::<LittleEndian>(p.z)?;
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}
