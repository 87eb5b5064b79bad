//! PLY reader and writer for colored point clouds.
//!
//! Supports `ascii 1.0` and `binary_little_endian 1.0`. The vertex element
//! must carry floating `x`, `y`, `z` and 8-bit `red`/`green`/`blue` (or
//! `r`/`g`/`b`). An optional scalar `saliency` property is read into the
//! cloud's saliency channel. Any other vertex property is skipped, as are
//! elements other than `vertex`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::cloud::{Point, PointCloud};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
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

    fn is_float(self) -> bool {
        matches!(self, Self::F32 | Self::F64)
    }

    /// Decodes one little-endian value. `bytes` must hold at least `size()` bytes.
    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            Self::I8 => bytes[0] as i8 as f64,
            Self::U8 => bytes[0] as f64,
            Self::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Self::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Self::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }

    fn parse_ascii(self, token: &str) -> Option<f64> {
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

#[derive(Debug, Clone, Copy)]
enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
    line: usize,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

impl Element {
    fn fixed_stride(&self) -> Option<usize> {
        self.properties
            .iter()
            .map(|p| match p.kind {
                PropertyKind::Scalar(t) => Some(t.size()),
                PropertyKind::List { .. } => None,
            })
            .sum()
    }
}

#[derive(Debug)]
struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    /// Number of lines consumed, including `end_header`.
    lines: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn read_header<R: BufRead>(reader: &mut R) -> Result<Header> {
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut line_no = 0;
    let mut buf = String::new();
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            return Err(parse_err(line_no + 1, "unexpected end of file inside header"));
        }
        line_no += 1;
        let line = buf.trim_end_matches(['\n', '\r']).trim();
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        if line_no == 1 {
            if line != "ply" {
                return Err(parse_err(1, format!("expected magic \"ply\", found {line:?}")));
            }
            continue;
        }
        match keyword {
            "format" => {
                let kind = words.next().unwrap_or("");
                let version = words.next().unwrap_or("");
                if version != "1.0" {
                    return Err(parse_err(line_no, format!("unsupported PLY version {version:?}")));
                }
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    "binary_big_endian" => {
                        return Err(parse_err(
                            line_no,
                            "binary_big_endian PLY is not supported; convert to ascii or binary_little_endian",
                        ))
                    }
                    other => return Err(parse_err(line_no, format!("unknown format {other:?}"))),
                });
            }
            "comment" | "obj_info" | "" => {}
            "element" => {
                let name = words
                    .next()
                    .ok_or_else(|| parse_err(line_no, "element without a name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| parse_err(line_no, "element count is missing or not an integer"))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "property declared before any element"))?;
                let ty = words.next().unwrap_or("");
                let kind = if ty == "list" {
                    let count = words.next().and_then(ScalarType::parse);
                    let item = words.next().and_then(ScalarType::parse);
                    match (count, item) {
                        (Some(count), Some(item)) if !count.is_float() => {
                            PropertyKind::List { count, item }
                        }
                        _ => return Err(parse_err(line_no, "malformed list property")),
                    }
                } else {
                    PropertyKind::Scalar(
                        ScalarType::parse(ty)
                            .ok_or_else(|| parse_err(line_no, format!("unknown property type {ty:?}")))?,
                    )
                };
                let name = words
                    .next()
                    .ok_or_else(|| parse_err(line_no, "property without a name"))?;
                element.properties.push(Property { name: name.to_string(), kind, line: line_no });
            }
            "end_header" => break,
            other => return Err(parse_err(line_no, format!("unexpected header keyword {other:?}"))),
        }
    }
    let format = format.ok_or_else(|| parse_err(line_no, "header has no format line"))?;
    Ok(Header { format, elements, lines: line_no })
}

/// Where the fields the toolkit needs sit inside a vertex record.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: [usize; 3],
    saliency: Option<usize>,
}

impl VertexLayout {
    fn resolve(element: &Element, header_end: usize) -> Result<Self> {
        let find = |name: &str| element.properties.iter().position(|p| p.name == name);
        let scalar_of = |idx: usize| match element.properties[idx].kind {
            PropertyKind::Scalar(t) => Some(t),
            PropertyKind::List { .. } => None,
        };

        let mut xyz = [0; 3];
        for (slot, name) in xyz.iter_mut().zip(["x", "y", "z"]) {
            let idx = find(name).ok_or_else(|| {
                parse_err(header_end, format!("vertex element has no \"{name}\" property"))
            })?;
            match scalar_of(idx) {
                Some(t) if t.is_float() => *slot = idx,
                _ => {
                    return Err(parse_err(
                        element.properties[idx].line,
                        format!("property {name} must be float or double"),
                    ))
                }
            }
        }

        let rgb_names = [["red", "green", "blue"], ["r", "g", "b"]];
        let found = rgb_names.iter().find_map(|names| {
            let idx = [find(names[0])?, find(names[1])?, find(names[2])?];
            Some((idx, names))
        });
        let (rgb, names) = found.ok_or(Error::ColorlessCloud)?;
        for (&idx, name) in rgb.iter().zip(names.iter()) {
            if scalar_of(idx) != Some(ScalarType::U8) {
                return Err(parse_err(
                    element.properties[idx].line,
                    format!("color property {name} must be uchar"),
                ));
            }
        }

        let saliency = match find("saliency") {
            Some(idx) => match scalar_of(idx) {
                Some(t) if t.is_float() => Some(idx),
                _ => {
                    return Err(parse_err(
                        element.properties[idx].line,
                        "property saliency must be float or double",
                    ))
                }
            },
            None => None,
        };

        Ok(Self { xyz, rgb, saliency })
    }
}

/// Reads a PLY point cloud from any buffered reader.
pub fn read_ply<R: BufRead>(mut reader: R) -> Result<PointCloud> {
    let header = read_header(&mut reader)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(header.lines, "header declares no vertex element"))?;
    let vertex = &header.elements[vertex_pos];
    let layout = VertexLayout::resolve(vertex, header.lines)?;

    let records = match header.format {
        PlyFormat::Ascii => read_ascii(&mut reader, &header, vertex_pos)?,
        PlyFormat::BinaryLittleEndian => read_binary(&mut reader, &header, vertex_pos)?,
    };

    let mut points = Vec::with_capacity(records.len());
    let mut saliency = layout.saliency.map(|_| Vec::with_capacity(records.len()));
    for rec in &records {
        let position = [rec[layout.xyz[0]], rec[layout.xyz[1]], rec[layout.xyz[2]]];
        let color = [rec[layout.rgb[0]] as u8, rec[layout.rgb[1]] as u8, rec[layout.rgb[2]] as u8];
        points.push(Point::new(position, color));
        if let (Some(s), Some(idx)) = (saliency.as_mut(), layout.saliency) {
            s.push(rec[idx]);
        }
    }
    match saliency {
        Some(s) => PointCloud::with_saliency(points, s),
        None => PointCloud::new(points),
    }
}

/// Each vertex record holds one value per property; list properties
/// contribute a NaN placeholder since the toolkit never reads them.
fn read_ascii<R: BufRead>(reader: &mut R, header: &Header, vertex_pos: usize) -> Result<Vec<Vec<f64>>> {
    let mut line_no = header.lines;
    let mut buf = String::new();
    let mut next_line = |line_no: &mut usize| -> Result<Option<String>> {
        loop {
            buf.clear();
            if reader.read_line(&mut buf)? == 0 {
                return Ok(None);
            }
            *line_no += 1;
            if !buf.trim().is_empty() {
                return Ok(Some(buf.clone()));
            }
        }
    };

    for element in &header.elements[..vertex_pos] {
        for _ in 0..element.count {
            if next_line(&mut line_no)?.is_none() {
                return Err(Error::Truncated { expected: header.elements[vertex_pos].count, found: 0 });
            }
        }
    }

    let vertex = &header.elements[vertex_pos];
    let mut records = Vec::with_capacity(vertex.count);
    for found in 0..vertex.count {
        let line = next_line(&mut line_no)?
            .ok_or(Error::Truncated { expected: vertex.count, found })?;
        let mut tokens = line.split_whitespace();
        let mut rec = Vec::with_capacity(vertex.properties.len());
        for prop in &vertex.properties {
            let mut take = |ty: ScalarType| -> Result<f64> {
                let tok = tokens.next().ok_or_else(|| {
                    parse_err(line_no, format!("vertex line ends before property {}", prop.name))
                })?;
                ty.parse_ascii(tok).ok_or_else(|| {
                    parse_err(line_no, format!("invalid value {tok:?} for property {}", prop.name))
                })
            };
            match prop.kind {
                PropertyKind::Scalar(t) => rec.push(take(t)?),
                PropertyKind::List { count, item } => {
                    let n = take(count)? as usize;
                    for _ in 0..n {
                        take(item)?;
                    }
                    rec.push(f64::NAN);
                }
            }
        }
        records.push(rec);
    }
    Ok(records)
}

fn read_binary<R: BufRead>(reader: &mut R, header: &Header, vertex_pos: usize) -> Result<Vec<Vec<f64>>> {
    let mut data = Vec::new();
    reader.read_to_end(&mut data)?;
    let vertex = &header.elements[vertex_pos];
    let mut cursor = 0usize;

    // Returns the record and the byte offset past it, or None when the data runs out.
    let read_record = |element: &Element, mut at: usize, keep: bool| -> Option<(Vec<f64>, usize)> {
        let mut rec = Vec::with_capacity(if keep { element.properties.len() } else { 0 });
        for prop in &element.properties {
            match prop.kind {
                PropertyKind::Scalar(t) => {
                    let bytes = data.get(at..at + t.size())?;
                    if keep {
                        rec.push(t.read_le(bytes));
                    }
                    at += t.size();
                }
                PropertyKind::List { count, item } => {
                    let n = count.read_le(data.get(at..at + count.size())?) as usize;
                    at += count.size() + n * item.size();
                    if at > data.len() {
                        return None;
                    }
                    if keep {
                        rec.push(f64::NAN);
                    }
                }
            }
        }
        Some((rec, at))
    };

    for element in &header.elements[..vertex_pos] {
        if let Some(stride) = element.fixed_stride() {
            cursor += stride * element.count;
        } else {
            for _ in 0..element.count {
                cursor = match read_record(element, cursor, false) {
                    Some((_, next)) => next,
                    None => return Err(Error::Truncated { expected: vertex.count, found: 0 }),
                };
            }
        }
    }

    let mut records = Vec::with_capacity(vertex.count);
    for found in 0..vertex.count {
        let (rec, next) = read_record(vertex, cursor, true)
            .ok_or(Error::Truncated { expected: vertex.count, found })?;
        records.push(rec);
        cursor = next;
    }
    Ok(records)
}

/// Loads a colored point cloud from a PLY file.
pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply(BufReader::new(file)).map_err(|e| match e {
        Error::Stream(source) => Error::io(path, source),
        other => other,
    })
}

/// Writes the cloud as PLY. Coordinates are stored as doubles, so binary
/// files reload bit-exactly; the ascii writer uses shortest round-trip
/// decimal formatting and is exact as well.
pub fn write_ply<W: Write>(cloud: &PointCloud, mut out: W, format: PlyFormat) -> std::io::Result<()> {
    let format_line = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(out, "ply")?;
    writeln!(out, "format {format_line} 1.0")?;
    writeln!(out, "comment written by pqsm")?;
    writeln!(out, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(out, "property double {axis}")?;
    }
    for channel in ["red", "green", "blue"] {
        writeln!(out, "property uchar {channel}")?;
    }
    let saliency = cloud.saliency();
    if saliency.is_some() {
        writeln!(out, "property double saliency")?;
    }
    writeln!(out, "end_header")?;

    for (i, p) in cloud.points().iter().enumerate() {
        match format {
            PlyFormat::Ascii => {
                let [x, y, z] = p.position;
                let [r, g, b] = p.color;
                write!(out, "{x} {y} {z} {r} {g} {b}")?;
                if let Some(s) = saliency {
                    write!(out, " {}", s[i])?;
                }
                writeln!(out)?;
            }
            PlyFormat::BinaryLittleEndian => {
                for c in p.position {
                    out.write_all(&c.to_le_bytes())?;
                }
                out.write_all(&p.color)?;
                if let Some(s) = saliency {
                    out.write_all(&s[i].to_le_bytes())?;
                }
            }
        }
    }
    out.flush()
}

pub fn save_ply(cloud: &PointCloud, path: impl AsRef<Path>, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_ply(cloud, BufWriter::new(file), format).map_err(|e| Error::io(path, e))
}
