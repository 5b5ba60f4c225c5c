//! PLY 1.0, ascii and binary little endian. Only the `vertex` element is
//! interpreted; other elements are skipped.

use std::fmt::Write;

use super::{parse_err, Format, Geometry, GeometryFile};
use crate::cloud::{Point, PointCloud, Rgb};
use crate::error::{Location, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    binary: bool,
    elements: Vec<Element>,
    comments: Vec<String>,
    /// Byte offset of the body and the line number it starts on.
    body_offset: usize,
    body_line: usize,
}

fn parse_header(bytes: &[u8], label: &str) -> Result<Header> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut comments = Vec::new();
    loop {
        line_no += 1;
        let rest = &bytes[offset..];
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Err(parse_err(label, Location::Line(line_no), "header is not terminated by end_header"));
        };
        let raw = &rest[..end];
        offset += end + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_err(label, Location::Line(line_no), "header line is not valid text"))?
            .trim_end_matches('\r')
            .trim();
        let mut tok = line.split_whitespace();
        let Some(keyword) = tok.next() else { continue };
        let err = |m: String| parse_err(label, Location::Line(line_no), m);
        match keyword {
            "ply" if line_no == 1 => {}
            _ if line_no == 1 => return Err(err("missing `ply` magic".into())),
            "format" => {
                let kind = tok.next().unwrap_or("");
                format = Some(match kind {
                    "ascii" => false,
                    "binary_little_endian" => true,
                    "binary_big_endian" => {
                        return Err(err("binary_big_endian PLY is not supported; convert to little endian".into()))
                    }
                    other => return Err(err(format!("unknown PLY format `{other}`"))),
                });
            }
            "comment" | "obj_info" => {
                comments.push(line[keyword.len()..].trim().to_string());
            }
            "element" => {
                let name = tok.next().ok_or_else(|| err("element without name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| err("element without a valid count".into()))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err("property before any element".into()))?;
                let ty = tok.next().unwrap_or("");
                if ty == "list" {
                    let count = tok.next().and_then(Scalar::parse);
                    let item = tok.next().and_then(Scalar::parse);
                    match (count, item, tok.next()) {
                        (Some(count), Some(item), Some(_)) if count.is_integer() => {
                            el.props.push(Property::List { count, item })
                        }
                        _ => return Err(err("malformed list property".into())),
                    }
                } else {
                    let ty = Scalar::parse(ty).ok_or_else(|| err(format!("unknown property type `{ty}`")))?;
                    let name = tok.next().ok_or_else(|| err("property without name".into()))?;
                    el.props.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            "end_header" => break,
            other => return Err(err(format!("unexpected header keyword `{other}`"))),
        }
    }
    let binary = format.ok_or_else(|| parse_err(label, Location::Line(line_no), "missing format line"))?;
    Ok(Header {
        binary,
        elements,
        comments,
        body_offset: offset,
        body_line: line_no + 1,
    })
}

struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<([usize; 3], bool)>,
}

fn vertex_layout(el: &Element, label: &str) -> Result<VertexLayout> {
    let find = |n: &str| {
        el.props.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == n))
    };
    let xyz = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => return Err(parse_err(label, Location::Line(1), "vertex element lacks x/y/z properties")),
    };
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => {
            let integer = [r, g, b]
                .iter()
                .all(|&i| matches!(el.props[i], Property::Scalar { ty, .. } if ty.is_integer()));
            Some(([r, g, b], integer))
        }
        _ => None,
    };
    Ok(VertexLayout { xyz, rgb })
}

fn to_unit_color(v: f64, integer: bool) -> f64 {
    if integer {
        v / 255.0
    } else {
        v
    }
}

pub(super) fn parse(bytes: &[u8], label: &str) -> Result<GeometryFile> {
    let header = parse_header(bytes, label)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(label, Location::Line(1), "no vertex element"))?;
    let layout = vertex_layout(&header.elements[vertex_pos], label)?;

    let mut positions = Vec::new();
    let mut colors: Vec<Rgb> = Vec::new();
    let mut record = Vec::new();
    let mut emit = |record: &[f64], at: Location| -> Result<()> {
        let p = Point::new(record[layout.xyz[0]], record[layout.xyz[1]], record[layout.xyz[2]]);
        if !p.iter().all(|v| v.is_finite()) {
            return Err(parse_err(label, at, "non-finite vertex coordinate"));
        }
        positions.push(p);
        if let Some((idx, integer)) = layout.rgb {
            let c = idx.map(|i| to_unit_color(record[i], integer));
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(parse_err(label, at, "color channel outside [0, 1] after scaling"));
            }
            colors.push(c);
        }
        Ok(())
    };

    if header.binary {
        let mut off = header.body_offset;
        for (ei, el) in header.elements.iter().enumerate() {
            if ei > vertex_pos {
                break;
            }
            if el.props.is_empty() {
                continue;
            }
            let min_record: usize = el
                .props
                .iter()
                .map(|p| match p {
                    Property::Scalar { ty, .. } => ty.size(),
                    Property::List { count, .. } => count.size(),
                })
                .sum();
            if el.count.saturating_mul(min_record) > bytes.len() - off {
                return Err(parse_err(label, Location::Byte(off), format!("truncated body: element `{}` needs more bytes", el.name)));
            }
            for _ in 0..el.count {
                record.clear();
                for p in &el.props {
                    match *p {
                        Property::Scalar { ty, .. } => {
                            let b = bytes
                                .get(off..off + ty.size())
                                .ok_or_else(|| parse_err(label, Location::Byte(off), "truncated body"))?;
                            record.push(ty.read_le(b));
                            off += ty.size();
                        }
                        Property::List { count, item } => {
                            let b = bytes
                                .get(off..off + count.size())
                                .ok_or_else(|| parse_err(label, Location::Byte(off), "truncated body"))?;
                            let n = count.read_le(b);
                            if n < 0.0 {
                                return Err(parse_err(label, Location::Byte(off), "negative list length"));
                            }
                            off += count.size();
                            let skip = (n as usize).saturating_mul(item.size());
                            if skip > bytes.len() - off {
                                return Err(parse_err(label, Location::Byte(off), "truncated list"));
                            }
                            off += skip;
                            record.push(f64::NAN);
                        }
                    }
                }
                if ei == vertex_pos {
                    emit(&record, Location::Byte(off))?;
                }
            }
        }
    } else {
        let body = std::str::from_utf8(&bytes[header.body_offset..]).map_err(|e| {
            parse_err(label, Location::Byte(header.body_offset + e.valid_up_to()), "ascii body is not valid text")
        })?;
        let mut lines = body
            .lines()
            .enumerate()
            .map(|(i, l)| (header.body_line + i, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        for (ei, el) in header.elements.iter().enumerate() {
            if ei > vertex_pos {
                break;
            }
            for k in 0..el.count {
                let (n, line) = lines.next().ok_or_else(|| {
                    parse_err(
                        label,
                        Location::Line(header.body_line + body.lines().count()),
                        format!("truncated body: element `{}` has {k} of {} records", el.name, el.count),
                    )
                })?;
                if ei != vertex_pos {
                    continue;
                }
                let mut tok = line.split_whitespace();
                let mut next = |what: &str| -> Result<f64> {
                    tok.next()
                        .and_then(|t| t.parse::<f64>().ok())
                        .ok_or_else(|| parse_err(label, Location::Line(n), format!("missing or bad {what}")))
                };
                record.clear();
                for p in &el.props {
                    match p {
                        Property::Scalar { name, .. } => record.push(next(name)?),
                        Property::List { .. } => {
                            let len = next("list length")?;
                            if !(len >= 0.0 && len < 1e6) {
                                return Err(parse_err(label, Location::Line(n), "bad list length"));
                            }
                            for _ in 0..len as usize {
                                next("list item")?;
                            }
                            record.push(f64::NAN);
                        }
                    }
                }
                emit(&record, Location::Line(n))?;
            }
        }
    }

    let mut cloud = PointCloud::new(positions)?;
    if layout.rgb.is_some() {
        cloud.set_colors(Some(colors))?;
    }
    Ok(GeometryFile {
        format: if header.binary {
            Format::PlyBinaryLittleEndian
        } else {
            Format::PlyAscii
        },
        payload: Geometry::Cloud(cloud),
        comments: header.comments,
    })
}

fn color_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(super) fn encode(cloud: &PointCloud, binary: bool, comments: &[String]) -> Vec<u8> {
    let mut h = String::from("ply\n");
    h.push_str(if binary {
        "format binary_little_endian 1.0\n"
    } else {
        "format ascii 1.0\n"
    });
    for c in comments {
        let _ = writeln!(h, "comment {}", c.replace('\n', " "));
    }
    let _ = writeln!(h, "element vertex {}", cloud.len());
    let ty = if binary { "double" } else { "float" };
    for axis in ["x", "y", "z"] {
        let _ = writeln!(h, "property {ty} {axis}");
    }
    if cloud.has_colors() {
        h.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    h.push_str("end_header\n");

    let mut out = h.into_bytes();
    let colors = cloud.colors();
    for (i, p) in cloud.positions().iter().enumerate() {
        if binary {
            for v in p.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            if let Some(c) = colors {
                out.extend(c[i].map(color_byte));
            }
        } else {
            let mut line = format!("{} {} {}", p.x, p.y, p.z);
            if let Some(c) = colors {
                let [r, g, b] = c[i].map(color_byte);
                let _ = write!(line, " {r} {g} {b}");
            }
            line.push('\n');
            out.extend_from_slice(line.as_bytes());
        }
    }
    out
}
