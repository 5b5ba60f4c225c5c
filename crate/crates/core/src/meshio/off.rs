use std::fmt::Write;

use super::{parse_err, Format, Geometry, GeometryFile};
use crate::cloud::{Point, TriangleMesh};
use crate::error::{Location, Result};

/// Non-empty lines with comments stripped, paired with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

pub(super) fn parse(bytes: &[u8], label: &str) -> Result<GeometryFile> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| parse_err(label, Location::Byte(e.valid_up_to()), "OFF file is not valid UTF-8"))?;
    let comments = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix('#').map(|c| c.trim().to_string()))
        .collect();
    let mut lines = content_lines(text);

    let (line_no, first) = lines
        .next()
        .ok_or_else(|| parse_err(label, Location::Line(1), "empty file"))?;
    let rest = first
        .strip_prefix("OFF")
        .ok_or_else(|| parse_err(label, Location::Line(line_no), "missing OFF keyword"))?;
    let mut counts: Vec<&str> = rest.split_whitespace().collect();
    let mut counts_line = line_no;
    if counts.is_empty() {
        let (n, l) = lines
            .next()
            .ok_or_else(|| parse_err(label, Location::Line(line_no + 1), "missing element counts"))?;
        counts = l.split_whitespace().collect();
        counts_line = n;
    }
    if counts.len() < 2 {
        return Err(parse_err(label, Location::Line(counts_line), "expected `vertices faces [edges]`"));
    }
    let parse_count = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(label, Location::Line(counts_line), format!("bad count `{s}`")))
    };
    let nv = parse_count(counts[0])?;
    let nf = parse_count(counts[1])?;

    let mut vertices = Vec::new();
    for k in 0..nv {
        let (n, l) = lines.next().ok_or_else(|| {
            parse_err(label, Location::Line(text.lines().count() + 1), format!("truncated: expected {nv} vertices, got {k}"))
        })?;
        let c: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(label, Location::Line(n), "bad vertex coordinate"))?;
        if c.len() != 3 {
            return Err(parse_err(label, Location::Line(n), "vertex needs 3 coordinates"));
        }
        if !c.iter().all(|v| v.is_finite()) {
            return Err(parse_err(label, Location::Line(n), "non-finite vertex coordinate"));
        }
        vertices.push(Point::new(c[0], c[1], c[2]));
    }

    let mut triangles = Vec::new();
    for k in 0..nf {
        let (n, l) = lines.next().ok_or_else(|| {
            parse_err(label, Location::Line(text.lines().count() + 1), format!("truncated: expected {nf} faces, got {k}"))
        })?;
        let mut tok = l.split_whitespace();
        let arity: usize = tok
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(label, Location::Line(n), "bad face arity"))?;
        if arity < 3 {
            return Err(parse_err(label, Location::Line(n), format!("face with {arity} vertices")));
        }
        let mut idx = Vec::with_capacity(arity.min(64));
        for _ in 0..arity {
            let v: u32 = tok
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(label, Location::Line(n), "bad or missing face index"))?;
            if v as usize >= nv {
                return Err(parse_err(label, Location::Line(n), format!("face index {v} out of range (vertices: {nv})")));
            }
            idx.push(v);
        }
        for j in 1..arity - 1 {
            triangles.push([idx[0], idx[j], idx[j + 1]]);
        }
    }

    let mesh = TriangleMesh::new(vertices, triangles)?;
    Ok(GeometryFile {
        format: Format::Off,
        payload: Geometry::Mesh(mesh),
        comments,
    })
}

pub(super) fn encode(mesh: &TriangleMesh) -> String {
    let mut s = String::from("OFF\n");
    let _ = writeln!(s, "{} {} 0", mesh.vertices().len(), mesh.triangles().len());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}
