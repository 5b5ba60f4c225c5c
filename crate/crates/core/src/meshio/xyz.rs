use std::fmt::Write;

use super::{parse_err, Format, Geometry, GeometryFile};
use crate::cloud::{Point, PointCloud};
use crate::error::{Location, Result};

/// Whitespace-separated `x y z` or `x y z r g b` (colors in `[0, 1]`) rows.
/// `#` starts a comment.
pub(super) fn parse(bytes: &[u8], label: &str) -> Result<GeometryFile> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| parse_err(label, Location::Byte(e.valid_up_to()), "not a PLY, OFF or text XYZ file"))?;
    let mut comments = Vec::new();
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut columns = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let (data, comment) = match raw.split_once('#') {
            Some((d, c)) => (d, Some(c)),
            None => (raw, None),
        };
        if let Some(c) = comment {
            comments.push(c.trim().to_string());
        }
        let values: Vec<f64> = data
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(label, Location::Line(n), "expected numeric columns"))?;
        if values.is_empty() {
            continue;
        }
        if values.len() != 3 && values.len() != 6 {
            return Err(parse_err(label, Location::Line(n), format!("expected 3 or 6 columns, found {}", values.len())));
        }
        match columns {
            None => columns = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(parse_err(label, Location::Line(n), format!("row has {} columns, earlier rows have {c}", values.len())))
            }
            _ => {}
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(parse_err(label, Location::Line(n), "non-finite value"));
        }
        positions.push(Point::new(values[0], values[1], values[2]));
        if values.len() == 6 {
            let c = [values[3], values[4], values[5]];
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(parse_err(label, Location::Line(n), "color outside [0, 1]"));
            }
            colors.push(c);
        }
    }
    if positions.is_empty() {
        return Err(parse_err(label, Location::Line(1), "no points found"));
    }
    let mut cloud = PointCloud::new(positions)?;
    if columns == Some(6) {
        cloud.set_colors(Some(colors))?;
    }
    Ok(GeometryFile {
        format: Format::Xyz,
        payload: Geometry::Cloud(cloud),
        comments,
    })
}

pub(super) fn encode(cloud: &PointCloud, comments: &[String]) -> Vec<u8> {
    let mut s = String::new();
    for c in comments {
        let _ = writeln!(s, "# {}", c.replace('\n', " "));
    }
    let colors = cloud.colors();
    for (i, p) in cloud.positions().iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if let Some(c) = colors {
            let _ = write!(s, " {} {} {}", c[i][0], c[i][1], c[i][2]);
        }
        s.push('\n');
    }
    s.into_bytes()
}
