//! Point cloud and triangle mesh containers, spatial indexing and surface
//! sampling.

mod index;
mod sampling;
pub mod shapes;

pub use index::NeighborIndex;
pub use sampling::{min_dist_for_count, poisson_disk_sample, poisson_subsample, sample_surface};

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

pub type Point = Point3<f64>;
pub type Vec3 = Vector3<f64>;
/// RGB appearance with every channel in `[0, 1]`.
pub type Rgb = [f64; 3];

/// Positions with optional per-point appearance.
///
/// Point ids are indices into [`PointCloud::positions`]; duplicates are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub id: String,
    positions: Vec<Point>,
    colors: Option<Vec<Rgb>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Point>) -> Result<Self> {
        check_finite(&positions)?;
        Ok(Self {
            id: String::new(),
            positions,
            colors: None,
        })
    }

    pub fn with_colors(positions: Vec<Point>, colors: Vec<Rgb>) -> Result<Self> {
        let mut cloud = Self::new(positions)?;
        cloud.set_colors(Some(colors))?;
        Ok(cloud)
    }

    pub fn named(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    #[inline]
    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    #[inline]
    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn has_colors(&self) -> bool {
        self.colors.is_some()
    }

    pub fn set_colors(&mut self, colors: Option<Vec<Rgb>>) -> Result<()> {
        if let Some(c) = &colors {
            if c.len() != self.positions.len() {
                return Err(Error::InvalidData(format!(
                    "{} colors for {} positions",
                    c.len(),
                    self.positions.len()
                )));
            }
            if let Some(i) = c
                .iter()
                .position(|rgb| rgb.iter().any(|&v| !(0.0..=1.0).contains(&v)))
            {
                return Err(Error::InvalidData(format!(
                    "color of point {i} outside [0, 1]: {:?}",
                    c[i]
                )));
            }
        }
        self.colors = colors;
        Ok(())
    }

    /// Replaces positions, keeping colors. The count must not change.
    pub fn set_positions(&mut self, positions: Vec<Point>) -> Result<()> {
        if positions.len() != self.positions.len() {
            return Err(Error::InvalidData(format!(
                "expected {} positions, got {}",
                self.positions.len(),
                positions.len()
            )));
        }
        check_finite(&positions)?;
        self.positions = positions;
        Ok(())
    }

    /// Copy of this cloud with positions moved by per-point displacements.
    pub fn displaced(&self, displacements: &[Vec3]) -> Result<Self> {
        if displacements.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} displacements for {} points",
                displacements.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        out.set_positions(
            self.positions
                .iter()
                .zip(displacements)
                .map(|(p, d)| p + d)
                .collect(),
        )?;
        Ok(out)
    }

    pub fn bbox(&self) -> Option<(Point, Point)> {
        bbox(&self.positions)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.positions)
    }
}

/// Axis-aligned bounding box `(min, max)`; `None` for an empty slice.
pub fn bbox(points: &[Point]) -> Option<(Point, Point)> {
    let first = points.first()?;
    let mut lo = *first;
    let mut hi = *first;
    for p in &points[1..] {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    Some((lo, hi))
}

/// Length of the axis-aligned bounding box diagonal. Zero for fewer than two
/// distinct points.
pub fn bbox_diagonal(points: &[Point]) -> f64 {
    bbox(points).map_or(0.0, |(lo, hi)| (hi - lo).norm())
}

fn check_finite(points: &[Point]) -> Result<()> {
    match points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
        Some(i) => Err(Error::InvalidData(format!(
            "point {i} has a non-finite coordinate: {:?}",
            points[i]
        ))),
        None => Ok(()),
    }
}

/// Indexed triangle surface.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    triangles: Vec<[u32; 3]>,
    normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    /// Validates indices and drops zero-area triangles.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        check_finite(&vertices)?;
        let n = vertices.len();
        if let Some((i, t)) = triangles
            .iter()
            .enumerate()
            .find(|(_, t)| t.iter().any(|&v| v as usize >= n))
        {
            return Err(Error::InvalidData(format!(
                "triangle {i} {t:?} references a vertex >= {n}"
            )));
        }
        let triangles = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|v| vertices[v as usize]);
                (b - a).cross(&(c - a)).norm() > 0.0
            })
            .collect();
        Ok(Self {
            vertices,
            triangles,
            normals: None,
        })
    }

    /// Attaches per-vertex normals. Each must have unit length.
    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != self.vertices.len() {
            return Err(Error::InvalidData(format!(
                "{} normals for {} vertices",
                normals.len(),
                self.vertices.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::InvalidData(format!("normal {i} is not unit length")));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    /// Area-weighted vertex normals computed from the faces.
    pub fn with_computed_normals(self) -> Self {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = t.map(|v| self.vertices[v as usize]);
            let n = (b - a).cross(&(c - a));
            for &v in t {
                acc[v as usize] += n;
            }
        }
        let normals = acc
            .into_iter()
            .map(|n| n.try_normalize(0.0).unwrap_or_else(Vec3::z))
            .collect();
        Self {
            normals: Some(normals),
            ..self
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn triangle(&self, i: usize) -> [Point; 3] {
        self.triangles[i].map(|v| self.vertices[v as usize])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.vertices)
    }

    /// Applies `f` to every vertex (normals are recomputed if present).
    pub fn map_vertices(&self, f: impl Fn(&Point) -> Point) -> Self {
        let moved = Self {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
            normals: None,
        };
        if self.normals.is_some() {
            moved.with_computed_normals()
        } else {
            moved
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_of_single_point_is_zero() {
        assert_eq!(bbox_diagonal(&[Point::new(3.0, -1.0, 2.0)]), 0.0);
    }

    #[test]
    fn diagonal_analytic() {
        let d = bbox_diagonal(&[Point::origin(), Point::new(1.0, 1.0, 1.0)]);
        assert!((d - 3f64.sqrt()).abs() < 1e-15);
        let d = bbox_diagonal(&[
            Point::origin(),
            Point::new(2.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ]);
        assert!((d - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(PointCloud::new(vec![Point::new(f64::NAN, 0.0, 0.0)]).is_err());
        assert!(PointCloud::new(vec![Point::new(0.0, f64::INFINITY, 0.0)]).is_err());
    }

    #[test]
    fn color_validation() {
        let p = vec![Point::origin(); 2];
        assert!(PointCloud::with_colors(p.clone(), vec![[0.0; 3]]).is_err());
        assert!(PointCloud::with_colors(p.clone(), vec![[0.0; 3], [1.2, 0.0, 0.0]]).is_err());
        assert!(PointCloud::with_colors(p, vec![[0.0; 3], [1.0; 3]]).is_ok());
    }

    #[test]
    fn mesh_drops_degenerate_and_checks_indices() {
        let v = vec![
            Point::origin(),
            Point::new(1.0, 0.0, 0.0),
            Point::new(2.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ];
        let m = TriangleMesh::new(v.clone(), vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(m.triangles().len(), 1);
        assert!(TriangleMesh::new(v, vec![[0, 1, 4]]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn diagonal_translation_invariant_and_scales(
            pts in proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64), 1..50),
            t in (-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64),
            s in 0.1..10.0f64,
        ) {
            let p: Vec<Point> = pts.iter().map(|&(x, y, z)| Point::new(x, y, z)).collect();
            let d = bbox_diagonal(&p);
            let shifted: Vec<Point> = p.iter().map(|q| q + Vec3::new(t.0, t.1, t.2)).collect();
            let scaled: Vec<Point> = p.iter().map(|q| Point::from(q.coords * s)).collect();
            proptest::prop_assert!((bbox_diagonal(&shifted) - d).abs() < 1e-9 * (1.0 + d));
            proptest::prop_assert!((bbox_diagonal(&scaled) - s * d).abs() < 1e-9 * (1.0 + s * d));
        }
    }
}
