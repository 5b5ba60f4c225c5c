//! Exact point-to-triangle-mesh distance.

use rustc_hash::FxHashMap as HashMap;

use crate::cloud::{Point, TriangleMesh};
use crate::error::{Error, Result};

/// Closest point to `p` on triangle `abc`, degenerate triangles included.
pub fn closest_point_on_triangle(p: &Point, [a, b, c]: [Point; 3]) -> Point {
    let ab = b - a;
    let ac = c - a;
    if ab.cross(&ac).norm_squared() <= 1e-30 * (ab.norm_squared() * ac.norm_squared()).max(f64::MIN_POSITIVE) {
        return [(a, b), (b, c), (c, a)]
            .into_iter()
            .map(|(s, e)| closest_point_on_segment(p, s, e))
            .min_by(|x, y| (x - p).norm_squared().total_cmp(&(y - p).norm_squared()))
            .unwrap_or(a);
    }
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

pub fn closest_point_on_segment(p: &Point, a: Point, b: Point) -> Point {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return a;
    }
    a + ab * ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
}

pub fn point_triangle_distance(p: &Point, tri: [Point; 3]) -> f64 {
    (closest_point_on_triangle(p, tri) - p).norm()
}

/// Sparse uniform grid; every triangle is listed in each cell its bounding
/// box touches.
#[derive(Debug, Clone)]
pub struct TriangleGrid {
    lo: Point,
    hi: Point,
    cell: f64,
    dims: [i64; 3],
    cells: HashMap<[i64; 3], Vec<u32>>,
}

const MAX_CELLS_PER_AXIS: f64 = 256.0;

impl TriangleGrid {
    pub fn build(mesh: &TriangleMesh) -> Result<Self> {
        if mesh.triangles().is_empty() {
            return Err(Error::InvalidData("mesh has no triangles".into()));
        }
        let tris: Vec<[Point; 3]> = (0..mesh.triangles().len()).map(|i| mesh.triangle(i)).collect();
        let mut lo = tris[0][0];
        let mut hi = lo;
        let mut edge = 0.0;
        for t in &tris {
            for v in t {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
            edge += (t[1] - t[0]).norm() + (t[2] - t[1]).norm() + (t[0] - t[2]).norm();
        }
        let extent = (hi - lo).max();
        let mean_edge = edge / (3 * tris.len()) as f64;
        let mut cell = mean_edge.max(extent / MAX_CELLS_PER_AXIS);
        if !(cell > 0.0) {
            cell = 1.0;
        }
        let key = |p: &Point| -> [i64; 3] { [0, 1, 2].map(|a| ((p[a] - lo[a]) / cell).floor() as i64) };
        let top = key(&hi);
        let dims = [0, 1, 2].map(|a| top[a] + 1);
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::default();
        for (i, t) in tris.iter().enumerate() {
            let (mut tl, mut th) = (t[0], t[0]);
            for v in &t[1..] {
                tl = tl.inf(v);
                th = th.sup(v);
            }
            let (a, b) = (key(&tl), key(&th));
            for x in a[0]..=b[0] {
                for y in a[1]..=b[1] {
                    for z in a[2]..=b[2] {
                        cells.entry([x, y, z]).or_default().push(i as u32);
                    }
                }
            }
        }
        Ok(TriangleGrid {
            lo,
            hi,
            cell,
            dims,
            cells,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    /// Exact distance from `p` to the nearest triangle of `mesh`, which must
    /// be the mesh the grid was built from.
    pub fn distance(&self, p: &Point, mesh: &TriangleMesh) -> f64 {
        // q is the projection of p onto the grid box, so for any x in the box
        // |p - x|^2 >= |p - q|^2 + |q - x|^2.
        let q = p.sup(&self.lo).inf(&self.hi);
        let out2 = (p - q).norm_squared();
        let c0 = [0, 1, 2].map(|a| (((q[a] - self.lo[a]) / self.cell).floor() as i64).clamp(0, self.dims[a] - 1));
        let max_ring = (0..3).map(|a| c0[a].max(self.dims[a] - 1 - c0[a])).max().unwrap_or(0);
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            self.visit_ring(c0, ring, |ids| {
                for &t in ids {
                    let d = point_triangle_distance(p, mesh.triangle(t as usize));
                    if d < best {
                        best = d;
                    }
                }
            });
            let bound = (ring as f64) * self.cell;
            if best * best <= out2 + bound * bound {
                break;
            }
        }
        best
    }

    fn visit_ring(&self, c: [i64; 3], ring: i64, mut f: impl FnMut(&[u32])) {
        let lo = [0, 1, 2].map(|a| (c[a] - ring).max(0));
        let hi = [0, 1, 2].map(|a| (c[a] + ring).min(self.dims[a] - 1));
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    let cheb = (x - c[0]).abs().max((y - c[1]).abs()).max((z - c[2]).abs());
                    if cheb != ring {
                        continue;
                    }
                    if let Some(ids) = self.cells.get(&[x, y, z]) {
                        f(ids);
                    }
                }
            }
        }
    }
}

/// Distance from `p` to the surface of `mesh` using the acceleration grid.
pub fn point_to_mesh_distance(p: &Point, mesh: &TriangleMesh, accel: &TriangleGrid) -> f64 {
    accel.distance(p, mesh)
}

/// All-triangle scan, for small meshes and testing.
pub fn point_to_mesh_distance_brute(p: &Point, mesh: &TriangleMesh) -> f64 {
    (0..mesh.triangles().len())
        .map(|i| point_triangle_distance(p, mesh.triangle(i)))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{shapes, Vec3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: project onto the plane, keep the projection when
    /// it is inside (barycentric test), otherwise take the best edge.
    fn oracle(p: &Point, [a, b, c]: [Point; 3]) -> f64 {
        let n = (b - a).cross(&(c - a));
        let edges = [(a, b), (b, c), (c, a)]
            .map(|(s, e)| (closest_point_on_segment(p, s, e) - p).norm())
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if n.norm() == 0.0 {
            return edges;
        }
        let n = n.normalize();
        let h = (p - a).dot(&n);
        let proj = p - n * h;
        let inside = [(a, b), (b, c), (c, a)].iter().all(|(s, e)| (e - s).cross(&(proj - s)).dot(&n) >= 0.0);
        if inside {
            h.abs()
        } else {
            edges
        }
    }

    #[test]
    fn hand_cases() {
        let tri = [Point::new(-1.0, -1.0, 0.0), Point::new(2.0, -1.0, 0.0), Point::new(-1.0, 2.0, 0.0)];
        assert_eq!(point_triangle_distance(&Point::new(0.0, 0.0, 1.0), tri), 1.0);
        assert_eq!(point_triangle_distance(&Point::new(0.0, 0.0, 0.0), tri), 0.0);
        assert!((point_triangle_distance(&Point::new(-2.0, -2.0, 0.0), tri) - 2f64.sqrt()).abs() < 1e-15);
        assert!((point_triangle_distance(&Point::new(0.5, -3.0, 0.0), tri) - 2.0).abs() < 1e-15);
        let line = [Point::origin(), Point::new(1.0, 0.0, 0.0), Point::new(2.0, 0.0, 0.0)];
        assert!((point_triangle_distance(&Point::new(1.5, 1.0, 0.0), line) - 1.0).abs() < 1e-15);
        let dot = [Point::origin(); 3];
        assert_eq!(point_triangle_distance(&Point::new(0.0, 3.0, 4.0), dot), 5.0);
    }

    #[test]
    fn matches_oracle_on_random_triangles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = || Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        for _ in 0..20_000 {
            let tri = [r(), r(), r()];
            let p = r() * 2.0;
            let (a, b) = (point_triangle_distance(&p, tri), oracle(&p, tri));
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn grid_matches_brute_force() {
        let meshes = [shapes::icosphere(2), shapes::torus(1.0, 0.3, 16, 8), shapes::cube(), shapes::grid_plane(10, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for mesh in &meshes {
            let grid = TriangleGrid::build(mesh).unwrap();
            for _ in 0..1000 {
                let p = Point::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                let a = point_to_mesh_distance(&p, mesh, &grid);
                let b = point_to_mesh_distance_brute(&p, mesh);
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn far_points_use_whole_grid() {
        let mesh = shapes::grid_plane(20, 1.0);
        let grid = TriangleGrid::build(&mesh).unwrap();
        let p = Point::new(50.0, -40.0, 3.0);
        assert!((point_to_mesh_distance(&p, &mesh, &grid) - point_to_mesh_distance_brute(&p, &mesh)).abs() < 1e-9);
    }

    #[test]
    fn empty_mesh_rejected() {
        let m = TriangleMesh::new(vec![Point::origin()], vec![]).unwrap();
        assert!(TriangleGrid::build(&m).is_err());
    }

    proptest! {
        #[test]
        fn rigid_motion_invariant(
            p in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
            axis in (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
            angle in 0.0f64..6.2,
        ) {
            let tri = [Point::new(0.1, 0.2, 0.0), Point::new(1.0, -0.3, 0.4), Point::new(-0.5, 0.9, -0.2)];
            let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vec3::new(axis.0, axis.1, axis.2)), angle);
            let t = Vec3::new(3.0, -1.0, 0.5);
            let q = Point::new(p.0, p.1, p.2);
            let moved = tri.map(|v| rot * v + t);
            let a = point_triangle_distance(&q, tri);
            let b = point_triangle_distance(&(rot * q + t), moved);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
