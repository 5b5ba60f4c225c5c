//! Poisson-disk sampling of triangle surfaces and of existing point sets.

use rustc_hash::FxHashMap as HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Point, PointCloud, TriangleMesh, Vec3};
use crate::error::{Error, Result};

const MAX_CONSECUTIVE_FAILURES: usize = 30;

/// Dynamic hash grid with cell size equal to the rejection distance.
struct DiskGrid {
    cell: f64,
    min_dist2: f64,
    cells: HashMap<[i64; 3], Vec<Point>>,
}

impl DiskGrid {
    fn new(min_dist: f64) -> Self {
        Self {
            cell: min_dist,
            min_dist2: min_dist * min_dist,
            cells: HashMap::default(),
        }
    }

    fn key(&self, p: &Point) -> [i64; 3] {
        [
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        ]
    }

    /// Inserts `p` unless an accepted point lies closer than the min distance.
    fn try_insert(&mut self, p: Point) -> bool {
        let k = self.key(&p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(v) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if v.iter().any(|q| (q - p).norm_squared() < self.min_dist2) {
                            return false;
                        }
                    }
                }
            }
        }
        self.cells.entry(k).or_default().push(p);
        true
    }
}

/// One candidate position with the triangle and barycentric coordinates it
/// came from (used to interpolate normals).
#[derive(Clone, Copy)]
struct Candidate {
    tri: u32,
    u: f64,
    v: f64,
}

fn point_of(mesh: &TriangleMesh, c: Candidate) -> Point {
    let [a, b, d] = mesh.triangle(c.tri as usize);
    a + (b - a) * c.u + (d - a) * c.v
}

fn normal_of(mesh: &TriangleMesh, c: Candidate) -> Vec3 {
    let t = mesh.triangles()[c.tri as usize];
    if let Some(n) = mesh.normals() {
        let w = 1.0 - c.u - c.v;
        let interp = n[t[0] as usize] * w + n[t[1] as usize] * c.u + n[t[2] as usize] * c.v;
        if let Some(unit) = interp.try_normalize(1e-12) {
            return unit;
        }
    }
    let [a, b, d] = mesh.triangle(c.tri as usize);
    (b - a).cross(&(d - a)).normalize()
}

/// Poisson-disk sample of the mesh surface. See [`sample_surface`].
pub fn poisson_disk_sample(mesh: &TriangleMesh, min_dist: f64, seed: u64) -> Result<PointCloud> {
    sample_surface(mesh, min_dist, seed).map(|(cloud, _)| cloud)
}

/// Poisson-disk sample of the mesh surface together with the surface normal at
/// every sample (interpolated vertex normals when the mesh has them, face
/// normals otherwise).
///
/// Dart throwing over area-weighted uniform triangle points runs until 30
/// consecutive rejections. A coverage pass then offers a shuffled barycentric
/// lattice with spacing `min_dist / 2` on every triangle, which makes the
/// result maximal: every surface point is within `1.5 * min_dist` of a sample.
pub fn sample_surface(
    mesh: &TriangleMesh,
    min_dist: f64,
    seed: u64,
) -> Result<(PointCloud, Vec<Vec3>)> {
    if mesh.is_empty() {
        return Err(Error::InvalidData("cannot sample an empty mesh".into()));
    }
    if !(min_dist > 0.0 && min_dist.is_finite()) {
        return Err(Error::param("min_dist", format!("must be > 0, got {min_dist}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0;
    for i in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.triangle(i);
        total += 0.5 * (b - a).cross(&(c - a)).norm();
        cumulative.push(total);
    }

    let mut grid = DiskGrid::new(min_dist);
    let mut accepted: Vec<Candidate> = Vec::new();
    let mut accept = |grid: &mut DiskGrid, c: Candidate| {
        if grid.try_insert(point_of(mesh, c)) {
            accepted.push(c);
            true
        } else {
            false
        }
    };

    let mut failures = 0;
    while failures < MAX_CONSECUTIVE_FAILURES {
        let x = rng.random::<f64>() * total;
        let tri = cumulative.partition_point(|&c| c <= x).min(cumulative.len() - 1);
        let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        if accept(&mut grid, Candidate { tri: tri as u32, u, v }) {
            failures = 0;
        } else {
            failures += 1;
        }
    }

    let lattice_spacing = 0.5 * min_dist;
    let mut lattice = Vec::new();
    for i in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.triangle(i);
        let longest = (b - a).norm().max((c - b).norm()).max((a - c).norm());
        let m = (longest / lattice_spacing).ceil().max(1.0) as usize;
        for s in 0..=m {
            for t in 0..=(m - s) {
                lattice.push(Candidate {
                    tri: i as u32,
                    u: s as f64 / m as f64,
                    v: t as f64 / m as f64,
                });
            }
        }
    }
    lattice.shuffle(&mut rng);
    for c in lattice {
        accept(&mut grid, c);
    }

    let positions = accepted.iter().map(|&c| point_of(mesh, c)).collect();
    let normals = accepted.iter().map(|&c| normal_of(mesh, c)).collect();
    Ok((PointCloud::new(positions)?, normals))
}

/// Finds a `min_dist` whose Poisson-disk sample has roughly `count` points
/// (bisection on the sample count, same seed throughout).
pub fn min_dist_for_count(mesh: &TriangleMesh, count: usize, seed: u64) -> Result<f64> {
    if count == 0 {
        return Err(Error::param("count", "must be >= 1"));
    }
    let area = mesh.area();
    if area <= 0.0 {
        return Err(Error::InvalidData("mesh has zero area".into()));
    }
    // Maximal 2D Poisson-disk sets cover about 0.7 d^2 of area per sample.
    let guess = (0.7 * area / count as f64).sqrt();
    let (mut lo, mut hi) = (guess * 0.5, guess * 2.0);
    let mut best = (guess, usize::MAX);
    for _ in 0..14 {
        let mid = 0.5 * (lo + hi);
        let n = poisson_disk_sample(mesh, mid, seed)?.len();
        if n.abs_diff(count) < best.1 {
            best = (mid, n.abs_diff(count));
        }
        if n > count {
            lo = mid;
        } else {
            hi = mid;
        }
        if n.abs_diff(count) * 200 < count {
            break;
        }
    }
    Ok(best.0)
}

/// Greedy Poisson-disk subset of `points`: visits points in a seeded random
/// order and keeps those farther than `radius` from every kept point.
/// Returns kept ids in ascending order.
pub fn poisson_subsample(points: &[Point], radius: f64, seed: u64) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if !(radius > 0.0) {
        return (0..points.len()).collect();
    }
    let mut grid = DiskGrid::new(radius);
    let mut kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| grid.try_insert(points[i]))
        .collect();
    kept.sort_unstable();
    kept
}
