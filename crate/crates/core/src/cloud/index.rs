use rustc_hash::FxHashMap as HashMap;

use super::{check_finite, Point};
use crate::error::{Error, Result};

type CellKey = [i64; 3];

/// Uniform hash grid over a borrowed set of positions.
///
/// Point ids are sorted by cell so that every occupied cell is a contiguous
/// range of `order`. Queries with a radius up to the cell size scan the 3x3x3
/// block around the query cell; larger radii scan a proportionally larger
/// block.
#[derive(Debug, Clone)]
pub struct NeighborIndex<'a> {
    points: &'a [Point],
    cell_size: f64,
    order: Vec<u32>,
    cells: HashMap<CellKey, (u32, u32)>,
    cell_lo: CellKey,
    cell_hi: CellKey,
}

impl<'a> NeighborIndex<'a> {
    pub fn build(points: &'a [Point], cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::param("cell_size", format!("must be > 0, got {cell_size}")));
        }
        if points.is_empty() {
            return Err(Error::InvalidData("cannot index an empty point set".into()));
        }
        check_finite(points)?;

        let keys: Vec<CellKey> = points.iter().map(|p| key_of(p, cell_size)).collect();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        order.sort_unstable_by_key(|&i| (keys[i as usize], i));

        let mut cells = HashMap::default();
        let mut cell_lo = keys[0];
        let mut cell_hi = keys[0];
        let mut start = 0usize;
        for i in 1..=order.len() {
            if i == order.len() || keys[order[i] as usize] != keys[order[start] as usize] {
                let k = keys[order[start] as usize];
                for a in 0..3 {
                    cell_lo[a] = cell_lo[a].min(k[a]);
                    cell_hi[a] = cell_hi[a].max(k[a]);
                }
                cells.insert(k, (start as u32, i as u32));
                start = i;
            }
        }

        Ok(Self {
            points,
            cell_size,
            order,
            cells,
            cell_lo,
            cell_hi,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn points(&self) -> &'a [Point] {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Ids within `radius` of `center` (inclusive), minus `exclude`.
    /// Order is unspecified.
    pub fn radius_query(&self, center: &Point, radius: f64, exclude: Option<usize>) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(center, radius, |id, _| {
            if Some(id) != exclude {
                out.push(id);
            }
        });
        out
    }

    /// Calls `f(id, squared_distance)` for every point within `radius`.
    /// Points are visited in ascending cell order then ascending id.
    pub fn for_each_within(&self, center: &Point, radius: f64, mut f: impl FnMut(usize, f64)) {
        if !(radius >= 0.0) {
            return;
        }
        let r2 = radius * radius;
        let reach = (radius / self.cell_size).ceil().max(1.0) as i64;
        let c = key_of(center, self.cell_size);
        let lo = [0, 1, 2].map(|a| (c[a] - reach).max(self.cell_lo[a]));
        let hi = [0, 1, 2].map(|a| (c[a] + reach).min(self.cell_hi[a]));
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    if let Some(&(s, e)) = self.cells.get(&[x, y, z]) {
                        for &id in &self.order[s as usize..e as usize] {
                            let d2 = (self.points[id as usize] - center).norm_squared();
                            if d2 <= r2 {
                                f(id as usize, d2);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Nearest indexed point to `p` as `(id, distance)`. Ties resolve to the
    /// smallest id.
    pub fn nearest(&self, p: &Point) -> (usize, f64) {
        let c = key_of(p, self.cell_size);
        // Largest ring that can still contain an occupied cell.
        let max_ring = (0..3)
            .map(|a| (c[a] - self.cell_lo[a]).abs().max((self.cell_hi[a] - c[a]).abs()))
            .max()
            .unwrap_or(0);
        let mut best = (usize::MAX, f64::INFINITY);
        for ring in 0..=max_ring {
            self.scan_ring(c, ring, |id| {
                let d2 = (self.points[id] - p).norm_squared();
                if d2 < best.1 || (d2 == best.1 && id < best.0) {
                    best = (id, d2);
                }
            });
            // Cells in ring + 1 are at least `ring * cell_size` away.
            let bound = ring as f64 * self.cell_size;
            if best.0 != usize::MAX && best.1 < bound * bound {
                break;
            }
        }
        (best.0, best.1.sqrt())
    }

    fn scan_ring(&self, c: CellKey, ring: i64, mut f: impl FnMut(usize)) {
        let lo = [0, 1, 2].map(|a| (c[a] - ring).max(self.cell_lo[a]));
        let hi = [0, 1, 2].map(|a| (c[a] + ring).min(self.cell_hi[a]));
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                let on_shell_xy = (x - c[0]).abs() == ring || (y - c[1]).abs() == ring;
                for z in lo[2]..=hi[2] {
                    if !on_shell_xy && (z - c[2]).abs() != ring {
                        continue;
                    }
                    if let Some(&(s, e)) = self.cells.get(&[x, y, z]) {
                        for &id in &self.order[s as usize..e as usize] {
                            f(id as usize);
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn key_of(p: &Point, cell: f64) -> CellKey {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}
