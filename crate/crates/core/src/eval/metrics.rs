use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::surface::{point_to_mesh_distance, TriangleGrid};
use crate::cloud::{bbox_diagonal, NeighborIndex, Point, PointCloud, Rgb, TriangleMesh};
use crate::error::{Error, Result};

/// Upper end of the histogram and color ramps, as a fraction of the diagonal.
pub const ERROR_RANGE_FRAC: f64 = 0.02;
pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges as fractions of the diagonal, from 0 to 2%.
    pub edges: Vec<f64>,
    /// One count per bin; the last entry counts everything beyond 2%.
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn overflow(&self) -> usize {
        self.counts.last().copied().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lo_frac,hi_frac,count\n");
        let n = self.edges.len() - 1;
        for (i, c) in self.counts.iter().enumerate() {
            if i < n {
                let _ = writeln!(s, "{},{},{}", self.edges[i], self.edges[i + 1], c);
            } else {
                let _ = writeln!(s, "{},inf,{}", self.edges[n], c);
            }
        }
        s
    }
}

/// Counts of `distance / diagonal` over `bins` equal bins on `[0, 2%)` plus
/// an overflow bin.
pub fn error_histogram(distances: &[f64], diagonal: f64, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::param("bins", "must be >= 1"));
    }
    if !(diagonal > 0.0 && diagonal.is_finite()) {
        return Err(Error::param("diagonal", format!("must be > 0, got {diagonal}")));
    }
    let width = ERROR_RANGE_FRAC / bins as f64;
    let edges = (0..=bins).map(|i| i as f64 * width).collect();
    let mut counts = vec![0usize; bins + 1];
    for &d in distances {
        let f = d / diagonal;
        let b = if f >= ERROR_RANGE_FRAC || f.is_nan() {
            bins
        } else {
            ((f / width) as usize).min(bins - 1)
        };
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `term1 + term2`.
    pub chamfer: f64,
    /// Mean distance from predicted points to the surface.
    pub term1: f64,
    /// Mean distance from clean points to their nearest prediction.
    pub term2: f64,
    /// Bounding-box diagonal of the clean cloud.
    pub diagonal: f64,
    pub chamfer_pct: f64,
    pub term1_pct: f64,
    pub term2_pct: f64,
    pub histogram: Histogram,
    /// Per predicted point distance to the surface.
    pub distances: Vec<f64>,
}

impl EvalReport {
    /// Report from per-point surface distances of the prediction and
    /// per-point nearest-prediction distances of the clean cloud.
    pub fn from_distances(term1_d: Vec<f64>, term2_d: &[f64], diagonal: f64) -> Result<Self> {
        let term1 = mean(&term1_d);
        let term2 = mean(term2_d);
        let chamfer = term1 + term2;
        let pct = |v: f64| 100.0 * v / diagonal;
        Ok(EvalReport {
            chamfer,
            term1,
            term2,
            diagonal,
            chamfer_pct: pct(chamfer),
            term1_pct: pct(term1),
            term2_pct: pct(term2),
            histogram: error_histogram(&term1_d, diagonal, DEFAULT_BINS)?,
            distances: term1_d,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("metric,value,percent_of_diagonal\n");
        for (k, v, p) in [
            ("chamfer", self.chamfer, self.chamfer_pct),
            ("term1", self.term1, self.term1_pct),
            ("term2", self.term2, self.term2_pct),
        ] {
            let _ = writeln!(s, "{k},{v:.12e},{p:.9}");
        }
        let _ = writeln!(s, "diagonal,{:.12e},100", self.diagonal);
        s
    }

    pub fn distances_csv(&self) -> String {
        let mut s = String::from("point,distance\n");
        for (i, d) in self.distances.iter().enumerate() {
            let _ = writeln!(s, "{i},{d:.12e}");
        }
        s
    }

    /// Writes `report.json`, `report.csv`, `histogram.csv` and
    /// `distances.csv` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("report.json", self.to_json()),
            ("report.csv", self.summary_csv()),
            ("histogram.csv", self.histogram.to_csv()),
            ("distances.csv", self.distances_csv()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn nonempty(cloud: &PointCloud, what: &str) -> Result<()> {
    if cloud.is_empty() {
        Err(Error::InvalidData(format!("{what} cloud is empty")))
    } else {
        Ok(())
    }
}

/// Distance from every clean point to its nearest prediction.
pub fn nearest_distances(from: &[Point], to: &[Point]) -> Result<Vec<f64>> {
    let diag = bbox_diagonal(to);
    let cell = if diag > 0.0 {
        diag / (to.len() as f64).sqrt().max(1.0)
    } else {
        1.0
    };
    let index = NeighborIndex::build(to, cell)?;
    Ok(from.par_iter().map(|p| index.nearest(p).1).collect())
}

/// Chamfer distance of `pred` against the continuous surface and the clean
/// samples.
pub fn chamfer(pred: &PointCloud, surface: &TriangleMesh, clean: &PointCloud) -> Result<EvalReport> {
    let grid = TriangleGrid::build(surface)?;
    chamfer_with(pred, surface, &grid, clean)
}

/// [`chamfer`] with a prebuilt acceleration grid.
pub fn chamfer_with(pred: &PointCloud, surface: &TriangleMesh, grid: &TriangleGrid, clean: &PointCloud) -> Result<EvalReport> {
    nonempty(pred, "predicted")?;
    nonempty(clean, "clean")?;
    let t1: Vec<f64> = pred
        .positions()
        .par_iter()
        .map(|p| point_to_mesh_distance(p, surface, grid))
        .collect();
    let t2 = nearest_distances(clean.positions(), pred.positions())?;
    EvalReport::from_distances(t1, &t2, clean.bbox_diagonal().max(f64::MIN_POSITIVE))
}

/// Fallback when no mesh exists: the surface term is measured against the
/// clean samples themselves.
pub fn chamfer_sampled(pred: &PointCloud, clean: &PointCloud) -> Result<EvalReport> {
    nonempty(pred, "predicted")?;
    nonempty(clean, "clean")?;
    let t1 = nearest_distances(pred.positions(), clean.positions())?;
    let t2 = nearest_distances(clean.positions(), pred.positions())?;
    EvalReport::from_distances(t1, &t2, clean.bbox_diagonal().max(f64::MIN_POSITIVE))
}

/// Blue at distance 0 to yellow at 2% of the mesh diagonal, linear, clamped.
pub fn error_color(distance: f64, diagonal: f64) -> Rgb {
    let t = (distance / (ERROR_RANGE_FRAC * diagonal)).clamp(0.0, 1.0);
    [t, t, 1.0 - t]
}

pub fn error_colorize(cloud: &PointCloud, mesh: &TriangleMesh) -> Result<PointCloud> {
    nonempty(cloud, "input")?;
    let grid = TriangleGrid::build(mesh)?;
    let diag = mesh.bbox_diagonal();
    let colors = cloud
        .positions()
        .par_iter()
        .map(|p| error_color(point_to_mesh_distance(p, mesh, &grid), diag))
        .collect();
    let mut out = cloud.clone();
    out.set_colors(Some(colors))?;
    Ok(out)
}
