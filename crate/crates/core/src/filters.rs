//! Classical baselines: PCA normals, mean filter and the normal-displacement
//! bilateral filter.

use rayon::prelude::*;

use crate::cloud::{NeighborIndex, Point, PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::linalg::{covariance, sorted_eigen};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub radius: f64,
    pub sigma_d: f64,
    /// Range bandwidth along the normal.
    pub sigma_n: f64,
    pub iterations: usize,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("radius", self.radius), ("sigma_d", self.sigma_d), ("sigma_n", self.sigma_n)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanWeighting {
    #[default]
    Uniform,
    /// Gaussian weights with standard deviation `radius / 2`.
    Gaussian,
}

fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::param("radius", format!("must be > 0, got {radius}")))
    }
}

/// Smallest-eigenvalue direction of the covariance of each point's
/// neighborhood (self included), oriented away from the neighborhood
/// centroid. Neighborhoods with fewer than 3 points get the global PCA normal.
pub fn estimate_normals(cloud: &PointCloud, radius: f64) -> Result<Vec<Vec3>> {
    check_radius(radius)?;
    let pts = cloud.positions();
    let index = NeighborIndex::build(pts, radius)?;
    let global = covariance(pts)
        .map(|(_, c)| sorted_eigen(c)[0].1)
        .unwrap_or_else(Vec3::z);
    Ok(pts
        .par_iter()
        .map(|p| {
            let mut ids = index.radius_query(p, radius, None);
            if ids.len() < 3 {
                return global;
            }
            ids.sort_unstable();
            let (centroid, cov) = covariance(ids.iter().map(|&i| &pts[i])).expect("non-empty");
            let n = sorted_eigen(cov)[0].1.normalize();
            if n.dot(&(p - centroid)) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect())
}

pub fn mean_filter(cloud: &PointCloud, radius: f64) -> Result<PointCloud> {
    mean_filter_weighted(cloud, radius, MeanWeighting::Uniform)
}

/// Replaces each point by the (weighted) centroid of its neighborhood,
/// itself included.
pub fn mean_filter_weighted(cloud: &PointCloud, radius: f64, weighting: MeanWeighting) -> Result<PointCloud> {
    check_radius(radius)?;
    let pts = cloud.positions();
    let index = NeighborIndex::build(pts, radius)?;
    let inv2s2 = 1.0 / (2.0 * (radius / 2.0).powi(2));
    let out: Vec<Point> = pts
        .par_iter()
        .map(|p| {
            let mut ids = index.radius_query(p, radius, None);
            ids.sort_unstable();
            let mut acc = Vec3::zeros();
            let mut wsum = 0.0;
            for i in ids {
                let w = match weighting {
                    MeanWeighting::Uniform => 1.0,
                    MeanWeighting::Gaussian => (-(pts[i] - p).norm_squared() * inv2s2).exp(),
                };
                acc += pts[i].coords * w;
                wsum += w;
            }
            Point::from(acc / wsum)
        })
        .collect();
    let mut res = cloud.clone();
    res.set_positions(out)?;
    Ok(res)
}

/// Signed normal offset of one point: weighted mean of `<p_i - p, n>` over
/// neighbors `i != self`, weights Gaussian in distance and in normal offset.
fn bilateral_offset(pts: &[Point], p: usize, n: &Vec3, neighbors: &[usize], cfg: &FilterConfig) -> f64 {
    let (kd, kn) = (1.0 / (2.0 * cfg.sigma_d * cfg.sigma_d), 1.0 / (2.0 * cfg.sigma_n * cfg.sigma_n));
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in neighbors {
        let d = pts[i] - pts[p];
        let h = d.dot(n);
        let w = (-d.norm_squared() * kd).exp() * (-h * h * kn).exp();
        num += w * h;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn bilateral_filter(cloud: &PointCloud, cfg: &FilterConfig) -> Result<PointCloud> {
    cfg.validate()?;
    let mut cur = cloud.clone();
    for _ in 0..cfg.iterations {
        let normals = estimate_normals(&cur, cfg.radius)?;
        let pts = cur.positions();
        let index = NeighborIndex::build(pts, cfg.radius)?;
        let out: Vec<Point> = (0..pts.len())
            .into_par_iter()
            .map(|p| {
                let mut ids = index.radius_query(&pts[p], cfg.radius, Some(p));
                ids.sort_unstable();
                pts[p] + normals[p] * bilateral_offset(pts, p, &normals[p], &ids, cfg)
            })
            .collect();
        cur.set_positions(out)?;
    }
    Ok(cur)
}

/// Candidate with the lowest finite objective. Ties keep the earliest.
pub fn grid_search<T: Clone>(candidates: &[T], mut objective: impl FnMut(&T) -> Result<f64>) -> Result<(T, f64)> {
    let mut best: Option<(T, f64)> = None;
    for c in candidates {
        let v = objective(c)?;
        if v.is_finite() && best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((c.clone(), v));
        }
    }
    best.ok_or_else(|| Error::InvalidData("no candidate produced a finite objective".into()))
}

/// Mean-filter radii to try, as absolute lengths for a cloud of diagonal `diag`.
pub fn mean_grid(diag: f64) -> Vec<f64> {
    [0.01, 0.015, 0.02, 0.03, 0.04, 0.06].iter().map(|f| f * diag).collect()
}

pub fn bilateral_grid(diag: f64) -> Vec<FilterConfig> {
    let mut out = Vec::new();
    for &r in &[0.02, 0.03, 0.04, 0.06] {
        for &sn in &[0.005, 0.01, 0.02] {
            for &it in &[1, 2, 3] {
                out.push(FilterConfig {
                    radius: r * diag,
                    sigma_d: r * diag / 2.0,
                    sigma_n: sn * diag,
                    iterations: it,
                });
            }
        }
    }
    out
}
