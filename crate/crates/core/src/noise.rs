//! Synthetic corruption: isotropic Gaussian noise and a range-scanner model
//! with a per-ring distance bias plus per-ray Gaussian noise.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{Point, PointCloud, Vec3};
use crate::error::{Error, Result};

pub const DEFAULT_RING_COUNT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// Per-coordinate N(0, (std_frac * diagonal)^2).
    Gaussian { std_frac: f64 },
    /// Displacement along the ray from `origin`: a bias shared by all points
    /// of an elevation ring plus independent per-point noise.
    Scanner {
        origin: Point,
        bias_std_frac: f64,
        ray_std_frac: f64,
        ring_count: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = |v: f64| v >= 0.0 && v.is_finite();
        match self.kind {
            NoiseKind::Gaussian { std_frac } if !frac_ok(std_frac) => {
                Err(Error::param("std_frac", format!("must be >= 0, got {std_frac}")))
            }
            NoiseKind::Scanner {
                bias_std_frac,
                ray_std_frac,
                ring_count,
                ..
            } => {
                if !frac_ok(bias_std_frac) || !frac_ok(ray_std_frac) {
                    Err(Error::param("std_frac", "scanner std fractions must be >= 0"))
                } else if ring_count == 0 {
                    Err(Error::param("ring_count", "must be >= 1"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, cloud: &PointCloud) -> Result<PointCloud> {
        match self.kind {
            NoiseKind::Gaussian { std_frac } => corrupt_gaussian(cloud, std_frac, self.seed),
            NoiseKind::Scanner { .. } => corrupt_scanner(cloud, self),
        }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NoiseKind::Gaussian { std_frac } => {
                write!(f, "noise=gaussian std_frac={std_frac} seed={}", self.seed)
            }
            NoiseKind::Scanner {
                origin,
                bias_std_frac,
                ray_std_frac,
                ring_count,
            } => write!(
                f,
                "noise=scanner origin={},{},{} bias_std_frac={bias_std_frac} ray_std_frac={ray_std_frac} rings={ring_count} seed={}",
                origin.x, origin.y, origin.z, self.seed
            ),
        }
    }
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("std is finite and non-negative")
}

pub fn corrupt_gaussian(cloud: &PointCloud, std_frac: f64, seed: u64) -> Result<PointCloud> {
    NoiseSpec {
        kind: NoiseKind::Gaussian { std_frac },
        seed,
    }
    .validate()?;
    if std_frac == 0.0 {
        return Ok(cloud.clone());
    }
    let dist = normal(std_frac * cloud.bbox_diagonal());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moved = cloud
        .positions()
        .iter()
        .map(|p| {
            let d = Vec3::new(dist.sample(&mut rng), dist.sample(&mut rng), dist.sample(&mut rng));
            p + d
        })
        .collect();
    let mut out = cloud.clone();
    out.set_positions(moved)?;
    Ok(out)
}

/// Elevation ring of every point, with rings spanning the cloud's observed
/// elevation range in equal angular bins.
pub fn ring_assignment(cloud: &PointCloud, origin: &Point, ring_count: usize) -> Result<Vec<usize>> {
    let mut elev = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.positions().iter().enumerate() {
        let ray = p - origin;
        let len = ray.norm();
        if !(len > 0.0) {
            return Err(Error::InvalidData(format!("point {i} coincides with the scanner origin")));
        }
        elev.push((ray.z / len).clamp(-1.0, 1.0).asin());
    }
    let lo = elev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = elev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    Ok(elev
        .iter()
        .map(|&e| {
            if span > 0.0 {
                (((e - lo) / span * ring_count as f64) as usize).min(ring_count - 1)
            } else {
                0
            }
        })
        .collect())
}

pub fn corrupt_scanner(cloud: &PointCloud, spec: &NoiseSpec) -> Result<PointCloud> {
    spec.validate()?;
    let NoiseKind::Scanner {
        origin,
        bias_std_frac,
        ray_std_frac,
        ring_count,
    } = spec.kind
    else {
        return Err(Error::param("kind", "expected scanner noise"));
    };
    let rings = ring_assignment(cloud, &origin, ring_count)?;
    let diag = cloud.bbox_diagonal();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bias_dist = normal(bias_std_frac * diag);
    let ray_dist = normal(ray_std_frac * diag);
    let bias: Vec<f64> = (0..ring_count).map(|_| bias_dist.sample(&mut rng)).collect();
    let moved = cloud
        .positions()
        .iter()
        .zip(&rings)
        .map(|(p, &ring)| {
            let u = (p - origin).normalize();
            p + u * (bias[ring] + ray_dist.sample(&mut rng))
        })
        .collect();
    let mut out = cloud.clone();
    out.set_positions(moved)?;
    Ok(out)
}
