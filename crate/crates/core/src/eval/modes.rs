//! Mean-shift modes of the noisy point density and the closed-form circle
//! case they are checked against.

use rayon::prelude::*;

use crate::cloud::{NeighborIndex, Point, PointCloud, Vec3};
use crate::error::{Error, Result};

pub const MAX_MEAN_SHIFT_ITERS: usize = 500;
pub const STEP_TOL_FRAC: f64 = 1e-6;
/// Gaussian weights beyond this many bandwidths are dropped (below 2e-8).
pub const KERNEL_CUTOFF: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeResult {
    /// Converged modes, in seed order.
    pub modes: Vec<Point>,
    /// Seed index of every entry of `modes`.
    pub seed_ids: Vec<usize>,
    /// Seeds that did not converge.
    pub failed: Vec<usize>,
}

/// Gaussian mean-shift from every seed until the step is below
/// `1e-6 * diagonal` or 500 iterations pass.
pub fn mode_manifold(noisy: &PointCloud, bandwidth: f64, seeds: &[Point]) -> Result<ModeResult> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::param("bandwidth", format!("must be > 0, got {bandwidth}")));
    }
    if noisy.is_empty() {
        return Err(Error::InvalidData("noisy cloud is empty".into()));
    }
    let pts = noisy.positions();
    let tol = STEP_TOL_FRAC * noisy.bbox_diagonal().max(f64::MIN_POSITIVE);
    let reach = KERNEL_CUTOFF * bandwidth;
    let index = NeighborIndex::build(pts, reach)?;
    let k = -0.5 / (bandwidth * bandwidth);
    let results: Vec<Option<Point>> = seeds
        .par_iter()
        .map(|s| {
            let mut x = *s;
            for _ in 0..MAX_MEAN_SHIFT_ITERS {
                let (mut acc, mut ws) = (Vec3::zeros(), 0.0);
                index.for_each_within(&x, reach, |j, d2| {
                    let w = (k * d2).exp();
                    acc += pts[j].coords * w;
                    ws += w;
                });
                if !(ws > 0.0) {
                    return None;
                }
                let next = Point::from(acc / ws);
                let step = (next - x).norm();
                x = next;
                if step < tol {
                    return Some(x);
                }
            }
            None
        })
        .collect();
    let mut out = ModeResult {
        modes: Vec::new(),
        seed_ids: Vec::new(),
        failed: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Some(m) => {
                out.modes.push(m);
                out.seed_ids.push(i);
            }
            None => out.failed.push(i),
        }
    }
    if !out.failed.is_empty() {
        log::warn!("{} of {} mean-shift seeds did not converge", out.failed.len(), seeds.len());
    }
    Ok(out)
}

/// `ln I0(x)` for `x >= 0`: power series below 20, asymptotic expansion
/// above.
pub fn ln_bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x < 20.0 {
        let q = 0.25 * x * x;
        let (mut term, mut sum) = (1.0, 1.0);
        for k in 1..200 {
            term *= q / (k * k) as f64;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        sum.ln()
    } else {
        // e^x / sqrt(2 pi x) * sum_k ((2k-1)!!)^2 / (k! 8^k x^k)
        let (mut term, mut sum) = (1.0, 1.0);
        for k in 1..30 {
            let m = (2 * k - 1) as f64;
            term *= m * m / (k as f64 * 8.0 * x);
            sum += term;
            if term < 1e-17 {
                break;
            }
        }
        x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln()
    }
}

/// Log of the radial density of a radius-`radius` circle convolved with an
/// isotropic 2D Gaussian of std `sigma`, up to a constant.
pub fn circle_log_density(r: f64, radius: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    ln_bessel_i0(r * radius / s2) - (r * r + radius * radius) / (2.0 * s2)
}

/// Log of the radial density of a radius-`radius` sphere convolved with an
/// isotropic 3D Gaussian of std `sigma`, up to a constant.
pub fn sphere_log_density(r: f64, radius: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let x = r * radius / s2;
    // ln(sinh(x) / x), stable for large x
    let shape = if x < 1e-4 {
        x * x / 6.0
    } else {
        x + (-(-2.0 * x).exp()).ln_1p() - std::f64::consts::LN_2 - x.ln()
    };
    shape - (r * r + radius * radius) / (2.0 * s2)
}

/// Radius maximizing [`circle_log_density`].
pub fn circle_mode_radius(radius: f64, sigma: f64) -> f64 {
    maximize_radial(radius + 4.0 * sigma, |r| circle_log_density(r, radius, sigma))
}

/// Radius maximizing [`sphere_log_density`].
pub fn sphere_mode_radius(radius: f64, sigma: f64) -> f64 {
    maximize_radial(radius + 4.0 * sigma, |r| sphere_log_density(r, radius, sigma))
}

/// Grid search on `[0, hi]` followed by golden-section refinement.
fn maximize_radial(hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = 4000;
    let (mut best, mut best_v) = (0.0, f64::NEG_INFINITY);
    for i in 0..=n {
        let r = hi * i as f64 / n as f64;
        let v = f(r);
        if v > best_v {
            best = r;
            best_v = v;
        }
    }
    let h = hi / n as f64;
    let (mut a, mut b) = ((best - h).max(0.0), best + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}
