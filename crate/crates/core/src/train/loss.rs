//! Annealed L0 data term and the patch regularizer.

use crate::cloud::{NeighborIndex, Point, Vec3};
use crate::error::Result;
use rayon::prelude::*;

/// `sum_c (|pred_c - target_c| + eps)^gamma`.
pub fn annealed_l0_loss(pred: &Point, target: &Point, gamma: f64, eps: f64) -> f64 {
    (0..3).map(|c| ((pred[c] - target[c]).abs() + eps).powf(gamma)).sum()
}

/// Gradient of [`annealed_l0_loss`] w.r.t. `pred`; zero where a coordinate
/// matches exactly.
pub fn annealed_l0_grad(pred: &Point, target: &Point, gamma: f64, eps: f64) -> Vec3 {
    Vec3::from_fn(|c, _| {
        let e = pred[c] - target[c];
        if e == 0.0 || gamma == 0.0 {
            0.0
        } else {
            gamma * (e.abs() + eps).powf(gamma - 1.0) * e.signum()
        }
    })
}

/// Linear schedule from `start` at step 0 to `end` at step `total`.
pub fn gamma_at(step: u64, total: u64, start: f64, end: f64) -> f64 {
    if total == 0 {
        return start;
    }
    let t = (step as f64 / total as f64).min(1.0);
    start + (end - start) * t
}

/// Power mean `(mean x^gamma)^(1/gamma)` of per-coordinate errors, the
/// geometric mean at `gamma = 0`. A length whatever `gamma` is, so epochs
/// trained under different exponents compare.
pub fn power_mean(errors: impl IntoIterator<Item = f64>, gamma: f64, eps: f64) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in errors {
        let x = e.abs() + eps;
        sum += if gamma < 1e-9 { x.ln() } else { x.powf(gamma) };
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let m = sum / n as f64;
    if gamma < 1e-9 {
        m.exp()
    } else {
        m.powf(1.0 / gamma)
    }
}

/// Radius-`radius` neighbors of every point, excluding the point itself.
pub fn patches(points: &[Point], radius: f64) -> Result<Vec<Vec<usize>>> {
    let index = NeighborIndex::build(points, radius)?;
    Ok(points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut n = index.radius_query(p, radius, Some(i));
            n.sort_unstable();
            n
        })
        .collect())
}

/// `mean_y max_{y' in patch(y)} |p_y - p_y'|`; empty patches contribute 0.
pub fn repulsion_term(preds: &[Point], patches: &[Vec<usize>]) -> f64 {
    repulsion_with_grad(preds, patches).0
}

/// Value and gradient of [`repulsion_term`]. Ties for the farthest neighbor go
/// to the lowest id.
pub fn repulsion_with_grad(preds: &[Point], patches: &[Vec<usize>]) -> (f64, Vec<Vec3>) {
    let n = preds.len();
    let mut grad = vec![Vec3::zeros(); n];
    if n == 0 {
        return (0.0, grad);
    }
    let inv = 1.0 / n as f64;
    let mut total = 0.0;
    for (y, patch) in patches.iter().enumerate() {
        let Some((far, dist)) = patch
            .iter()
            .map(|&j| (j, (preds[y] - preds[j]).norm()))
            .fold(None, |best: Option<(usize, f64)>, (j, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((j, d)),
            })
        else {
            continue;
        };
        total += dist;
        if dist > 0.0 {
            let g = (preds[y] - preds[far]) * (inv / dist);
            grad[y] += g;
            grad[far] -= g;
        }
    }
    (total * inv, grad)
}
