use rayon::prelude::*;

use super::trainer::mean_norm;
use crate::cloud::{NeighborIndex, PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::net::{network_forward, Model};

/// `d(y)` minus its Gaussian-weighted average (bandwidth `radius / 2`) over
/// the radius neighborhood of `y`, self included.
pub fn remove_low_frequency(displacements: &[Vec3], cloud: &PointCloud, radius: f64) -> Result<Vec<Vec3>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("radius", format!("must be > 0, got {radius}")));
    }
    if displacements.len() != cloud.len() {
        return Err(Error::Shape(format!(
            "{} displacements for {} points",
            displacements.len(),
            cloud.len()
        )));
    }
    let pts = cloud.positions();
    let index = NeighborIndex::build(pts, radius)?;
    let bw = 0.5 * radius;
    let k = -0.5 / (bw * bw);
    Ok(pts
        .par_iter()
        .zip(displacements.par_iter())
        .map(|(p, d)| {
            let (mut acc, mut wsum) = (Vec3::zeros(), 0.0);
            index.for_each_within(p, radius, |j, d2| {
                let w = (k * d2).exp();
                acc += displacements[j] * w;
                wsum += w;
            });
            d - acc / wsum
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiseConfig {
    pub iterations: usize,
    /// Low-frequency removal radius as a fraction of the input diagonal.
    pub lowfreq_frac: f64,
    /// Disable to apply raw network displacements.
    pub remove_low_frequency: bool,
    pub pool_seed: u64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            iterations: 2,
            lowfreq_frac: 0.10,
            remove_low_frequency: true,
            pool_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenoiseReport {
    /// Mean applied displacement norm per iteration.
    pub mean_norms: Vec<f64>,
}

/// Feeds the cloud through the network `iterations` times. Colors pass
/// through untouched and are never shown to the network.
pub fn denoise(model: &Model, cloud: &PointCloud, iterations: usize) -> Result<PointCloud> {
    let cfg = DenoiseConfig {
        iterations,
        ..Default::default()
    };
    Ok(denoise_with(model, cloud, &cfg)?.0)
}

pub fn denoise_with(model: &Model, cloud: &PointCloud, cfg: &DenoiseConfig) -> Result<(PointCloud, DenoiseReport)> {
    let (mut steps, report) = denoise_trace(model, cloud, cfg)?;
    Ok((steps.pop().expect("at least one iteration"), report))
}

/// Like [`denoise_with`] but keeps the cloud after every iteration.
pub fn denoise_trace(model: &Model, cloud: &PointCloud, cfg: &DenoiseConfig) -> Result<(Vec<PointCloud>, DenoiseReport)> {
    if cfg.iterations == 0 {
        return Err(Error::param("iterations", "must be >= 1"));
    }
    let radius = cfg.lowfreq_frac * cloud.bbox_diagonal();
    let mut cur = cloud.clone();
    let mut steps = Vec::with_capacity(cfg.iterations);
    let mut report = DenoiseReport::default();
    for it in 0..cfg.iterations {
        let mut d = network_forward(model, &cur, true, cfg.pool_seed)?;
        if cfg.remove_low_frequency && radius > 0.0 {
            d = remove_low_frequency(&d, &cur, radius)?;
        }
        let norm = mean_norm(&d);
        log::info!("iteration {}: mean displacement {:.6e}", it + 1, norm);
        report.mean_norms.push(norm);
        cur = cur.displaced(&d)?;
        steps.push(cur.clone());
    }
    Ok((steps, report))
}
