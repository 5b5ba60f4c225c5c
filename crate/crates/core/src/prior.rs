//! Spatial/appearance prior `q(z|y)` and its rejection sampler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cloud::{NeighborIndex, Point, PointCloud, Rgb};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Gaussian,
    Wendland,
    #[serde(rename = "imq")]
    InverseMultiQuadric,
}

impl Kernel {
    /// Kernel value for `s2 = |W d|^2`. Every kernel is 1 at the origin.
    pub fn eval_sq(self, s2: f64, sigma: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-s2 / (2.0 * sigma * sigma)).exp(),
            Kernel::Wendland => {
                if s2 <= 1.0 {
                    (1.0 - s2).powi(4) * (1.0 + 4.0 * s2)
                } else {
                    0.0
                }
            }
            Kernel::InverseMultiQuadric => 1.0 / (1.0 + (5.0 * s2).powi(2)).sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Wendland => "wendland",
            Kernel::InverseMultiQuadric => "imq",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Kernel::Gaussian),
            "wendland" => Ok(Kernel::Wendland),
            "imq" | "inverse_multiquadric" | "inversemultiquadric" => Ok(Kernel::InverseMultiQuadric),
            _ => Err(Error::param("kernel", format!("unknown kernel `{s}` (gaussian, wendland, imq)"))),
        }
    }
}

/// `k(W d)` for a position (3) or position+color (6) difference.
pub fn kernel_eval(kind: Kernel, weights: &[f64], d: &[f64], sigma: f64) -> Result<f64> {
    if weights.len() != d.len() || !(d.len() == 3 || d.len() == 6) {
        return Err(Error::Shape(format!(
            "kernel weights have {} entries, difference has {}",
            weights.len(),
            d.len()
        )));
    }
    let s2: f64 = weights.iter().zip(d).map(|(w, x)| (w * x).powi(2)).sum();
    Ok(kind.eval_sq(s2, sigma))
}

/// Default appearance weight: a full-contrast RGB difference (length sqrt 3)
/// counts like a spatial offset of `4 alpha r`.
pub const DEFAULT_BETA: f64 = 2.309_401_076_758_503; // 4 / sqrt(3)

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    pub kernel: Kernel,
    /// Support radius in model units.
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub max_tries: usize,
    pub include_self: bool,
}

impl PriorConfig {
    /// Defaults with `r` set to 5% of `diameter`.
    pub fn for_diameter(diameter: f64) -> Self {
        PriorConfig {
            kernel: Kernel::Gaussian,
            r: 0.05 * diameter,
            alpha: 0.5,
            beta: DEFAULT_BETA,
            sigma: 1.0,
            max_tries: 16,
            include_self: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::param("r", format!("must be > 0, got {}", self.r)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be > 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be > 0, got {}", self.sigma)));
        }
        if self.max_tries == 0 {
            return Err(Error::param("max_tries", "must be >= 1"));
        }
        Ok(())
    }
}

/// Diagonal of `W`: `1 / (alpha r)` on positions, `beta` on colors.
pub fn make_weights(config: &PriorConfig, has_color: bool) -> Vec<f64> {
    let w = 1.0 / (config.alpha * config.r);
    let mut out = vec![w; 3];
    if has_color {
        out.extend([config.beta; 3]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSample {
    pub id: usize,
    pub position: Point,
    pub color: Option<Rgb>,
    pub rejections: usize,
}

/// One draw from `q(z | y)`: a uniform candidate among the radius-`r`
/// neighbors of `y`, accepted with probability `k(candidate - y)`.
pub fn sample_prior(
    cloud: &PointCloud,
    index: &NeighborIndex,
    y: usize,
    config: &PriorConfig,
    rng: &mut impl Rng,
) -> Option<PriorSample> {
    let pts = cloud.positions();
    let py = pts[y];
    let mut candidates = index.radius_query(&py, config.r, if config.include_self { None } else { Some(y) });
    if candidates.is_empty() {
        return None;
    }
    candidates.sort_unstable();
    let ws = 1.0 / (config.alpha * config.r);
    let colors = cloud.colors().filter(|_| config.beta > 0.0);
    for tries in 0..config.max_tries {
        let q = candidates[rng.random_range(0..candidates.len())];
        let xi: f64 = rng.random();
        let mut s2 = (pts[q] - py).norm_squared() * ws * ws;
        if let Some(c) = colors {
            s2 += (0..3).map(|k| (config.beta * (c[q][k] - c[y][k])).powi(2)).sum::<f64>();
        }
        if config.kernel.eval_sq(s2, config.sigma) > xi {
            return Some(PriorSample {
                id: q,
                position: pts[q],
                color: cloud.colors().map(|c| c[q]),
                rejections: tries,
            });
        }
    }
    None
}

/// Per-point random stream: same `(seed, id)` gives the same stream no matter
/// which thread or batch asks for it.
pub fn point_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

/// One prior sample per point of `cloud`, `None` where nothing was accepted.
pub fn sample_prior_batch(
    cloud: &PointCloud,
    index: &NeighborIndex,
    config: &PriorConfig,
    seed: u64,
) -> Result<Vec<Option<PriorSample>>> {
    config.validate()?;
    Ok((0..cloud.len())
        .into_par_iter()
        .map(|y| sample_prior(cloud, index, y, config, &mut point_rng(seed, y)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Vec3;

    fn cfg(kernel: Kernel, r: f64) -> PriorConfig {
        PriorConfig {
            kernel,
            ..PriorConfig::for_diameter(r / 0.05)
        }
    }

    #[test]
    fn kernels_are_one_at_origin() {
        for k in [Kernel::Gaussian, Kernel::Wendland, Kernel::InverseMultiQuadric] {
            assert_eq!(kernel_eval(k, &[2.0; 3], &[0.0; 3], 1.0).unwrap(), 1.0);
            assert_eq!(kernel_eval(k, &[2.0; 6], &[0.0; 6], 1.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn kernel_closed_forms() {
        assert_eq!(kernel_eval(Kernel::Wendland, &[1.0; 3], &[1.0, 0.0, 0.0], 1.0).unwrap(), 0.0);
        let s = (2.0 * 2f64.ln()).sqrt();
        let g = kernel_eval(Kernel::Gaussian, &[1.0; 3], &[0.0, s, 0.0], 1.0).unwrap();
        assert!((g - 0.5).abs() < 1e-15);
        // |Wd|^2 = 0.2: 1/sqrt(1 + 1) for IMQ, 0.8^4 * 1.8 for Wendland
        let d = [0.2f64.sqrt(), 0.0, 0.0];
        let i = kernel_eval(Kernel::InverseMultiQuadric, &[1.0; 3], &d, 1.0).unwrap();
        assert!((i - 0.5f64.sqrt()).abs() < 1e-15);
        let w = kernel_eval(Kernel::Wendland, &[1.0; 3], &d, 1.0).unwrap();
        assert!((w - 0.8f64.powi(4) * 1.8).abs() < 1e-15);
    }

    #[test]
    fn kernel_dimension_mismatch() {
        assert!(kernel_eval(Kernel::Gaussian, &[1.0; 3], &[0.0; 6], 1.0).is_err());
        assert!(kernel_eval(Kernel::Gaussian, &[1.0; 4], &[0.0; 4], 1.0).is_err());
    }

    #[test]
    fn weights_construction() {
        let mut c = cfg(Kernel::Gaussian, 0.1);
        c.alpha = 0.5;
        let w = make_weights(&c, false);
        assert_eq!(w.len(), 3);
        for v in &w {
            assert!((v - 20.0).abs() < 1e-12);
        }
        c.beta = 4.0;
        let w = make_weights(&c, true);
        assert_eq!(w.len(), 6);
        assert_eq!(&w[3..], &[4.0; 3]);
        c.beta = 0.0;
        let w = make_weights(&c, true);
        let a = kernel_eval(Kernel::Gaussian, &w, &[0.01, 0.0, 0.0, 1.0, 0.0, 1.0], 1.0).unwrap();
        let b = kernel_eval(Kernel::Gaussian, &w[..3], &[0.01, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coincident_neighbors_accept_first_candidate() {
        let cloud = PointCloud::with_colors(vec![Point::origin(); 5], vec![[0.2, 0.4, 0.6]; 5]).unwrap();
        let index = NeighborIndex::build(cloud.positions(), 0.1).unwrap();
        for seed in 0..100 {
            let s = sample_prior(&cloud, &index, 0, &cfg(Kernel::Gaussian, 0.1), &mut point_rng(seed, 0)).unwrap();
            assert_eq!(s.rejections, 0);
        }
    }

    #[test]
    fn no_neighbors_gives_none() {
        let cloud = PointCloud::new(vec![Point::origin(), Point::new(1.0, 0.0, 0.0)]).unwrap();
        let index = NeighborIndex::build(cloud.positions(), 0.1).unwrap();
        let mut c = cfg(Kernel::Gaussian, 0.1);
        c.include_self = false;
        assert!(sample_prior(&cloud, &index, 0, &c, &mut point_rng(1, 0)).is_none());
        c.include_self = true;
        assert_eq!(sample_prior(&cloud, &index, 0, &c, &mut point_rng(1, 0)).unwrap().id, 0);
    }

    #[test]
    fn acceptance_ratio_matches_kernel_ratio() {
        // 50 candidates at distance 0.01 and 50 at 0.03, self excluded.
        let r = 0.05;
        let mut pts = vec![Point::origin()];
        for i in 0..100 {
            let a = i as f64 * 0.7;
            let d = if i < 50 { 0.01 } else { 0.03 };
            pts.push(Point::new(d * a.cos(), d * a.sin(), 0.0));
        }
        let cloud = PointCloud::new(pts).unwrap();
        let index = NeighborIndex::build(cloud.positions(), r).unwrap();
        let mut c = cfg(Kernel::Gaussian, r);
        c.include_self = false;
        c.max_tries = 1;
        let mut rng = point_rng(7, 0);
        let (mut near, mut far) = (0.0, 0.0);
        for _ in 0..100_000 {
            if let Some(s) = sample_prior(&cloud, &index, 0, &c, &mut rng) {
                if s.id <= 50 {
                    near += 1.0;
                } else {
                    far += 1.0;
                }
            }
        }
        let w = make_weights(&c, false)[0];
        let k = |d: f64| Kernel::Gaussian.eval_sq((w * d).powi(2), 1.0);
        let expected = k(0.01) / k(0.03);
        assert!(((near / far) / expected - 1.0).abs() < 0.02, "{} vs {expected}", near / far);
    }

    #[test]
    fn bicolor_samples_stay_on_own_color() {
        let mut pts = Vec::new();
        let mut colors = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                let x = i as f64 / 39.0 - 0.5;
                pts.push(Point::new(x, j as f64 / 39.0 - 0.5, 0.0));
                colors.push(if x < 0.0 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] });
            }
        }
        let cloud = PointCloud::with_colors(pts, colors).unwrap();
        let mut c = cfg(Kernel::Gaussian, 0.1);
        c.beta = 10.0;
        let index = NeighborIndex::build(cloud.positions(), c.r).unwrap();
        let y = (19 * 40) + 20; // red point at the boundary
        assert_eq!(cloud.colors().unwrap()[y], [1.0, 0.0, 0.0]);
        let mut rng = point_rng(3, y);
        let mut red = 0;
        let mut total = 0;
        while total < 10_000 {
            if let Some(s) = sample_prior(&cloud, &index, y, &c, &mut rng) {
                total += 1;
                if s.color == Some([1.0, 0.0, 0.0]) {
                    red += 1;
                }
                assert!((s.position - cloud.positions()[y]).norm() <= c.r);
            }
        }
        assert!(red as f64 / total as f64 >= 0.999);
    }

    #[test]
    fn beta_zero_ignores_colors() {
        let pts: Vec<Point> = (0..200).map(|i| Point::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), 0.0) * 0.05).collect();
        let colors: Vec<Rgb> = (0..200).map(|i| [(i % 7) as f64 / 6.0, 0.5, 1.0]).collect();
        let colored = PointCloud::with_colors(pts.clone(), colors).unwrap();
        let plain = PointCloud::new(pts).unwrap();
        let mut c = cfg(Kernel::Wendland, 0.05);
        c.beta = 0.0;
        let ia = NeighborIndex::build(colored.positions(), c.r).unwrap();
        let ib = NeighborIndex::build(plain.positions(), c.r).unwrap();
        let a = sample_prior_batch(&colored, &ia, &c, 9).unwrap();
        let b = sample_prior_batch(&plain, &ib, &c, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.map(|s| (s.id, s.rejections)), y.map(|s| (s.id, s.rejections)));
        }
    }

    #[test]
    fn batch_is_deterministic_and_within_radius() {
        let pts: Vec<Point> = (0..500).map(|i| Point::from(Vec3::new((i as f64).sin(), (i as f64 * 1.3).cos(), (i as f64 * 0.7).sin()))).collect();
        let cloud = PointCloud::new(pts).unwrap();
        let c = cfg(Kernel::InverseMultiQuadric, 0.2);
        let index = NeighborIndex::build(cloud.positions(), c.r).unwrap();
        let a = sample_prior_batch(&cloud, &index, &c, 1).unwrap();
        assert_eq!(a, sample_prior_batch(&cloud, &index, &c, 1).unwrap());
        for (y, s) in a.iter().enumerate() {
            if let Some(s) = s {
                assert!((s.position - cloud.positions()[y]).norm() <= c.r);
            }
        }
    }
}
