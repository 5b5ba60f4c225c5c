use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::write_text;
use crate::cloud::Point;
use crate::error::{Error, Result};
use crate::train::{annealed_l0_grad, gamma_at};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealConfig {
    pub samples: usize,
    /// Location of the heavier mode.
    pub major: f64,
    pub minor: f64,
    pub major_fraction: f64,
    /// Std of each mode.
    pub spread: f64,
    pub steps: usize,
    pub lr: f64,
    pub eps: f64,
    pub init: f64,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            samples: 1000,
            major: 0.0,
            minor: 1.0,
            major_fraction: 0.7,
            spread: 0.05,
            steps: 4000,
            lr: 0.02,
            eps: 1e-8,
            init: 1.0,
            seed: 0,
        }
    }
}

/// Fits a constant `c` to `samples` by full-batch Adam on the mean
/// `(|c - x| + eps)^gamma`, with `gamma` given per step and the learning rate
/// decaying linearly to 1% of `lr`. Returns `c` after every step.
pub fn constant_fit(samples: &[f64], steps: usize, init: f64, lr: f64, eps: f64, gamma: impl Fn(usize) -> f64) -> Vec<f64> {
    let (b1, b2, adam_eps) = (0.9f64, 0.999f64, 1e-12);
    let (mut c, mut m, mut v) = (init, 0.0, 0.0);
    let n = samples.len().max(1) as f64;
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let g = gamma(t);
        let pred = Point::new(c, 0.0, 0.0);
        let grad = samples
            .iter()
            .map(|&x| annealed_l0_grad(&pred, &Point::new(x, 0.0, 0.0), g, eps).x)
            .sum::<f64>()
            / n;
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad * grad;
        let k = (t + 1) as i32;
        let mh = m / (1.0 - b1.powi(k));
        let vh = v / (1.0 - b2.powi(k));
        let rate = lr * (1.0 - 0.99 * t as f64 / steps.max(1) as f64);
        c -= rate * mh / (vh.sqrt() + adam_eps);
        out.push(c);
    }
    out
}

#[derive(Debug, Clone)]
pub struct AnnealOutcome {
    pub samples: Vec<f64>,
    pub sample_mean: f64,
    /// Trajectory with `gamma = 2` throughout.
    pub fixed: Vec<f64>,
    /// Trajectory with `gamma` annealed linearly from 2 to 0.
    pub annealed: Vec<f64>,
    pub gammas: Vec<f64>,
    pub config: AnnealConfig,
}

impl AnnealOutcome {
    pub fn fixed_final(&self) -> f64 {
        *self.fixed.last().unwrap_or(&f64::NAN)
    }

    pub fn annealed_final(&self) -> f64 {
        *self.annealed.last().unwrap_or(&f64::NAN)
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("step,gamma,annealed,fixed\n");
        for (i, ((a, f), g)) in self.annealed.iter().zip(&self.fixed).zip(&self.gammas).enumerate() {
            let _ = writeln!(s, "{i},{g:.6},{a:.9e},{f:.9e}");
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "quantity,value\nsample_mean,{:.9}\nfixed_final,{:.9}\nannealed_final,{:.9}\nmajor_mode,{}\n",
            self.sample_mean,
            self.fixed_final(),
            self.annealed_final(),
            self.config.major
        )
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut samples = String::from("x\n");
        for x in &self.samples {
            let _ = writeln!(samples, "{x:.9e}");
        }
        write_text(dir, "samples.csv", &samples)?;
        write_text(dir, "curve.csv", &self.curve_csv())?;
        write_text(dir, "summary.csv", &self.summary_csv())
    }
}

/// Constant fit to a two-mode 1D sample, once at `gamma = 2` and once
/// annealed to 0.
pub fn anneal_experiment(cfg: &AnnealConfig) -> Result<AnnealOutcome> {
    if cfg.samples == 0 || cfg.steps == 0 {
        return Err(Error::param("samples", "samples and steps must be >= 1"));
    }
    if !(0.0..=1.0).contains(&cfg.major_fraction) {
        return Err(Error::param("major_fraction", "must lie in [0, 1]"));
    }
    let g = Normal::new(0.0, cfg.spread).map_err(|e| Error::param("spread", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_major = (cfg.major_fraction * cfg.samples as f64).round() as usize;
    let samples: Vec<f64> = (0..cfg.samples)
        .map(|i| if i < n_major { cfg.major } else { cfg.minor } + g.sample(&mut rng))
        .collect();
    let sample_mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let total = cfg.steps as u64;
    let gammas: Vec<f64> = (0..cfg.steps).map(|t| gamma_at(t as u64, total, 2.0, 0.0)).collect();
    let fixed = constant_fit(&samples, cfg.steps, cfg.init, cfg.lr, cfg.eps, |_| 2.0);
    let annealed = constant_fit(&samples, cfg.steps, cfg.init, cfg.lr, cfg.eps, |t| gammas[t]);
    Ok(AnnealOutcome {
        samples,
        sample_mean,
        fixed,
        annealed,
        gammas,
        config: *cfg,
    })
}
