use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{noisy_shape, write_cloud, write_text, Analytic};
use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::eval::modes::circle_log_density;
use crate::eval::{circle_mode_radius, mode_manifold};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModesConfig {
    pub radius: f64,
    pub sigma: f64,
    pub points: usize,
    pub bandwidth: f64,
    pub seeds: usize,
    pub seed: u64,
}

impl Default for ModesConfig {
    fn default() -> Self {
        ModesConfig {
            radius: 1.0,
            sigma: 0.3,
            points: 20_000,
            bandwidth: 0.1,
            seeds: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModesOutcome {
    pub config: ModesConfig,
    pub noisy: PointCloud,
    pub modes: PointCloud,
    pub failed: usize,
    pub mean_mode_radius: f64,
    /// Peak of the density convolved with both the noise and the mean-shift
    /// kernel, `sqrt(sigma^2 + bandwidth^2)`.
    pub analytic_radius: f64,
    /// Peak for the noise alone.
    pub noise_only_radius: f64,
}

impl ModesOutcome {
    pub fn relative_error(&self) -> f64 {
        (self.mean_mode_radius - self.analytic_radius).abs() / self.analytic_radius
    }

    /// Normalized analytic log density over `[0, radius + 4 sigma_eff]`.
    pub fn density_csv(&self) -> String {
        let c = &self.config;
        let s = c.sigma.hypot(c.bandwidth);
        let hi = c.radius + 4.0 * s;
        let peak = circle_log_density(self.analytic_radius, c.radius, s);
        let mut out = String::from("r,relative_density\n");
        for i in 0..=400 {
            let r = hi * i as f64 / 400.0;
            let _ = writeln!(out, "{r:.6},{:.9e}", (circle_log_density(r, c.radius, s) - peak).exp());
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "quantity,value\nmean_mode_radius,{:.9}\nanalytic_radius,{:.9}\nnoise_only_radius,{:.9}\nrelative_error,{:.9}\nfailed_seeds,{}\n",
            self.mean_mode_radius,
            self.analytic_radius,
            self.noise_only_radius,
            self.relative_error(),
            self.failed
        )
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_cloud(dir, "noisy.ply", &self.noisy)?;
        write_cloud(dir, "modes.ply", &self.modes)?;
        write_text(dir, "density.csv", &self.density_csv())?;
        write_text(dir, "summary.csv", &self.summary_csv())
    }
}

/// Mean-shift modes of a noisy circle against the closed-form radial peak.
pub fn modes_experiment(cfg: &ModesConfig) -> Result<ModesOutcome> {
    let shape = Analytic::Circle(cfg.radius);
    let (_, noisy) = noisy_shape(shape, cfg.points, cfg.sigma, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let k = cfg.seeds.min(noisy.len());
    let seeds: Vec<Point> = sample(&mut rng, noisy.len(), k).iter().map(|i| noisy.positions()[i]).collect();
    let res = mode_manifold(&noisy, cfg.bandwidth, &seeds)?;
    if res.modes.is_empty() {
        return Err(Error::InvalidData("no mean-shift seed converged".into()));
    }
    let mean_mode_radius = res.modes.iter().map(|m| shape.radial(m)).sum::<f64>() / res.modes.len() as f64;
    Ok(ModesOutcome {
        config: *cfg,
        failed: res.failed.len(),
        mean_mode_radius,
        analytic_radius: circle_mode_radius(cfg.radius, cfg.sigma.hypot(cfg.bandwidth)),
        noise_only_radius: circle_mode_radius(cfg.radius, cfg.sigma),
        modes: PointCloud::new(res.modes)?,
        noisy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strong_noise_modes_sit_inside_the_circle() {
        let o = modes_experiment(&ModesConfig { points: 8000, seeds: 150, ..Default::default() }).unwrap();
        assert!(o.relative_error() < 0.02, "{}", o.summary_csv());
        assert!(o.analytic_radius < 1.0 && o.noise_only_radius < 1.0);
        assert!(o.failed < o.modes.len());
    }

    #[test]
    fn weak_noise_peak_is_the_circle() {
        assert!((circle_mode_radius(1.0, 0.01) - 1.0).abs() < 0.005);
    }

    #[test]
    fn density_curve_peaks_at_one() {
        let o = ModesOutcome {
            config: ModesConfig::default(),
            noisy: PointCloud::new(vec![Point::origin()]).unwrap(),
            modes: PointCloud::new(vec![Point::origin()]).unwrap(),
            failed: 0,
            mean_mode_radius: 0.95,
            analytic_radius: circle_mode_radius(1.0, 0.3f64.hypot(0.1)),
            noise_only_radius: circle_mode_radius(1.0, 0.3),
        };
        let max = o
            .density_csv()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
            .fold(0.0, f64::max);
        assert!(max <= 1.0 + 1e-12 && max > 0.999);
    }
}
