use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{write_cloud, write_text};
use crate::cloud::{min_dist_for_count, poisson_disk_sample, shapes, Point, PointCloud, Rgb, Vec3};
use crate::error::{Error, Result};
use crate::train::{denoise_with, mix_seed, train_unsupervised, DenoiseConfig, TrainConfig, TrainMode};

const RED: Rgb = [1.0, 0.0, 0.0];
const BLUE: Rgb = [0.0, 0.0, 1.0];

#[derive(Debug, Clone)]
pub struct BicolorConfig {
    /// Side of each of the two squares of the fold.
    pub size: f64,
    /// Std of the 3D Gaussian noise.
    pub sigma: f64,
    pub points: usize,
    /// Points whose clean position is closer than this to the crease count
    /// as near the boundary.
    pub band: f64,
    pub denoise: DenoiseConfig,
    /// Training settings of the colored run; the other run switches the mode
    /// to `NoColor`.
    pub train: TrainConfig,
}

impl Default for BicolorConfig {
    fn default() -> Self {
        BicolorConfig {
            size: 0.5,
            sigma: 0.002,
            points: 1000,
            band: 0.05,
            denoise: DenoiseConfig::default(),
            train: TrainConfig {
                epochs: 1500,
                prior_alpha: 1.0,
                ..Default::default()
            },
        }
    }
}

fn on_floor(p: &Point) -> bool {
    p.z <= 0.0
}

/// Clean Poisson-disk samples of a right-angle fold, red on the floor and
/// blue on the wall, and a noisy copy carrying the same colors.
pub fn bicolor_cloud(cfg: &BicolorConfig, seed: u64) -> Result<(PointCloud, PointCloud)> {
    let mesh = shapes::fold(cfg.size);
    let d = min_dist_for_count(&mesh, cfg.points, seed)?;
    let pts = poisson_disk_sample(&mesh, d, seed)?.positions().to_vec();
    let colors: Vec<Rgb> = pts.iter().map(|p| if on_floor(p) { RED } else { BLUE }).collect();
    let g = Normal::new(0.0, cfg.sigma).map_err(|e| Error::param("sigma", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[7]));
    let noisy = pts
        .iter()
        .map(|p| p + Vec3::new(g.sample(&mut rng), g.sample(&mut rng), g.sample(&mut rng)))
        .collect();
    Ok((
        PointCloud::with_colors(pts, colors.clone())?,
        PointCloud::with_colors(noisy, colors)?,
    ))
}

/// Mean signed offset of each prediction from its own plane of the fold,
/// positive towards the other plane, over clean points closer than `band`
/// to the crease.
pub fn cross_boundary_displacement(pred: &PointCloud, clean: &PointCloud, band: f64) -> Result<f64> {
    if pred.len() != clean.len() {
        return Err(Error::Shape(format!("{} predictions for {} clean points", pred.len(), clean.len())));
    }
    let (mut acc, mut n) = (0.0, 0usize);
    for (p, c) in pred.positions().iter().zip(clean.positions()) {
        if on_floor(c) && -c.x < band {
            acc += p.z;
            n += 1;
        } else if !on_floor(c) && c.z < band {
            acc -= p.x;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidData("no point inside the boundary band".into()));
    }
    Ok(acc / n as f64)
}

#[derive(Debug, Clone)]
pub struct BicolorOutcome {
    pub clean: PointCloud,
    pub noisy: PointCloud,
    pub with_color: PointCloud,
    pub without_color: PointCloud,
    pub noisy_cross: f64,
    pub with_color_cross: f64,
    pub without_color_cross: f64,
}

impl BicolorOutcome {
    /// Colored cross-boundary displacement over the color-blind one.
    pub fn ratio(&self) -> f64 {
        self.with_color_cross / self.without_color_cross
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "run,cross_boundary_displacement\nnoisy,{:.9e}\nwith_color,{:.9e}\nwithout_color,{:.9e}\nratio,{:.6}\n",
            self.noisy_cross,
            self.with_color_cross,
            self.without_color_cross,
            self.ratio()
        )
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_cloud(dir, "clean.ply", &self.clean)?;
        write_cloud(dir, "noisy.ply", &self.noisy)?;
        write_cloud(dir, "with_color.ply", &self.with_color)?;
        write_cloud(dir, "without_color.ply", &self.without_color)?;
        write_text(dir, "summary.csv", &self.summary_csv())
    }
}

/// Trains with and without the color term of the prior on one noisy
/// realization and denoises a second one with both models.
pub fn bicolor_experiment(cfg: &BicolorConfig) -> Result<BicolorOutcome> {
    let seed = cfg.train.seed;
    let (_, train_noisy) = bicolor_cloud(cfg, mix_seed(seed, &[0]))?;
    let (clean, noisy) = bicolor_cloud(cfg, mix_seed(seed, &[1]))?;
    let run = |mode: TrainMode| -> Result<PointCloud> {
        let tc = TrainConfig { mode, ..cfg.train.clone() };
        let (model, _) = train_unsupervised(std::slice::from_ref(&train_noisy), &tc)?;
        Ok(denoise_with(&model, &noisy, &cfg.denoise)?.0)
    };
    let with_color = run(TrainMode::Unsupervised)?;
    let without_color = run(TrainMode::NoColor)?;
    Ok(BicolorOutcome {
        noisy_cross: cross_boundary_displacement(&noisy, &clean, cfg.band)?,
        with_color_cross: cross_boundary_displacement(&with_color, &clean, cfg.band)?,
        without_color_cross: cross_boundary_displacement(&without_color, &clean, cfg.band)?,
        clean,
        noisy,
        with_color,
        without_color,
    })
}
