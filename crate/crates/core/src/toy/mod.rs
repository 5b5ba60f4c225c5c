//! Small synthetic experiments with closed-form ground truth: noisy circles
//! and spheres, the mode-manifold study, the L0 anneal study, the bicolor
//! step plane and a five-shape ablation set.

mod ablation;
mod anneal;
mod bicolor;
mod modes;

pub use ablation::{ablation_experiment, mini_dataset, AblationConfig, AblationOutcome, AblationRun, MiniSample, Method};
pub use anneal::{anneal_experiment, constant_fit, AnnealConfig, AnnealOutcome};
pub use bicolor::{bicolor_cloud, bicolor_experiment, cross_boundary_displacement, BicolorConfig, BicolorOutcome};
pub use modes::{modes_experiment, ModesConfig, ModesOutcome};

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::cloud::{Point, PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::eval::{circle_mode_radius, mode_manifold, nearest_distances, sphere_mode_radius, EvalReport};
use crate::meshio::{self, Format};
use crate::net::Model;
use crate::train::{denoise_trace, mix_seed, train_unsupervised, DenoiseConfig, TrainConfig, TrainReport};

/// Origin-centered shape with an exact distance function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Analytic {
    /// Circle of the given radius in the `z = 0` plane.
    Circle(f64),
    Sphere(f64),
}

impl Analytic {
    pub fn radius(self) -> f64 {
        match self {
            Analytic::Circle(r) | Analytic::Sphere(r) => r,
        }
    }

    /// Distance from the center, measured in the circle's plane for circles.
    pub fn radial(self, p: &Point) -> f64 {
        match self {
            Analytic::Circle(_) => p.x.hypot(p.y),
            Analytic::Sphere(_) => p.coords.norm(),
        }
    }

    pub fn distance(self, p: &Point) -> f64 {
        match self {
            Analytic::Circle(r) => (self.radial(p) - r).hypot(p.z),
            Analytic::Sphere(r) => (p.coords.norm() - r).abs(),
        }
    }

    /// Uniformly distributed random points on the shape.
    pub fn sample(self, n: usize, rng: &mut impl Rng) -> Vec<Point> {
        (0..n)
            .map(|_| match self {
                Analytic::Circle(r) => {
                    let t = rng.random_range(0.0..std::f64::consts::TAU);
                    Point::new(r * t.cos(), r * t.sin(), 0.0)
                }
                Analytic::Sphere(r) => loop {
                    let v = Vec3::new(
                        StandardNormal.sample(rng),
                        StandardNormal.sample(rng),
                        StandardNormal.sample(rng),
                    );
                    let n = v.norm();
                    if n > 1e-12 {
                        break Point::from(v * (r / n));
                    }
                },
            })
            .collect()
    }

    /// Radius where the noise-convolved density peaks, for isotropic noise
    /// of std `sigma` in the shape's own dimension.
    pub fn mode_radius(self, sigma: f64) -> f64 {
        match self {
            Analytic::Circle(r) => circle_mode_radius(r, sigma),
            Analytic::Sphere(r) => sphere_mode_radius(r, sigma),
        }
    }

    /// Isotropic Gaussian noise of std `sigma`, in-plane for circles.
    pub fn perturb(self, points: &[Point], sigma: f64, rng: &mut impl Rng) -> Result<Vec<Point>> {
        let g = Normal::new(0.0, sigma).map_err(|e| Error::param("sigma", e.to_string()))?;
        Ok(points
            .iter()
            .map(|p| {
                let z = match self {
                    Analytic::Circle(_) => 0.0,
                    Analytic::Sphere(_) => g.sample(rng),
                };
                p + Vec3::new(g.sample(rng), g.sample(rng), z)
            })
            .collect())
    }
}

/// Clean samples and their noisy counterparts, in the same order.
pub fn noisy_shape(shape: Analytic, n: usize, sigma: f64, seed: u64) -> Result<(PointCloud, PointCloud)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = shape.sample(n, &mut rng);
    let noisy = shape.perturb(&clean, sigma, &mut rng)?;
    Ok((PointCloud::new(clean)?, PointCloud::new(noisy)?))
}

/// Chamfer distance with the exact shape in place of a mesh.
pub fn analytic_chamfer(pred: &PointCloud, shape: Analytic, clean: &PointCloud) -> Result<EvalReport> {
    if pred.is_empty() || clean.is_empty() {
        return Err(Error::InvalidData("chamfer needs nonempty clouds".into()));
    }
    let t1 = pred.positions().iter().map(|p| shape.distance(p)).collect();
    let t2 = nearest_distances(clean.positions(), pred.positions())?;
    EvalReport::from_distances(t1, &t2, clean.bbox_diagonal().max(f64::MIN_POSITIVE))
}

/// Mean of `|radial(p) - radius|`.
pub fn mean_radial_gap(cloud: &PointCloud, shape: Analytic, radius: f64) -> f64 {
    let n = cloud.len().max(1) as f64;
    cloud.positions().iter().map(|p| (shape.radial(p) - radius).abs()).sum::<f64>() / n
}

pub fn mean_radial(cloud: &PointCloud, shape: Analytic) -> f64 {
    mean_radial_gap(cloud, shape, 0.0)
}

#[derive(Debug, Clone)]
pub struct ShapeRunConfig {
    pub shape: Analytic,
    pub points: usize,
    pub sigma: f64,
    /// Denoising iterations evaluated on the held-out cloud.
    pub iterations: usize,
    /// Mean-shift bandwidth of the mode oracle.
    pub mode_bandwidth: f64,
    /// Mean-shift seeds drawn from the held-out noisy cloud.
    pub mode_seeds: usize,
    pub denoise: DenoiseConfig,
    pub train: TrainConfig,
}

impl ShapeRunConfig {
    /// Unit circle, 500 points, in-plane noise of std 0.05.
    pub fn circle() -> Self {
        ShapeRunConfig {
            shape: Analytic::Circle(1.0),
            points: 500,
            sigma: 0.05,
            iterations: 3,
            mode_bandwidth: 0.05,
            mode_seeds: 500,
            denoise: DenoiseConfig::default(),
            train: TrainConfig {
                epochs: 300,
                ..Default::default()
            },
        }
    }

    /// Unit sphere, 2000 points, 3D noise of std 0.05.
    pub fn sphere() -> Self {
        ShapeRunConfig {
            shape: Analytic::Sphere(1.0),
            points: 2000,
            sigma: 0.05,
            mode_bandwidth: 0.1,
            ..Self::circle()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShapeRun {
    pub shape: Analytic,
    pub model: Model,
    pub report: TrainReport,
    pub test_clean: PointCloud,
    pub test_noisy: PointCloud,
    pub noisy_eval: EvalReport,
    /// Held-out cloud after each denoising iteration.
    pub denoised: Vec<PointCloud>,
    pub evals: Vec<EvalReport>,
    /// Mean radius of the converged mean-shift modes.
    pub mode_radius: f64,
    /// Closed-form peak radius for the noise plus the mean-shift kernel.
    pub analytic_mode_radius: f64,
    pub mode_gap_noisy: f64,
    pub mode_gaps: Vec<f64>,
    pub mean_radials: Vec<f64>,
}

impl ShapeRun {
    /// Relative Chamfer reduction after iteration `it` (1-based).
    pub fn reduction(&self, it: usize) -> f64 {
        1.0 - self.evals[it - 1].chamfer / self.noisy_eval.chamfer
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("iteration,chamfer,term1,term2,mode_gap,mean_radial\n");
        let _ = writeln!(
            s,
            "0,{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            self.noisy_eval.chamfer,
            self.noisy_eval.term1,
            self.noisy_eval.term2,
            self.mode_gap_noisy,
            mean_radial(&self.test_noisy, self.shape)
        );
        for (i, e) in self.evals.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                i + 1,
                e.chamfer,
                e.term1,
                e.term2,
                self.mode_gaps[i],
                self.mean_radials[i]
            );
        }
        s
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_cloud(dir, "clean.ply", &self.test_clean)?;
        write_cloud(dir, "noisy.ply", &self.test_noisy)?;
        for (i, c) in self.denoised.iter().enumerate() {
            write_cloud(dir, &format!("denoised_{}.ply", i + 1), c)?;
        }
        self.report.write_csv(dir.join("train.csv"))?;
        write_text(dir, "summary.csv", &self.summary_csv())
    }
}

pub(crate) fn write_cloud(dir: &Path, name: &str, cloud: &PointCloud) -> Result<()> {
    meshio::write_pointcloud(cloud, dir.join(name), Format::PlyAscii)
}

pub(crate) fn write_text(dir: &Path, name: &str, body: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
}

/// Trains on one noisy realization and evaluates on a second one.
pub fn shape_run(cfg: &ShapeRunConfig) -> Result<ShapeRun> {
    let seed = cfg.train.seed;
    let (_, train_noisy) = noisy_shape(cfg.shape, cfg.points, cfg.sigma, mix_seed(seed, &[0]))?;
    let (test_clean, test_noisy) = noisy_shape(cfg.shape, cfg.points, cfg.sigma, mix_seed(seed, &[1]))?;
    let (model, report) = train_unsupervised(&[train_noisy], &cfg.train)?;
    let dcfg = DenoiseConfig {
        iterations: cfg.iterations,
        ..cfg.denoise
    };
    let (denoised, _) = denoise_trace(&model, &test_noisy, &dcfg)?;
    let noisy_eval = analytic_chamfer(&test_noisy, cfg.shape, &test_clean)?;
    let evals = denoised
        .iter()
        .map(|c| analytic_chamfer(c, cfg.shape, &test_clean))
        .collect::<Result<Vec<_>>>()?;

    let step = (test_noisy.len() / cfg.mode_seeds.max(1)).max(1);
    let seeds: Vec<Point> = test_noisy.positions().iter().step_by(step).copied().collect();
    let modes = mode_manifold(&test_noisy, cfg.mode_bandwidth, &seeds)?;
    if modes.modes.is_empty() {
        return Err(Error::InvalidData("no mean-shift seed converged".into()));
    }
    let mode_radius = modes.modes.iter().map(|m| cfg.shape.radial(m)).sum::<f64>() / modes.modes.len() as f64;
    let sigma_eff = cfg.sigma.hypot(cfg.mode_bandwidth);
    Ok(ShapeRun {
        shape: cfg.shape,
        model,
        report,
        noisy_eval,
        analytic_mode_radius: cfg.shape.mode_radius(sigma_eff),
        mode_gap_noisy: mean_radial_gap(&test_noisy, cfg.shape, mode_radius),
        mode_gaps: denoised.iter().map(|c| mean_radial_gap(c, cfg.shape, mode_radius)).collect(),
        mean_radials: denoised.iter().map(|c| mean_radial(c, cfg.shape)).collect(),
        mode_radius,
        evals,
        denoised,
        test_clean,
        test_noisy,
    })
}

/// Trailing moving average with window `w` (shorter at the start).
pub fn smooth(values: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        acc += values[i];
        if i >= w {
            acc -= values[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

/// Means of consecutive non-overlapping blocks of `w` values; a trailing
/// partial block is dropped.
pub fn block_means(values: &[f64], w: usize) -> Vec<f64> {
    values.chunks_exact(w.max(1)).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_distances() {
        let c = Analytic::Circle(2.0);
        assert!((c.distance(&Point::new(0.0, 3.0, 0.0)) - 1.0).abs() < 1e-15);
        assert!((c.distance(&Point::new(0.0, 2.0, 0.5)) - 0.5).abs() < 1e-15);
        assert!((c.distance(&Point::origin()) - 2.0).abs() < 1e-15);
        let s = Analytic::Sphere(1.0);
        assert!((s.distance(&Point::new(0.0, 0.0, 0.25)) - 0.75).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for shape in [c, s] {
            for p in shape.sample(100, &mut rng) {
                assert!(shape.distance(&p) < 1e-12);
            }
        }
    }

    #[test]
    fn circle_noise_stays_in_plane() {
        let (clean, noisy) = noisy_shape(Analytic::Circle(1.0), 2000, 0.05, 3).unwrap();
        assert!(noisy.positions().iter().all(|p| p.z == 0.0));
        let d: Vec<Vec3> = noisy.positions().iter().zip(clean.positions()).map(|(a, b)| a - b).collect();
        let var = d.iter().map(|v| v.x * v.x + v.y * v.y).sum::<f64>() / (2.0 * d.len() as f64);
        assert!((var.sqrt() - 0.05).abs() < 0.003, "{}", var.sqrt());
    }

    #[test]
    fn analytic_chamfer_of_clean_is_zero() {
        let (clean, _) = noisy_shape(Analytic::Sphere(1.0), 300, 0.05, 4).unwrap();
        let r = analytic_chamfer(&clean, Analytic::Sphere(1.0), &clean).unwrap();
        assert!(r.chamfer < 1e-12);
        // uniform radial scaling by 1.1 puts every point 0.1 off the sphere
        let scaled = PointCloud::new(clean.positions().iter().map(|p| Point::from(p.coords * 1.1)).collect()).unwrap();
        let r = analytic_chamfer(&scaled, Analytic::Sphere(1.0), &clean).unwrap();
        assert!((r.term1 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn smoothing_window() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert_eq!(smooth(&[2.0], 10), vec![2.0]);
    }

    #[test]
    fn blocks_drop_the_tail() {
        assert_eq!(block_means(&[1.0, 3.0, 5.0, 7.0, 9.0], 2), vec![2.0, 6.0]);
        assert!(block_means(&[1.0], 2).is_empty());
    }

    #[test]
    fn circle_run_halves_the_error() {
        let run = shape_run(&ShapeRunConfig::circle()).unwrap();
        assert!(run.reduction(2) >= 0.5, "reduction {}", run.reduction(2));
        assert!(run.evals[1].chamfer <= run.evals[0].chamfer);
        assert!(run.mode_gaps[1] < run.mode_gap_noisy);
        // the circle keeps its size
        assert!((run.mean_radials[1] - 1.0).abs() < 0.01);
        let losses: Vec<f64> = run.report.epochs.iter().map(|e| e.loss).collect();
        let blocks = block_means(&losses, 10);
        assert!(blocks.windows(2).all(|w| w[1] <= w[0]), "{blocks:?}");
    }
}
