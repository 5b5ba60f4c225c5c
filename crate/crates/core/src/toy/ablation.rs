use std::fmt::Write as _;

use crate::cloud::{min_dist_for_count, sample_surface, shapes, PointCloud, TriangleMesh};
use crate::error::{Error, Result};
use crate::eval::{chamfer_with, TriangleGrid};
use crate::filters::{bilateral_filter, bilateral_grid, grid_search, mean_filter, mean_grid, FilterConfig};
use crate::meshio::shade_lambertian;
use crate::noise::corrupt_gaussian;
use crate::train::{denoise_with, mix_seed, train_unsupervised, DenoiseConfig, TrainConfig, TrainMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Full,
    NoColor,
    NoPrior,
    Mean,
    Bilateral,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Full, Method::NoColor, Method::NoPrior, Method::Mean, Method::Bilateral];

    pub fn name(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::NoColor => "nocolor",
            Method::NoPrior => "noprior",
            Method::Mean => "mean",
            Method::Bilateral => "bilateral",
        }
    }
}

/// One shape of the mini dataset: its mesh, Lambertian-shaded clean samples
/// and a Gaussian-noise copy.
#[derive(Debug, Clone)]
pub struct MiniSample {
    pub name: &'static str,
    pub mesh: TriangleMesh,
    pub grid: TriangleGrid,
    pub clean: PointCloud,
    pub noisy: PointCloud,
}

fn mini_meshes() -> Vec<(&'static str, TriangleMesh)> {
    vec![
        ("cube", shapes::cube()),
        ("sphere", shapes::icosphere(3)),
        ("cylinder", shapes::cylinder(0.5, 1.2, 48)),
        ("torus", shapes::torus(0.8, 0.3, 48, 24)),
        ("cone", shapes::cone(0.6, 1.2, 48)),
    ]
}

/// Cube, sphere, cylinder, torus and cone with about `points` samples each
/// and noise of std `noise_frac` times each clean cloud's diagonal.
pub fn mini_dataset(points: usize, noise_frac: f64, seed: u64) -> Result<Vec<MiniSample>> {
    mini_meshes()
        .into_iter()
        .enumerate()
        .map(|(k, (name, mesh))| {
            let s = mix_seed(seed, &[k as u64]);
            let d = min_dist_for_count(&mesh, points, s)?;
            let (cloud, normals) = sample_surface(&mesh, d, s)?;
            let clean = shade_lambertian(&cloud, &normals, s)?.named(name);
            let noisy = corrupt_gaussian(&clean, noise_frac, mix_seed(s, &[1]))?.named(name);
            Ok(MiniSample {
                name,
                grid: TriangleGrid::build(&mesh)?,
                mesh,
                clean,
                noisy,
            })
        })
        .collect()
}

fn mean_chamfer(set: &[MiniSample], preds: &[PointCloud]) -> Result<f64> {
    let mut acc = 0.0;
    for (s, p) in set.iter().zip(preds) {
        acc += chamfer_with(p, &s.mesh, &s.grid, &s.clean)?.chamfer;
    }
    Ok(acc / set.len() as f64)
}

#[derive(Debug, Clone)]
pub struct AblationConfig {
    pub points: usize,
    pub noise_frac: f64,
    pub seeds: Vec<u64>,
    pub denoise: DenoiseConfig,
    /// Shared training settings; the mode is set per method.
    pub train: TrainConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            points: 1000,
            noise_frac: 0.01,
            seeds: vec![0, 1],
            denoise: DenoiseConfig::default(),
            train: TrainConfig {
                epochs: 200,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRun {
    pub seed: u64,
    pub noisy: f64,
    /// Mean held-out Chamfer per method, in [`Method::ALL`] order.
    pub chamfer: [f64; 5],
    pub mean_radius_frac: f64,
    pub bilateral: FilterConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationOutcome {
    pub runs: Vec<AblationRun>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl AblationOutcome {
    pub fn median(&self, m: Method) -> f64 {
        let i = Method::ALL.iter().position(|&x| x == m).expect("listed method");
        median(self.runs.iter().map(|r| r.chamfer[i]).collect())
    }

    pub fn median_noisy(&self) -> f64 {
        median(self.runs.iter().map(|r| r.noisy).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,noisy");
        for m in Method::ALL {
            s.push(',');
            s.push_str(m.name());
        }
        s.push('\n');
        for r in &self.runs {
            let _ = write!(s, "{},{:.9e}", r.seed, r.noisy);
            for v in r.chamfer {
                let _ = write!(s, ",{v:.9e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Trains the three variants and tunes both filters on one realization of
/// the mini dataset per seed, then scores all of them on a fresh one.
pub fn ablation_experiment(cfg: &AblationConfig) -> Result<AblationOutcome> {
    if cfg.seeds.is_empty() {
        return Err(Error::param("seeds", "need at least one seed"));
    }
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let train = mini_dataset(cfg.points, cfg.noise_frac, mix_seed(seed, &[0]))?;
        let test = mini_dataset(cfg.points, cfg.noise_frac, mix_seed(seed, &[1]))?;
        let train_noisy: Vec<PointCloud> = train.iter().map(|s| s.noisy.clone()).collect();
        let test_noisy: Vec<&PointCloud> = test.iter().map(|s| &s.noisy).collect();
        let mut chamfer = [0.0; 5];

        for (i, mode) in [TrainMode::Unsupervised, TrainMode::NoColor, TrainMode::NoPrior].into_iter().enumerate() {
            let tc = TrainConfig {
                mode,
                seed: mix_seed(cfg.train.seed, &[seed]),
                ..cfg.train.clone()
            };
            let (model, _) = train_unsupervised(&train_noisy, &tc)?;
            let preds = test_noisy
                .iter()
                .map(|c| denoise_with(&model, c, &cfg.denoise).map(|r| r.0))
                .collect::<Result<Vec<_>>>()?;
            chamfer[i] = mean_chamfer(&test, &preds)?;
            log::info!("seed {seed} {mode}: {:.6e}", chamfer[i]);
        }

        let mean_fracs = mean_grid(1.0);
        let (frac, _) = grid_search(&mean_fracs, |&f| {
            let preds = train
                .iter()
                .map(|s| mean_filter(&s.noisy, f * s.noisy.bbox_diagonal()))
                .collect::<Result<Vec<_>>>()?;
            mean_chamfer(&train, &preds)
        })?;
        let preds = test
            .iter()
            .map(|s| mean_filter(&s.noisy, frac * s.noisy.bbox_diagonal()))
            .collect::<Result<Vec<_>>>()?;
        chamfer[3] = mean_chamfer(&test, &preds)?;

        let scaled = |c: &FilterConfig, diag: f64| FilterConfig {
            radius: c.radius * diag,
            sigma_d: c.sigma_d * diag,
            sigma_n: c.sigma_n * diag,
            iterations: c.iterations,
        };
        let (best, _) = grid_search(&bilateral_grid(1.0), |c| {
            let preds = train
                .iter()
                .map(|s| bilateral_filter(&s.noisy, &scaled(c, s.noisy.bbox_diagonal())))
                .collect::<Result<Vec<_>>>()?;
            mean_chamfer(&train, &preds)
        })?;
        let preds = test
            .iter()
            .map(|s| bilateral_filter(&s.noisy, &scaled(&best, s.noisy.bbox_diagonal())))
            .collect::<Result<Vec<_>>>()?;
        chamfer[4] = mean_chamfer(&test, &preds)?;

        let noisy_preds: Vec<PointCloud> = test_noisy.iter().map(|c| (*c).clone()).collect();
        runs.push(AblationRun {
            seed,
            noisy: mean_chamfer(&test, &noisy_preds)?,
            chamfer,
            mean_radius_frac: frac,
            bilateral: best,
        });
        log::info!("seed {seed}: {:?}", runs.last().map(|r| r.chamfer));
    }
    Ok(AblationOutcome { runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0]), 2.5);
        assert!(median(vec![]).is_nan());
    }

    #[test]
    fn mini_dataset_has_five_colored_shapes() {
        let set = mini_dataset(300, 0.01, 2).unwrap();
        let names: Vec<&str> = set.iter().map(|s| s.name).collect();
        assert_eq!(names, ["cube", "sphere", "cylinder", "torus", "cone"]);
        for s in &set {
            assert!(s.clean.has_colors() && s.noisy.has_colors());
            assert_eq!(s.clean.len(), s.noisy.len());
            assert!(s.clean.len() > 200);
        }
    }

    #[test]
    fn outcome_table() {
        let run = AblationRun {
            seed: 4,
            noisy: 1.0,
            chamfer: [0.1, 0.2, 0.3, 0.4, 0.5],
            mean_radius_frac: 0.01,
            bilateral: bilateral_grid(1.0)[0],
        };
        let o = AblationOutcome { runs: vec![run] };
        assert_eq!(o.median(Method::NoPrior), 0.3);
        let csv = o.to_csv();
        assert!(csv.starts_with("seed,noisy,full,nocolor,noprior,mean,bilateral\n4,"));
    }
}
