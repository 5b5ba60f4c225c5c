//! Flat `key = value` run configuration.
//!
//! Every key has a default. Files may set any subset; flags override files.
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use tdnoise_core::filters::FilterConfig;
use tdnoise_core::net::{AdamConfig, ArchSpec};
use tdnoise_core::noise::{NoiseKind, NoiseSpec};
use tdnoise_core::prior::Kernel;
use tdnoise_core::train::{DataLoss, DenoiseConfig, TrainConfig, TrainMode};
use tdnoise_core::Point;

use crate::UsageError;

/// `(key, default, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed of every random stream"),
    ("data_dir", "", "training or tuning data directory"),
    ("output_dir", "", "run directory; outputs and the echoed config go here"),
    ("prior.kernel", "gaussian", "gaussian | wendland | imq"),
    ("prior.r_frac", "0.05", "support radius, fraction of each cloud's diagonal"),
    ("prior.alpha", "0.5", "spatial scale factor"),
    ("prior.beta", "2.309401076758503", "appearance weight, 0 disables color"),
    ("prior.sigma", "1", "Gaussian kernel bandwidth"),
    ("prior.max_tries", "16", "rejection sampling attempts per point"),
    ("prior.include_self", "false", "let a point be its own prior sample"),
    ("train.mode", "unsupervised", "unsupervised | supervised | noprior | nocolor"),
    ("train.epochs", "100", "passes over the data set"),
    ("train.lr", "0.005", "Adam learning rate"),
    ("train.lr_decay", "0.7", "learning-rate factor applied every decay interval"),
    ("train.decay_fraction", "0.2", "decay interval as a fraction of all steps, 0 = off"),
    ("train.eps", "0.01", "offset inside the L0 power, prior-radius units"),
    ("train.gamma_start", "2", "first L0 exponent"),
    ("train.gamma_end", "0", "last L0 exponent"),
    ("train.lambda_r", "0.05", "regularizer weight"),
    ("train.repulsion_sign", "1", "+1 pulls patch extremes together, -1 pushes apart"),
    ("train.supervised_loss", "l0", "l0 | l2, supervised mode only"),
    ("arch.r1_frac", "0.05", "level-1 receptive field, fraction of the diagonal"),
    ("arch.r2_frac", "0.1", "level-2 receptive field, fraction of the diagonal"),
    ("denoise.iterations", "2", "network passes at inference"),
    ("denoise.lowfreq_frac", "0.1", "low-frequency removal radius, fraction of the diagonal"),
    ("denoise.remove_low_frequency", "true", "subtract the smooth part of each displacement field"),
    ("noise.kind", "gaussian", "gaussian | scanner"),
    ("noise.level", "0.01", "per-coordinate or per-ray std, fraction of the diagonal"),
    ("noise.bias", "0", "scanner ring bias std, fraction of the diagonal"),
    ("noise.rings", "64", "scanner elevation rings"),
    ("noise.origin", "0,0,0", "scanner position x,y,z"),
    ("filter.radius_frac", "0.03", "filter neighborhood radius, fraction of the diagonal"),
    ("filter.sigma_d_frac", "0.015", "bilateral spatial bandwidth, fraction of the diagonal"),
    ("filter.sigma_n_frac", "0.01", "bilateral normal-range bandwidth, fraction of the diagonal"),
    ("filter.iterations", "1", "bilateral passes"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (*k, v.to_string())).collect(),
        }
    }
}

fn known(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(k, _, _)| *k)
}

impl RunConfig {
    pub fn parse(text: &str, label: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("{label}:{}: expected `key = value`, got `{line}`", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| UsageError(format!("{label}:{}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// File at `path` if given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = known(key).ok_or_else(|| UsageError(format!("unknown config key `{key}`")))?;
        self.values.insert(k, value.to_string());
        Ok(())
    }

    /// Applies `key=value` overrides from the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| UsageError(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("`{key}` is not a config key"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse::<T>()
            .map_err(|e| UsageError(format!("config `{key}` = `{raw}`: {e}")).into())
    }

    /// Every key with its resolved value, one per line, in key order.
    pub fn echo(&self) -> String {
        let mut s = String::from("# resolved tdnoise configuration\n");
        for (k, _, doc) in KEYS {
            let _ = writeln!(s, "# {doc}\n{k} = {}", self.raw(k));
        }
        s
    }

    pub fn write_echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let p = dir.join("config.txt");
        std::fs::write(&p, self.echo()).with_context(|| format!("writing {}", p.display()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    fn kernel(&self) -> Result<Kernel> {
        Ok(self.raw("prior.kernel").parse::<Kernel>().map_err(|e| UsageError(e.to_string()))?)
    }

    pub fn arch(&self) -> Result<ArchSpec> {
        Ok(ArchSpec {
            r1_frac: self.get("arch.r1_frac")?,
            r2_frac: self.get("arch.r2_frac")?,
            ..ArchSpec::default()
        })
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let mode: TrainMode = self.raw("train.mode").parse().map_err(|e: tdnoise_core::Error| UsageError(e.to_string()))?;
        let supervised_loss: DataLoss = self
            .raw("train.supervised_loss")
            .parse()
            .map_err(|e: tdnoise_core::Error| UsageError(e.to_string()))?;
        let cfg = TrainConfig {
            arch: self.arch()?,
            mode,
            supervised_loss,
            epochs: self.get("train.epochs")?,
            adam: AdamConfig {
                lr: self.get("train.lr")?,
                decay_factor: self.get("train.lr_decay")?,
                ..AdamConfig::default()
            },
            decay_fraction: self.get("train.decay_fraction")?,
            eps: self.get("train.eps")?,
            gamma_start: self.get("train.gamma_start")?,
            gamma_end: self.get("train.gamma_end")?,
            lambda_r: self.get("train.lambda_r")?,
            repulsion_sign: self.get("train.repulsion_sign")?,
            repulsion_radius_frac: None,
            prior_kernel: self.kernel()?,
            prior_r_frac: self.get("prior.r_frac")?,
            prior_alpha: self.get("prior.alpha")?,
            prior_beta: self.get("prior.beta")?,
            prior_sigma: self.get("prior.sigma")?,
            prior_max_tries: self.get("prior.max_tries")?,
            prior_include_self: self.get("prior.include_self")?,
            seed: self.seed()?,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn denoise(&self) -> Result<DenoiseConfig> {
        let cfg = DenoiseConfig {
            iterations: self.get("denoise.iterations")?,
            lowfreq_frac: self.get("denoise.lowfreq_frac")?,
            remove_low_frequency: self.get("denoise.remove_low_frequency")?,
            pool_seed: self.seed()?,
        };
        if cfg.iterations == 0 {
            bail!(UsageError("denoise.iterations must be >= 1".into()));
        }
        Ok(cfg)
    }

    pub fn noise(&self) -> Result<NoiseSpec> {
        let level: f64 = self.get("noise.level")?;
        let spec = match self.raw("noise.kind") {
            "gaussian" => NoiseSpec {
                kind: NoiseKind::Gaussian { std_frac: level },
                seed: self.seed()?,
            },
            "scanner" => {
                let o: Vec<f64> = self
                    .raw("noise.origin")
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| UsageError(format!("config `noise.origin`: {e}")))?;
                if o.len() != 3 {
                    bail!(UsageError("config `noise.origin` needs three comma-separated numbers".into()));
                }
                NoiseSpec {
                    kind: NoiseKind::Scanner {
                        origin: Point::new(o[0], o[1], o[2]),
                        bias_std_frac: self.get("noise.bias")?,
                        ray_std_frac: level,
                        ring_count: self.get("noise.rings")?,
                    },
                    seed: self.seed()?,
                }
            }
            other => bail!(UsageError(format!("config `noise.kind`: unknown noise `{other}`"))),
        };
        spec.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(spec)
    }

    /// Filter settings with radii resolved for a cloud of diagonal `diag`.
    pub fn filter(&self, diag: f64) -> Result<FilterConfig> {
        let cfg = FilterConfig {
            radius: self.get::<f64>("filter.radius_frac")? * diag,
            sigma_d: self.get::<f64>("filter.sigma_d_frac")? * diag,
            sigma_n: self.get::<f64>("filter.sigma_n_frac")? * diag,
            iterations: self.get("filter.iterations")?,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}
