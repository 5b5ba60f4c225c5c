use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{AdamConfig, ArchSpec};
use crate::prior::{Kernel, PriorConfig, DEFAULT_BETA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Prior samples as targets, colors included when present.
    Unsupervised,
    /// Nearest clean point as target.
    Supervised,
    /// The point itself as target.
    NoPrior,
    /// Prior samples with `beta = 0`.
    NoColor,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Unsupervised => "unsupervised",
            TrainMode::Supervised => "supervised",
            TrainMode::NoPrior => "noprior",
            TrainMode::NoColor => "nocolor",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unsupervised" | "full" => Ok(TrainMode::Unsupervised),
            "supervised" => Ok(TrainMode::Supervised),
            "noprior" => Ok(TrainMode::NoPrior),
            "nocolor" => Ok(TrainMode::NoColor),
            _ => Err(Error::param("mode", format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataLoss {
    AnnealedL0,
    L2,
}

impl FromStr for DataLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l0" | "annealed_l0" => Ok(DataLoss::AnnealedL0),
            "l2" => Ok(DataLoss::L2),
            _ => Err(Error::param("loss", format!("unknown loss `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchSpec,
    pub mode: TrainMode,
    /// Loss used in supervised mode; the other modes always use annealed L0.
    pub supervised_loss: DataLoss,
    pub epochs: u64,
    pub adam: AdamConfig,
    /// Fraction of all steps between learning-rate decays; 0 disables decay.
    pub decay_fraction: f64,
    /// Offset inside the L0 power, in units of the prior radius like every
    /// training error.
    pub eps: f64,
    pub gamma_start: f64,
    pub gamma_end: f64,
    pub lambda_r: f64,
    /// +1 is the regularizer as written (pulls patch extremes together), -1
    /// pushes them apart.
    pub repulsion_sign: f64,
    /// Patch radius as a fraction of the diagonal; `None` reuses the prior
    /// radius.
    pub repulsion_radius_frac: Option<f64>,
    pub prior_kernel: Kernel,
    /// Prior support radius as a fraction of each cloud's diagonal.
    pub prior_r_frac: f64,
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub prior_sigma: f64,
    pub prior_max_tries: usize,
    pub prior_include_self: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchSpec::default(),
            mode: TrainMode::Unsupervised,
            supervised_loss: DataLoss::AnnealedL0,
            epochs: 100,
            adam: AdamConfig::default(),
            decay_fraction: 0.2,
            eps: 0.01,
            gamma_start: 2.0,
            gamma_end: 0.0,
            lambda_r: 0.05,
            repulsion_sign: 1.0,
            repulsion_radius_frac: None,
            prior_kernel: Kernel::Gaussian,
            prior_r_frac: 0.05,
            prior_alpha: 0.5,
            prior_beta: DEFAULT_BETA,
            prior_sigma: 1.0,
            prior_max_tries: 16,
            prior_include_self: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be >= 1"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::param("eps", format!("must be > 0, got {}", self.eps)));
        }
        for (name, g) in [("gamma_start", self.gamma_start), ("gamma_end", self.gamma_end)] {
            if !(0.0..=2.0).contains(&g) {
                return Err(Error::param(name, format!("must lie in [0, 2], got {g}")));
            }
        }
        if !(self.lambda_r >= 0.0 && self.lambda_r.is_finite()) {
            return Err(Error::param("lambda_r", format!("must be >= 0, got {}", self.lambda_r)));
        }
        if self.repulsion_sign.abs() != 1.0 {
            return Err(Error::param("repulsion_sign", "must be +1 or -1"));
        }
        if let Some(f) = self.repulsion_radius_frac {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::param("repulsion_radius", format!("must be > 0, got {f}")));
            }
        }
        if !(0.0..=1.0).contains(&self.decay_fraction) {
            return Err(Error::param("decay_fraction", "must lie in [0, 1]"));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return Err(Error::param("lr", format!("must be > 0, got {}", a.lr)));
        }
        if !(a.decay_factor > 0.0 && a.decay_factor <= 1.0) {
            return Err(Error::param("lr_decay", format!("must lie in (0, 1], got {}", a.decay_factor)));
        }
        self.prior_for(1.0).validate()
    }

    /// Prior with absolute radius for a cloud of diagonal `diag`. `NoColor`
    /// zeroes `beta`.
    pub fn prior_for(&self, diag: f64) -> PriorConfig {
        PriorConfig {
            kernel: self.prior_kernel,
            r: self.prior_r_frac * diag,
            alpha: self.prior_alpha,
            beta: if self.mode == TrainMode::NoColor { 0.0 } else { self.prior_beta },
            sigma: self.prior_sigma,
            max_tries: self.prior_max_tries,
            include_self: self.prior_include_self,
        }
    }

    pub fn repulsion_radius(&self, diag: f64) -> f64 {
        self.repulsion_radius_frac.unwrap_or(self.prior_r_frac) * diag
    }

    /// Adam settings with the decay interval resolved for `total_steps`.
    pub fn adam_for(&self, total_steps: u64) -> AdamConfig {
        let every = if self.decay_fraction > 0.0 {
            ((total_steps as f64 * self.decay_fraction).round() as u64).max(1)
        } else {
            0
        };
        AdamConfig {
            decay_every: every,
            ..self.adam
        }
    }
}
