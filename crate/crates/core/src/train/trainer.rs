use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DataLoss, TrainConfig, TrainMode};
use super::loss::{annealed_l0_grad, gamma_at, patches, power_mean, repulsion_with_grad};
use crate::cloud::{NeighborIndex, Point, PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::net::{adam_step, AdamState, Checkpoint, CheckpointMeta, Model, Tensor};
use crate::prior::{sample_prior_batch, PriorConfig};

/// Derives independent seeds from a base seed and a few counters.
pub fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One training cloud with everything that stays fixed across epochs.
pub struct CloudData<'a> {
    pub noisy: &'a PointCloud,
    pub diag: f64,
    index: NeighborIndex<'a>,
    prior: PriorConfig,
    patches: Vec<Vec<usize>>,
    clean_targets: Option<Vec<Point>>,
}

impl<'a> CloudData<'a> {
    pub fn new(noisy: &'a PointCloud, clean: Option<&PointCloud>, config: &TrainConfig) -> Result<Self> {
        if noisy.len() < 2 {
            return Err(Error::InvalidData(format!("training cloud `{}` has fewer than 2 points", noisy.id)));
        }
        let diag = noisy.bbox_diagonal();
        if !(diag > 0.0) {
            return Err(Error::InvalidData(format!("training cloud `{}` has zero extent", noisy.id)));
        }
        let prior = config.prior_for(diag);
        let index = NeighborIndex::build(noisy.positions(), prior.r)?;
        let patches = if config.lambda_r > 0.0 {
            patches(noisy.positions(), config.repulsion_radius(diag))?
        } else {
            Vec::new()
        };
        let clean_targets = match clean {
            Some(c) => Some(nearest_targets(noisy.positions(), c.positions())?),
            None if config.mode == TrainMode::Supervised => {
                return Err(Error::InvalidData(format!("supervised mode needs a clean cloud for `{}`", noisy.id)))
            }
            None => None,
        };
        Ok(CloudData {
            noisy,
            diag,
            index,
            prior,
            patches,
            clean_targets,
        })
    }
}

/// Closest clean point for every noisy point.
pub fn nearest_targets(noisy: &[Point], clean: &[Point]) -> Result<Vec<Point>> {
    if clean.is_empty() {
        return Err(Error::InvalidData("clean cloud is empty".into()));
    }
    let diag = crate::cloud::bbox_diagonal(clean);
    let cell = if diag > 0.0 {
        diag / (clean.len() as f64).cbrt().max(1.0)
    } else {
        1.0
    };
    let index = NeighborIndex::build(clean, cell)?;
    Ok(noisy.iter().map(|p| clean[index.nearest(p).0]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    /// Power mean of coordinate errors at the epoch's exponent, plus the
    /// weighted regularizer, in units of the prior radius.
    pub loss: f64,
    pub eval_error: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,eval_error,seconds\n");
        for e in &self.epochs {
            let eval = e.eval_error.map(|v| format!("{v:.9e}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:.9e},{},{:.3}", e.epoch, e.loss, eval, e.seconds);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: u64,
    /// Completed steps, skipped ones included.
    pub step: u64,
    pub total_steps: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig, clouds_per_epoch: usize) -> Result<Self> {
        config.validate()?;
        let model = Model::new(config.arch.clone(), config.seed)?;
        let total_steps = config.epochs * clouds_per_epoch as u64;
        let adam = AdamState::new(config.adam_for(total_steps), &model.params);
        Ok(Trainer {
            config,
            model,
            adam,
            epoch: 0,
            step: 0,
            total_steps,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(config: TrainConfig, ckpt: Checkpoint, clouds_per_epoch: usize) -> Result<Self> {
        let mut t = Trainer::new(config, clouds_per_epoch)?;
        if ckpt.model.arch != t.config.arch {
            return Err(Error::ArchitectureMismatch {
                expected: t.config.arch.to_string(),
                found: ckpt.model.arch.to_string(),
            });
        }
        t.model = ckpt.model;
        if let Some(a) = ckpt.adam {
            if !a.shapes_match(&t.model.params) {
                return Err(Error::Shape("optimizer state does not match parameters".into()));
            }
            t.adam = a;
        }
        t.epoch = ckpt.meta.epoch;
        t.step = ckpt.meta.step;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            meta: CheckpointMeta {
                step: self.step,
                epoch: self.epoch,
                seed: self.config.seed,
                extra: serde_json::to_value(&self.config).unwrap_or_default(),
            },
            adam: Some(self.adam.clone()),
        }
    }

    pub fn gamma(&self) -> f64 {
        gamma_at(self.step, self.total_steps, self.config.gamma_start, self.config.gamma_end)
    }

    /// One pass over `data`, one step per cloud. Returns the mean reported
    /// loss of the steps taken, `None` when all were skipped.
    pub fn train_epoch(&mut self, data: &[CloudData]) -> Result<Option<f64>> {
        let mut sum = 0.0;
        let mut taken = 0usize;
        for (ci, cd) in data.iter().enumerate() {
            if let Some(l) = self.train_step(cd, ci)? {
                sum += l;
                taken += 1;
            }
        }
        self.epoch += 1;
        Ok((taken > 0).then(|| sum / taken as f64))
    }

    fn targets(&self, cd: &CloudData, ci: usize) -> Result<Vec<Option<Point>>> {
        let pts = cd.noisy.positions();
        Ok(match self.config.mode {
            TrainMode::NoPrior => pts.iter().map(|&p| Some(p)).collect(),
            TrainMode::Supervised => cd
                .clean_targets
                .as_ref()
                .ok_or_else(|| Error::InvalidData("supervised mode without clean targets".into()))?
                .iter()
                .map(|&p| Some(p))
                .collect(),
            TrainMode::Unsupervised | TrainMode::NoColor => {
                let seed = mix_seed(self.config.seed, &[self.epoch, ci as u64, 1]);
                sample_prior_batch(cd.noisy, &cd.index, &cd.prior, seed)?
                    .into_iter()
                    .map(|s| s.map(|s| s.position))
                    .collect()
            }
        })
    }

    fn train_step(&mut self, cd: &CloudData, ci: usize) -> Result<Option<f64>> {
        let cfg = &self.config;
        let pts = cd.noisy.positions();
        let n = pts.len();
        let gamma = self.gamma();
        let l2 = cfg.mode == TrainMode::Supervised && cfg.supervised_loss == DataLoss::L2;
        let targets = self.targets(cd, ci)?;
        let active = targets.iter().filter(|t| t.is_some()).count();
        if active == 0 {
            log::warn!("step {}: no point of `{}` has a target; skipped", self.step, cd.noisy.id);
            self.step += 1;
            return Ok(None);
        }

        let pool_seed = mix_seed(cfg.seed, &[self.epoch, ci as u64, 0]);
        let pyr = self.model.pyramid(pts, pool_seed)?;
        let (tape, out) = self.model.forward_tape(&pyr, true)?;
        let d = Model::displacements(&tape, out);
        let preds: Vec<Point> = pts.iter().zip(&d).map(|(p, d)| p + d).collect();

        // Losses are measured in units of the prior radius so the objective
        // does not depend on the scale of the cloud.
        let inv_unit = 1.0 / cd.prior.r;
        let inv_active = 1.0 / active as f64;
        let mut seed = Tensor::zeros(n, 3);
        let mut errors = Vec::with_capacity(3 * active);
        for (i, t) in targets.iter().enumerate() {
            let Some(t) = t else { continue };
            let (p, q) = (preds[i] * inv_unit, t * inv_unit);
            let g = if l2 {
                (p - q) * 2.0
            } else {
                annealed_l0_grad(&p, &q, gamma, cfg.eps)
            };
            for c in 0..3 {
                seed.data[3 * i + c] = g[c] * inv_active * inv_unit;
                errors.push(p[c] - q[c]);
            }
        }
        let mut reported = power_mean(errors, if l2 { 2.0 } else { gamma }, if l2 { 0.0 } else { cfg.eps });
        if cfg.lambda_r > 0.0 {
            let (rep, g) = repulsion_with_grad(&preds, &cd.patches);
            let w = cfg.lambda_r * cfg.repulsion_sign;
            for (i, gi) in g.iter().enumerate() {
                for c in 0..3 {
                    seed.data[3 * i + c] += w * gi[c] * inv_unit;
                }
            }
            reported += cfg.lambda_r * rep * inv_unit;
        }

        let grads = tape.backward(out, seed)?;
        drop(tape);
        adam_step(&mut self.adam, &mut self.model.params, &grads.params)?;
        self.step += 1;
        Ok(Some(reported))
    }

    /// Runs up to `epochs` more epochs, stopping at the configured total.
    /// `eval` is called after every epoch.
    pub fn run(
        &mut self,
        data: &[CloudData],
        epochs: u64,
        mut eval: impl FnMut(&Model) -> Option<f64>,
    ) -> Result<TrainReport> {
        let mut report = TrainReport::default();
        let end = self.epoch.saturating_add(epochs).min(self.config.epochs);
        while self.epoch < end {
            let t0 = Instant::now();
            let loss = self.train_epoch(data)?.unwrap_or(f64::NAN);
            let eval_error = eval(&self.model);
            let rec = EpochRecord {
                epoch: self.epoch,
                loss,
                eval_error,
                seconds: t0.elapsed().as_secs_f64(),
            };
            log::info!(
                "epoch {} loss {:.6e} gamma {:.3} lr {:.2e}{}",
                rec.epoch,
                rec.loss,
                self.gamma(),
                self.adam.current_lr(),
                eval_error.map(|e| format!(" eval {e:.6e}")).unwrap_or_default()
            );
            report.epochs.push(rec);
        }
        Ok(report)
    }
}

fn check_mode(config: &TrainConfig, supervised: bool) -> Result<()> {
    if (config.mode == TrainMode::Supervised) != supervised {
        return Err(Error::param(
            "mode",
            format!("`{}` does not match the {} entry point", config.mode, if supervised { "supervised" } else { "unsupervised" }),
        ));
    }
    Ok(())
}

/// Trains on noisy clouds alone (`Unsupervised`, `NoPrior` or `NoColor`).
pub fn train_unsupervised(dataset: &[PointCloud], config: &TrainConfig) -> Result<(Model, TrainReport)> {
    train_unsupervised_with(dataset, config, |_| None)
}

pub fn train_unsupervised_with(
    dataset: &[PointCloud],
    config: &TrainConfig,
    eval: impl FnMut(&Model) -> Option<f64>,
) -> Result<(Model, TrainReport)> {
    check_mode(config, false)?;
    if dataset.is_empty() {
        return Err(Error::InvalidData("empty training set".into()));
    }
    let data = dataset
        .iter()
        .map(|c| CloudData::new(c, None, config))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Trainer::new(config.clone(), data.len())?;
    let report = t.run(&data, config.epochs, eval)?;
    Ok((t.model, report))
}

/// Trains against the nearest clean point of every noisy point.
pub fn train_supervised(pairs: &[(PointCloud, PointCloud)], config: &TrainConfig) -> Result<(Model, TrainReport)> {
    train_supervised_with(pairs, config, |_| None)
}

pub fn train_supervised_with(
    pairs: &[(PointCloud, PointCloud)],
    config: &TrainConfig,
    eval: impl FnMut(&Model) -> Option<f64>,
) -> Result<(Model, TrainReport)> {
    check_mode(config, true)?;
    if pairs.is_empty() {
        return Err(Error::InvalidData("empty training set".into()));
    }
    let data = pairs
        .iter()
        .map(|(n, c)| CloudData::new(n, Some(c), config))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Trainer::new(config.clone(), data.len())?;
    let report = t.run(&data, config.epochs, eval)?;
    Ok((t.model, report))
}

/// Mean norm of a displacement field.
pub fn mean_norm(d: &[Vec3]) -> f64 {
    if d.is_empty() {
        0.0
    } else {
        d.iter().map(|v| v.norm()).sum::<f64>() / d.len() as f64
    }
}
