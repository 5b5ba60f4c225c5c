//! `tdnoise`: sampling, corruption, training, denoising, evaluation,
//! baselines and the toy studies from the command line.
//!
//! Exit codes: 0 success, 2 usage or data error, 3 internal error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Error caused by the invocation or its inputs (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "tdnoise", version, about = "Unsupervised point cloud denoising")]
pub struct Cli {
    /// Worker threads; defaults to TDNOISE_THREADS, then all cores. 1 is
    /// bit-reproducible.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Flat key = value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Config override, `key=value`; repeatable, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Poisson-disk sample a mesh surface.
    Sample(SampleArgs),
    /// Add synthetic noise to a cloud.
    Corrupt(CorruptArgs),
    /// Train a denoiser on a directory of clouds.
    Train(TrainArgs),
    /// Denoise a cloud with a trained checkpoint.
    Denoise(DenoiseArgs),
    /// Chamfer evaluation against a mesh and clean samples.
    Eval(EvalArgs),
    /// Mean or bilateral filtering, optionally tuned on a data set.
    Baseline(BaselineArgs),
    /// Packaged toy studies.
    Toy(ToyArgs),
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    pub mesh: PathBuf,
    /// Target number of samples.
    #[arg(long, conflicts_with = "radius")]
    pub count: Option<usize>,
    /// Minimum distance between samples.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Attach Lambertian colors from three random lights.
    #[arg(long)]
    pub shade: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// ply, ply-ascii or xyz; defaults from the output extension.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Gaussian,
    Scanner,
}

#[derive(Args, Debug)]
pub struct CorruptArgs {
    pub cloud: PathBuf,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    /// Gaussian or per-ray std as a fraction of the diagonal.
    #[arg(long, allow_negative_numbers = true)]
    pub level: Option<f64>,
    /// Scanner ring bias std as a fraction of the diagonal.
    #[arg(long, allow_negative_numbers = true)]
    pub bias: Option<f64>,
    /// Scanner position `x,y,z`.
    #[arg(long, allow_hyphen_values = true)]
    pub origin: Option<String>,
    #[arg(long)]
    pub rings: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory of noisy clouds; clean counterparts go in `clean/` under it
    /// with the same file names.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many epochs of this invocation and checkpoint.
    #[arg(long)]
    pub stop_after: Option<u64>,
    /// Evaluate against the clean clouds every N epochs (0 = never).
    #[arg(long, default_value_t = 0)]
    pub eval_every: u64,
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    pub cloud: PathBuf,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub pred: PathBuf,
    /// Ground-truth OFF or PLY mesh.
    pub mesh: PathBuf,
    pub clean: PathBuf,
    /// Report directory.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FilterArg {
    Mean,
    Bilateral,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    pub cloud: PathBuf,
    #[arg(long, value_enum)]
    pub filter: FilterArg,
    /// Grid-search the filter on this data set (noisy clouds plus `clean/`,
    /// optionally `mesh/<stem>.off`) before filtering.
    #[arg(long)]
    pub tune: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Modes,
    Bicolor,
    Anneal,
    Circle,
    Sphere,
    Ablation,
}

#[derive(Args, Debug)]
pub struct ToyArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn init_threads(cli: &Cli) -> anyhow::Result<()> {
    let n = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var("TDNOISE_THREADS") {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| UsageError(format!("TDNOISE_THREADS=`{v}`: {e}")))?,
            ),
            _ => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(UsageError("--threads must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() || err.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    match err.downcast_ref::<tdnoise_core::Error>() {
        Some(tdnoise_core::Error::NonFiniteGradient { .. }) => 3,
        Some(_) => 2,
        None => 3,
    }
}

/// The error chain joined by `: `, skipping causes already spelled out by
/// the message above them.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let c = cause.to_string();
        if !out.contains(&c) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&c);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let run = std::panic::catch_unwind(|| init_threads(&cli).and_then(|_| commands::run(&cli)));
    match run {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
        Err(_) => {
            eprintln!("error: internal invariant violated");
            ExitCode::from(3)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&UsageError("x".into()).into()), 2);
        let parse = tdnoise_core::Error::InvalidData("bad".into());
        assert_eq!(exit_code(&anyhow::Error::from(parse).context("reading")), 2);
        let grad = tdnoise_core::Error::NonFiniteGradient { param: "w".into() };
        assert_eq!(exit_code(&grad.into()), 3);
        assert_eq!(exit_code(&anyhow::anyhow!("broken")), 3);
    }

    #[test]
    fn repeated_causes_are_printed_once() {
        let io = tdnoise_core::Error::Io {
            path: "a.ply".into(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
        };
        let e = anyhow::Error::from(io).context("loading");
        let m = message(&e);
        assert_eq!(m.matches("gone").count(), 1, "{m}");
        assert!(m.starts_with("loading: "), "{m}");
    }
}
