use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tdnoise_core::cloud::{min_dist_for_count, sample_surface};
use tdnoise_core::eval::{chamfer, chamfer_sampled, error_colorize};
use tdnoise_core::filters::{bilateral_filter, bilateral_grid, grid_search, mean_filter, mean_grid, FilterConfig};
use tdnoise_core::meshio::{read_geometry, shade_lambertian, write_pointcloud_with_comments, Format};
use tdnoise_core::net::Checkpoint;
use tdnoise_core::toy;
use tdnoise_core::train::{denoise_with, CloudData, TrainMode, TrainReport, Trainer};
use tdnoise_core::{PointCloud, TriangleMesh};

use crate::config::RunConfig;
use crate::{
    BaselineArgs, Cli, Command, CorruptArgs, DenoiseArgs, EvalArgs, Experiment, FilterArg, NoiseArg, SampleArgs,
    ToyArgs, TrainArgs, UsageError,
};

const CLOUD_EXTENSIONS: &[&str] = &["ply", "xyz", "off"];

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    cfg.apply_overrides(&cli.overrides)?;
    match &cli.command {
        Command::Sample(a) => sample(cfg, a),
        Command::Corrupt(a) => corrupt(cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Denoise(a) => denoise(cfg, a),
        Command::Eval(a) => eval(cfg, a),
        Command::Baseline(a) => baseline(cfg, a),
        Command::Toy(a) => run_toy(cfg, a),
    }
}

fn set_opt(cfg: &mut RunConfig, key: &str, v: Option<impl ToString>) -> Result<()> {
    match v {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn load_cloud(path: &Path) -> Result<PointCloud> {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(read_geometry(path)?.into_cloud().named(stem))
}

fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    Ok(read_geometry(path)?.into_mesh()?)
}

/// Output format from `--format`, else from the extension; PLY is binary
/// unless asked otherwise.
fn output_format(path: &Path, format: Option<&str>) -> Result<Format> {
    let f = match format {
        Some(f) => f.parse::<Format>()?,
        None => match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("xyz") => Format::Xyz,
            _ => Format::PlyBinaryLittleEndian,
        },
    };
    if f == Format::Off {
        bail!(UsageError("point clouds are written as PLY or XYZ, not OFF".into()));
    }
    Ok(f)
}

fn echo_beside(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut name = out.as_os_str().to_owned();
    name.push(".config.txt");
    let p = PathBuf::from(name);
    std::fs::write(&p, cfg.echo()).with_context(|| format!("writing {}", p.display()))
}

fn write_cloud(cfg: &RunConfig, cloud: &PointCloud, out: &Path, format: Option<&str>, comments: &[String]) -> Result<()> {
    let f = output_format(out, format)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_pointcloud_with_comments(cloud, out, f, comments)?;
    echo_beside(cfg, out)?;
    log::info!("wrote {} points to {}", cloud.len(), out.display());
    Ok(())
}

fn sample(mut cfg: RunConfig, a: &SampleArgs) -> Result<()> {
    set_opt(&mut cfg, "seed", a.seed)?;
    let seed = cfg.seed()?;
    let mesh = load_mesh(&a.mesh)?;
    let radius = match (a.count, a.radius) {
        (Some(0), _) => bail!(UsageError("--count must be >= 1".into())),
        (Some(n), _) => min_dist_for_count(&mesh, n, seed)?,
        (None, Some(r)) => r,
        (None, None) => bail!(UsageError("give --count or --radius".into())),
    };
    log::info!("sampling {} with minimum distance {radius:.6e}", a.mesh.display());
    let (cloud, normals) = sample_surface(&mesh, radius, seed)?;
    let cloud = if a.shade {
        shade_lambertian(&cloud, &normals, seed)?
    } else {
        cloud
    };
    write_cloud(&cfg, &cloud, &a.output, a.format.as_deref(), &[format!("poisson-disk min_dist {radius}")])
}

fn corrupt(mut cfg: RunConfig, a: &CorruptArgs) -> Result<()> {
    set_opt(
        &mut cfg,
        "noise.kind",
        a.noise.map(|n| match n {
            NoiseArg::Gaussian => "gaussian",
            NoiseArg::Scanner => "scanner",
        }),
    )?;
    set_opt(&mut cfg, "noise.level", a.level)?;
    set_opt(&mut cfg, "noise.bias", a.bias)?;
    set_opt(&mut cfg, "noise.origin", a.origin.as_ref())?;
    set_opt(&mut cfg, "noise.rings", a.rings)?;
    set_opt(&mut cfg, "seed", a.seed)?;
    let spec = cfg.noise()?;
    let cloud = load_cloud(&a.cloud)?;
    let level: f64 = cfg.get("noise.level")?;
    log::info!("noise std {:.6e} (diagonal {:.6e})", level * cloud.bbox_diagonal(), cloud.bbox_diagonal());
    let noisy = spec.apply(&cloud)?;
    write_cloud(&cfg, &noisy, &a.output, a.format.as_deref(), &[spec.to_string()])
}

fn is_cloud_file(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| CLOUD_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Cloud files directly under `dir`, sorted by name.
fn list_clouds(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| UsageError(format!("cannot read data directory {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        if is_cloud_file(&p) {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!(UsageError(format!("no .ply/.xyz/.off clouds in {}", dir.display())));
    }
    Ok(files)
}

/// Noisy clouds of `dir` with their counterparts in `dir/clean`, when present.
fn load_dataset(dir: &Path, need_clean: bool) -> Result<Vec<(PointCloud, Option<PointCloud>)>> {
    let mut out = Vec::new();
    for p in list_clouds(dir)? {
        let noisy = load_cloud(&p)?;
        let cp = dir.join("clean").join(p.file_name().unwrap_or_default());
        let clean = if cp.is_file() {
            Some(load_cloud(&cp)?)
        } else if need_clean {
            bail!(UsageError(format!("missing clean counterpart {}", cp.display())));
        } else {
            None
        };
        out.push((noisy, clean));
    }
    Ok(out)
}

fn data_dir(cfg: &RunConfig, flag: Option<&PathBuf>) -> Result<PathBuf> {
    match flag {
        Some(d) => Ok(d.clone()),
        None if !cfg.raw("data_dir").is_empty() => Ok(PathBuf::from(cfg.raw("data_dir"))),
        None => bail!(UsageError("give --data or set data_dir".into())),
    }
}

fn train(mut cfg: RunConfig, a: &TrainArgs) -> Result<()> {
    set_opt(&mut cfg, "train.mode", a.mode.as_ref())?;
    set_opt(&mut cfg, "train.epochs", a.epochs)?;
    set_opt(&mut cfg, "seed", a.seed)?;
    set_opt(&mut cfg, "data_dir", a.data.as_ref().map(|d| d.display()))?;
    set_opt(&mut cfg, "output_dir", a.output.as_ref().map(|d| d.display()))?;
    let tc = cfg.train()?;
    let dcfg = cfg.denoise()?;
    let data = data_dir(&cfg, a.data.as_ref())?;
    let out = match cfg.raw("output_dir") {
        "" => bail!(UsageError("give -o or set output_dir".into())),
        d => PathBuf::from(d),
    };
    if a.stop_after == Some(0) {
        bail!(UsageError("--stop-after must be >= 1".into()));
    }

    let set = load_dataset(&data, tc.mode == TrainMode::Supervised)?;
    for (noisy, _) in &set {
        let diag = noisy.bbox_diagonal();
        log::info!(
            "{}: {} points, prior radius {:.6e}, receptive fields {:.6e} / {:.6e}",
            noisy.id,
            noisy.len(),
            tc.prior_r_frac * diag,
            tc.arch.r1_frac * diag,
            tc.arch.r2_frac * diag,
        );
    }
    let cds = set
        .iter()
        .map(|(n, c)| CloudData::new(n, c.as_ref(), &tc))
        .collect::<tdnoise_core::Result<Vec<_>>>()?;

    let mut trainer = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::load_expecting(p, &tc.arch)?;
            log::info!("resuming {} at epoch {}", p.display(), ck.meta.epoch);
            Trainer::resume(tc.clone(), ck, cds.len())?
        }
        None => Trainer::new(tc.clone(), cds.len())?,
    };
    cfg.write_echo(&out)?;

    let eval_pairs: Vec<(&PointCloud, &PointCloud)> =
        set.iter().filter_map(|(n, c)| c.as_ref().map(|c| (n, c))).collect();
    if a.eval_every > 0 && eval_pairs.is_empty() {
        log::warn!("--eval-every given but {} has no clean/ counterparts", data.display());
    }
    let mut epoch = trainer.epoch;
    let report = trainer.run(&cds, a.stop_after.unwrap_or(u64::MAX), |model| {
        epoch += 1;
        if a.eval_every == 0 || eval_pairs.is_empty() || epoch % a.eval_every != 0 {
            return None;
        }
        let mut sum = 0.0;
        for (noisy, clean) in &eval_pairs {
            let r = denoise_with(model, noisy, &dcfg).and_then(|(pred, _)| chamfer_sampled(&pred, clean));
            match r {
                Ok(r) => sum += r.chamfer,
                Err(e) => {
                    log::warn!("evaluation failed: {e}");
                    return None;
                }
            }
        }
        Some(sum / eval_pairs.len() as f64)
    })?;

    let ckpt = out.join("model.ckpt");
    trainer.checkpoint().save(&ckpt)?;
    write_report(&report, &out.join("train.csv"), a.resume.is_some())?;
    log::info!("epoch {}/{}; checkpoint {}", trainer.epoch, tc.epochs, ckpt.display());
    Ok(())
}

/// Writes the per-epoch table, appending rows when continuing a run whose
/// table already exists.
fn write_report(report: &TrainReport, path: &Path, append: bool) -> Result<()> {
    if append && path.is_file() {
        let csv = report.to_csv();
        let rows = csv.split_once('\n').map(|(_, r)| r).unwrap_or("");
        let mut text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        text.push_str(rows);
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    } else {
        Ok(report.write_csv(path)?)
    }
}

fn denoise(mut cfg: RunConfig, a: &DenoiseArgs) -> Result<()> {
    set_opt(&mut cfg, "denoise.iterations", a.iterations)?;
    let dcfg = cfg.denoise()?;
    let arch = cfg.arch()?;
    let ck = Checkpoint::load_expecting(&a.checkpoint, &arch)?;
    let cloud = load_cloud(&a.cloud)?;
    let diag = cloud.bbox_diagonal();
    log::info!(
        "receptive fields {:.6e} / {:.6e}, low-frequency radius {:.6e}",
        arch.r1_frac * diag,
        arch.r2_frac * diag,
        dcfg.lowfreq_frac * diag
    );
    let (out, _) = denoise_with(&ck.model, &cloud, &dcfg)?;
    write_cloud(&cfg, &out, &a.output, a.format.as_deref(), &[format!("denoised, {} iterations", dcfg.iterations)])
}

fn eval(cfg: RunConfig, a: &EvalArgs) -> Result<()> {
    let pred = load_cloud(&a.pred)?;
    let mesh = load_mesh(&a.mesh)?;
    let clean = load_cloud(&a.clean)?;
    let report = chamfer(&pred, &mesh, &clean)?;
    report.write_dir(&a.output)?;
    let colored = error_colorize(&pred, &mesh)?;
    write_pointcloud_with_comments(&colored, a.output.join("error.ply"), Format::PlyBinaryLittleEndian, &[])?;
    cfg.write_echo(&a.output)?;
    println!(
        "chamfer {:.6e} ({:.4}% of diagonal): term1 {:.6e}, term2 {:.6e}",
        report.chamfer, report.chamfer_pct, report.term1, report.term2
    );
    Ok(())
}

struct TuneSample {
    noisy: PointCloud,
    clean: PointCloud,
    mesh: Option<TriangleMesh>,
}

fn load_tuning(dir: &Path) -> Result<Vec<TuneSample>> {
    let mut out = Vec::new();
    for (noisy, clean) in load_dataset(dir, true)? {
        let mp = dir.join("mesh").join(format!("{}.off", noisy.id));
        let mesh = if mp.is_file() { Some(load_mesh(&mp)?) } else { None };
        out.push(TuneSample {
            noisy,
            clean: clean.expect("clean counterparts are required"),
            mesh,
        });
    }
    Ok(out)
}

fn scaled(c: &FilterConfig, diag: f64) -> FilterConfig {
    FilterConfig {
        radius: c.radius * diag,
        sigma_d: c.sigma_d * diag,
        sigma_n: c.sigma_n * diag,
        iterations: c.iterations,
    }
}

/// Mean Chamfer distance, in diagonals, of `filter` over the tuning set.
fn tuning_error(set: &[TuneSample], filter: impl Fn(&PointCloud, f64) -> tdnoise_core::Result<PointCloud>) -> Result<f64> {
    let mut sum = 0.0;
    for s in set {
        let pred = filter(&s.noisy, s.noisy.bbox_diagonal())?;
        let r = match &s.mesh {
            Some(m) => chamfer(&pred, m, &s.clean)?,
            None => chamfer_sampled(&pred, &s.clean)?,
        };
        sum += r.chamfer / r.diagonal;
    }
    Ok(sum / set.len() as f64)
}

fn baseline(cfg: RunConfig, a: &BaselineArgs) -> Result<()> {
    let cloud = load_cloud(&a.cloud)?;
    let diag = cloud.bbox_diagonal();
    // Settings as fractions of the diagonal.
    let frac = match &a.tune {
        None => scaled(&cfg.filter(1.0)?, 1.0),
        Some(dir) => {
            let set = load_tuning(dir)?;
            let (best, err) = match a.filter {
                FilterArg::Mean => {
                    let (r, err) = grid_search(&mean_grid(1.0), |&r| {
                        tuning_error(&set, |c, d| mean_filter(c, r * d)).map_err(to_core)
                    })?;
                    (FilterConfig { radius: r, ..cfg.filter(1.0)? }, err)
                }
                FilterArg::Bilateral => grid_search(&bilateral_grid(1.0), |c| {
                    tuning_error(&set, |cl, d| bilateral_filter(cl, &scaled(c, d))).map_err(to_core)
                })?,
            };
            log::info!("tuned on {} clouds, mean Chamfer {err:.6e} diagonals", set.len());
            best
        }
    };
    let abs = scaled(&frac, diag);
    let out = match a.filter {
        FilterArg::Mean => {
            println!("mean filter: radius_frac {} (radius {:.6e})", frac.radius, abs.radius);
            mean_filter(&cloud, abs.radius)?
        }
        FilterArg::Bilateral => {
            println!(
                "bilateral filter: radius_frac {}, sigma_d_frac {}, sigma_n_frac {}, iterations {} (radius {:.6e}, sigma_d {:.6e}, sigma_n {:.6e})",
                frac.radius, frac.sigma_d, frac.sigma_n, frac.iterations, abs.radius, abs.sigma_d, abs.sigma_n
            );
            bilateral_filter(&cloud, &abs)?
        }
    };
    let mut cfg = cfg;
    cfg.set("filter.radius_frac", &frac.radius.to_string())?;
    cfg.set("filter.sigma_d_frac", &frac.sigma_d.to_string())?;
    cfg.set("filter.sigma_n_frac", &frac.sigma_n.to_string())?;
    cfg.set("filter.iterations", &frac.iterations.to_string())?;
    write_cloud(&cfg, &out, &a.output, a.format.as_deref(), &[])
}

fn to_core(e: anyhow::Error) -> tdnoise_core::Error {
    match e.downcast::<tdnoise_core::Error>() {
        Ok(e) => e,
        Err(e) => tdnoise_core::Error::InvalidData(format!("{e:#}")),
    }
}

fn run_toy(mut cfg: RunConfig, a: &ToyArgs) -> Result<()> {
    set_opt(&mut cfg, "seed", a.seed)?;
    let seed = cfg.seed()?;
    let out = &a.output;
    match a.experiment {
        Experiment::Modes => {
            let o = toy::modes_experiment(&toy::ModesConfig { seed, ..Default::default() })?;
            o.write_dir(out)?;
            println!(
                "mean mode radius {:.4}, predicted {:.4}, relative error {:.4}",
                o.mean_mode_radius,
                o.analytic_radius,
                o.relative_error()
            );
        }
        Experiment::Anneal => {
            let o = toy::anneal_experiment(&toy::AnnealConfig { seed, ..Default::default() })?;
            o.write_dir(out)?;
            println!(
                "fixed gamma {:.6} (sample mean {:.6}), annealed {:.6}",
                o.fixed_final(),
                o.sample_mean,
                o.annealed_final()
            );
        }
        Experiment::Bicolor => {
            let mut c = toy::BicolorConfig::default();
            c.train.seed = seed;
            let o = toy::bicolor_experiment(&c)?;
            o.write_dir(out)?;
            println!(
                "cross-boundary displacement with color {:.4e}, without {:.4e}, ratio {:.3}",
                o.with_color_cross,
                o.without_color_cross,
                o.ratio()
            );
        }
        Experiment::Circle | Experiment::Sphere => {
            let mut c = if a.experiment == Experiment::Circle {
                toy::ShapeRunConfig::circle()
            } else {
                toy::ShapeRunConfig::sphere()
            };
            c.train.seed = seed;
            let o = toy::shape_run(&c)?;
            o.write_dir(out)?;
            for it in 1..=o.evals.len() {
                println!("iteration {it}: Chamfer reduction {:.1}%", 100.0 * o.reduction(it));
            }
        }
        Experiment::Ablation => {
            let c = toy::AblationConfig {
                seeds: vec![seed, seed + 1],
                ..Default::default()
            };
            let o = toy::ablation_experiment(&c)?;
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            let p = out.join("ablation.csv");
            std::fs::write(&p, o.to_csv()).with_context(|| format!("writing {}", p.display()))?;
            for m in toy::Method::ALL {
                println!("{}: median Chamfer {:.4e}", m.name(), o.median(m));
            }
        }
    }
    cfg.write_echo(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_follow_extension_and_flag() {
        assert_eq!(output_format(Path::new("a.xyz"), None).unwrap(), Format::Xyz);
        assert_eq!(output_format(Path::new("a.ply"), None).unwrap(), Format::PlyBinaryLittleEndian);
        assert_eq!(output_format(Path::new("a.ply"), Some("ply-ascii")).unwrap(), Format::PlyAscii);
        assert!(output_format(Path::new("a.off"), Some("off")).is_err());
        assert!(output_format(Path::new("a.ply"), Some("obj")).is_err());
    }

    #[test]
    fn filter_settings_scale_with_the_diagonal() {
        let c = FilterConfig {
            radius: 0.02,
            sigma_d: 0.01,
            sigma_n: 0.005,
            iterations: 2,
        };
        let s = scaled(&c, 10.0);
        assert_eq!((s.radius, s.sigma_d, s.sigma_n, s.iterations), (0.2, 0.1, 0.05, 2));
    }

    #[test]
    fn datasets_list_only_cloud_files_in_order() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["b.ply", "a.xyz", "notes.txt"] {
            std::fs::write(dir.path().join(n), "").unwrap();
        }
        std::fs::create_dir(dir.path().join("clean")).unwrap();
        let names: Vec<_> = list_clouds(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["a.xyz", "b.ply"]);
        let empty = tempfile::tempdir().unwrap();
        assert!(list_clouds(empty.path()).is_err());
    }
}
