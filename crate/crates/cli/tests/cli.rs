use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CUBE: &str = "OFF\n8 12 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n\
3 0 2 1\n3 0 3 2\n3 4 5 6\n3 4 6 7\n3 0 1 5\n3 0 5 4\n3 1 2 6\n3 1 6 5\n3 2 3 7\n3 2 7 6\n3 3 0 4\n3 3 4 7\n";

fn tdnoise(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdnoise"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = tdnoise(dir, args);
    assert!(
        out.status.success(),
        "tdnoise {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace() -> (tempfile::TempDir, PathBuf) {
    let t = tempfile::tempdir().unwrap();
    let p = t.path().to_path_buf();
    std::fs::write(p.join("cube.off"), CUBE).unwrap();
    (t, p)
}

/// Two clean cubes under `data/clean` and their noisy copies under `data`.
fn dataset(dir: &Path) {
    for (name, seed) in [("a.ply", "1"), ("b.ply", "2")] {
        let clean = format!("data/clean/{name}");
        ok(dir, &["sample", "cube.off", "--count", "300", "--seed", seed, "-o", &clean]);
        ok(dir, &["corrupt", &clean, "--level", "0.01", "--seed", seed, "-o", &format!("data/{name}")]);
    }
}

fn loss_column(csv: &str) -> Vec<String> {
    csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect()
}

#[test]
fn sampling_is_deterministic_and_echoes_its_config() {
    let (_t, d) = workspace();
    ok(&d, &["sample", "cube.off", "--count", "200", "--seed", "4", "-o", "a.ply"]);
    ok(&d, &["sample", "cube.off", "--count", "200", "--seed", "4", "-o", "b.ply"]);
    assert_eq!(std::fs::read(d.join("a.ply")).unwrap(), std::fs::read(d.join("b.ply")).unwrap());
    let echo = std::fs::read_to_string(d.join("a.ply.config.txt")).unwrap();
    assert!(echo.contains("seed = 4"), "{echo}");
}

#[test]
fn missing_input_is_a_usage_error_naming_the_file() {
    let (_t, d) = workspace();
    let o = tdnoise(&d, &["sample", "missing.off", "--count", "10", "-o", "x.ply"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.off"), "{}", stderr(&o));
    assert_eq!(stderr(&o).matches("No such file").count(), 1, "{}", stderr(&o));
}

#[test]
fn zero_noise_leaves_positions_alone() {
    let (_t, d) = workspace();
    ok(&d, &["sample", "cube.off", "--count", "150", "--format", "ply-ascii", "-o", "c.ply"]);
    ok(&d, &["corrupt", "c.ply", "--level", "0", "--format", "ply-ascii", "-o", "n.ply"]);
    let body = |p: &str| {
        let s = std::fs::read_to_string(d.join(p)).unwrap();
        s.split_once("end_header\n").unwrap().1.to_string()
    };
    assert_eq!(body("c.ply"), body("n.ply"));
    let header = std::fs::read_to_string(d.join("n.ply")).unwrap();
    assert!(header.contains("comment noise=gaussian std_frac=0"), "{header}");
}

#[test]
fn bad_parameters_and_config_keys_exit_with_two() {
    let (_t, d) = workspace();
    ok(&d, &["sample", "cube.off", "--count", "50", "-o", "c.ply"]);
    let o = tdnoise(&d, &["corrupt", "c.ply", "--level", "-0.5", "-o", "n.ply"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = tdnoise(&d, &["--set", "train.epoch=3", "sample", "cube.off", "--count", "5", "-o", "x.ply"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.epoch"));
    std::fs::write(d.join("run.cfg"), "prior.kernal = imq\n").unwrap();
    let o = tdnoise(&d, &["--config", "run.cfg", "sample", "cube.off", "--count", "5", "-o", "x.ply"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.cfg:1"), "{}", stderr(&o));
    let o = tdnoise(&d, &["sample", "cube.off", "--count", "5", "--radius", "0.1", "-o", "x.ply"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_then_denoise() {
    let (_t, d) = workspace();
    dataset(&d);
    ok(&d, &["--threads", "1", "train", "--data", "data", "--epochs", "2", "--eval-every", "1", "-o", "run"]);
    for f in ["model.ckpt", "train.csv", "config.txt"] {
        assert!(d.join("run").join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(d.join("run/train.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,loss,eval_error,seconds"));
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| !l.split(',').nth(2).unwrap().is_empty()), "{csv}");

    ok(&d, &["denoise", "--checkpoint", "run/model.ckpt", "data/a.ply", "--iterations", "1", "-o", "out/a.xyz"]);
    let xyz = std::fs::read_to_string(d.join("out/a.xyz")).unwrap();
    let rows = xyz.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).count();
    assert!(rows > 250, "{rows}");

    let o = tdnoise(
        &d,
        &["--set", "arch.r1_frac=0.07", "denoise", "--checkpoint", "run/model.ckpt", "data/a.ply", "-o", "x.ply"],
    );
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("0.07") && e.contains("0.05"), "{e}");
}

#[test]
fn supervised_training_needs_clean_counterparts() {
    let (_t, d) = workspace();
    ok(&d, &["sample", "cube.off", "--count", "100", "-o", "sup/a.ply"]);
    let o = tdnoise(&d, &["train", "--data", "sup", "--mode", "supervised", "--epochs", "1", "-o", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("clean"), "{}", stderr(&o));
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let (_t, d) = workspace();
    dataset(&d);
    let base = ["--threads", "1", "train", "--data", "data", "--epochs", "3"];
    ok(&d, &[&base[..], &["-o", "full"]].concat());
    ok(&d, &[&base[..], &["--stop-after", "1", "-o", "part"]].concat());
    ok(&d, &[&base[..], &["--resume", "part/model.ckpt", "-o", "part"]].concat());
    let full = loss_column(&std::fs::read_to_string(d.join("full/train.csv")).unwrap());
    let part = loss_column(&std::fs::read_to_string(d.join("part/train.csv")).unwrap());
    assert_eq!(full.len(), 3);
    assert_eq!(full, part);
}

#[test]
fn evaluating_the_clean_cloud_gives_zero() {
    let (_t, d) = workspace();
    ok(&d, &["sample", "cube.off", "--count", "200", "-o", "c.ply"]);
    let o = ok(&d, &["eval", "c.ply", "cube.off", "c.ply", "-o", "ev"]);
    for f in ["report.json", "report.csv", "histogram.csv", "distances.csv", "error.ply", "config.txt"] {
        assert!(d.join("ev").join(f).is_file(), "{f}");
    }
    let report = std::fs::read_to_string(d.join("ev/report.json")).unwrap();
    let chamfer: f64 = report
        .lines()
        .find_map(|l| l.trim().strip_prefix("\"chamfer\":"))
        .map(|v| v.trim().trim_end_matches(',').parse().unwrap())
        .unwrap();
    assert!(chamfer < 1e-12, "{chamfer}");
    assert!(stdout(&o).starts_with("chamfer"));
}

#[test]
fn tuned_baseline_reports_its_settings() {
    let (_t, d) = workspace();
    dataset(&d);
    std::fs::create_dir(d.join("data/mesh")).unwrap();
    std::fs::write(d.join("data/mesh/a.off"), CUBE).unwrap();
    let o = ok(&d, &["baseline", "data/b.ply", "--filter", "mean", "--tune", "data", "-o", "m.ply"]);
    assert!(stdout(&o).contains("radius_frac"), "{}", stdout(&o));
    let echo = std::fs::read_to_string(d.join("m.ply.config.txt")).unwrap();
    let tuned = stdout(&o).split_whitespace().nth(3).unwrap().to_string();
    assert!(echo.contains(&format!("filter.radius_frac = {tuned}")), "{echo}");
}

#[test]
fn anneal_toy_writes_its_tables() {
    let (_t, d) = workspace();
    let o = ok(&d, &["toy", "--experiment", "anneal", "-o", "toy"]);
    assert!(stdout(&o).contains("annealed"));
    for f in ["curve.csv", "summary.csv", "config.txt"] {
        assert!(d.join("toy").join(f).is_file(), "{f}");
    }
}
