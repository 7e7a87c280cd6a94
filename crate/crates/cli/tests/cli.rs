//! End-to-end runs of the `bdod` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

const PIPELINE: &str = r#"
version = 1
[mesh]
shape = "sphere"
refine = 2
[pulse]
direction = [0.0, 0.0, 1.0]
carrier = 2.0
width = 0.6
delay = 4.7
[sweep]
omega_min = 0.15
omega_max = 9.45
n_omega = 32
omega0 = 1.0
norms = false
[time]
t_start = 0.3
t_end = 13.9
n_samples = 512
[dod]
tau = 0.5
tol_dod = 2e-2
probes = [[0.0, 0.0, 0.0], [0.4, 0.0, 0.0], [0.0, 0.0, -0.5]]
[observables]
fit_start = 0.05
fit_ends = [0.35, 0.5]
"#;

fn bdod(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdod"))
        .args(args)
        .current_dir(dir)
        .env_remove("BDOD_CACHE")
        .output()
        .expect("bdod runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_SWEEP: &str = r#"
version = 1
[mesh]
shape = "sphere"
refine = 1
[pulse]
direction = [1.0, 0.0, 0.0]
carrier = 4.0
width = 0.5
delay = 4.1
[sweep]
omega_min = 1.5
omega_max = 9.5
n_omega = 9
omega0 = 1.0
"#;

#[test]
fn sweep_is_idempotent_through_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_SWEEP);
    let run = |out: &str| bdod(&["sweep", "--config", &cfg, "--out", out, "--cache", "cache"], dir.path());
    let first = run("a");
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stdout(&first).contains("cache hits 0/9"));
    let second = run("b");
    assert!(second.status.success());
    assert!(stdout(&second).contains("cache hits 9/9 (100%)"), "{}", stdout(&second));
    for name in ["sweep.bin", "resolvent.csv", "sweep.json"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    // Changing anything the solve depends on misses the cache.
    let moved = write_config(dir.path(), "d.toml", &SMALL_SWEEP.replace("delay = 4.1", "delay = 4.2"));
    let third = bdod(&["sweep", "--config", &moved, "--out", "c", "--cache", "cache"], dir.path());
    assert!(stdout(&third).contains("cache hits 0/9"));

    let qfit = bdod(&["qfit", "--config", &cfg, "--out", "a"], dir.path());
    assert!(qfit.status.success(), "{}", stderr(&qfit));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("a/qfit.json")).unwrap()).unwrap();
    assert!(json["fit"]["q_hat"].is_number());
    assert!(json["oracle"]["q_hat"].is_number());
}

#[test]
fn grid_containing_omega0_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &SMALL_SWEEP.replace("omega0 = 1.0", "omega0 = 2.5"));
    let o = bdod(&["sweep", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("coincides with omega0"), "{}", stderr(&o));
}

#[test]
fn zero_amplitude_sweep_gives_zero_densities() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_SWEEP.replace("delay = 4.1", "delay = 4.1\namplitude = 0.0").replace("n_omega = 9", "n_omega = 2");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let o = bdod(&["sweep", "--config", &cfg, "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = bdod::commands::load_sweep(&dir.path().join("o/sweep.bin")).unwrap();
    assert!(sweep.densities.iter().flatten().all(|z| z.norm() == 0.0));
}

#[test]
fn injected_norms_pass_through_the_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_SWEEP);
    let mut csv = String::from("omega,norm\n");
    for k in 0..20 {
        let w = 2.0 + k as f64;
        csv.push_str(&format!("{w},{}\n", 3.0 * w.powf(1.5)));
    }
    fs::write(dir.path().join("n.csv"), csv).unwrap();
    let o = bdod(&["qfit", "--config", &cfg, "--out", "o", "--norms", "n.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("o/qfit.json")).unwrap()).unwrap();
    assert!((json["fit"]["q_hat"].as_f64().unwrap() - 1.5).abs() < 1e-10);
    assert!(json["oracle"].is_null());
}

#[test]
fn missing_upstream_artifact_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_SWEEP);
    let o = bdod(&["qfit", "--config", &cfg, "--out", "empty"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run `bdod sweep` first"));
}

#[test]
fn oracle_subcommand_writes_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let o = bdod(&["oracle", "--kappa", "1,5", "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("o/oracle.json")).unwrap()).unwrap();
    assert_eq!(json["resolvent_norms"].as_array().unwrap().len(), 2);
}

#[test]
fn level_two_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", PIPELINE);
    let start = Instant::now();
    for cmd in ["mesh", "sweep", "synthesize"] {
        let o = bdod(&[cmd, "--jobs", "1", "--config", &cfg, "--out", "o"], dir.path());
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let dod = bdod(&["dod-verify", "--config", &cfg, "--out", "o"], dir.path());
    // Thirty-two frequencies truncate the spectrum, so only completion is checked.
    assert!(matches!(dod.status.code(), Some(0 | 2)), "{}", stderr(&dod));
    let decay = bdod(&["decay", "--config", &cfg, "--out", "o"], dir.path());
    assert!(matches!(decay.status.code(), Some(0 | 2)), "{}", stderr(&decay));
    assert!(start.elapsed().as_secs() < 600);
    for name in ["mesh.txt", "sweep.bin", "history.bin", "synthesis.json", "density_norms.csv", "dod.json", "decay.json"] {
        assert!(dir.path().join("o").join(name).exists(), "{name}");
    }
    let syn: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("o/synthesis.json")).unwrap()).unwrap();
    assert!(syn["parseval_relative"].as_f64().unwrap() < 1e-2);

    // Observation time inside the illumination.
    let early = write_config(dir.path(), "e.toml", &PIPELINE.replace("tau = 0.5", "t0 = 6.0\ntau = 0.5"));
    let o = bdod(&["dod-verify", "--config", &early, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("illumination lasts until"), "{}", stderr(&o));

    // Windows too short to hold eight samples.
    let short = write_config(dir.path(), "s.toml", &PIPELINE.replace("fit_ends = [0.35, 0.5]", "fit_ends = [0.08]"));
    let o = bdod(&["decay", "--config", &short, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("samples"), "{}", stderr(&o));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            bdod::config::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
