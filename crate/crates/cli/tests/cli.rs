use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdspred"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> (bool, String, String) {
    let o = bin().args(args).arg("--out").arg(out).output().unwrap();
    (o.status.success(), String::from_utf8_lossy(&o.stdout).into(), String::from_utf8_lossy(&o.stderr).into())
}

fn small_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, body).unwrap();
    p
}

const CORRELATED: &str = r#"
eps = 0.1
horizon = 60
n_traj = 12
budget = 2000
[system]
f = "random(5, 0.9)"
[noise]
kind = "random_gaussian"
dim = 2
seed = 3
"#;

#[test]
fn exponent_prints_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("gaussian2d.toml");
    let (ok, stdout, _) = run(&["exponent", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(ok);
    let v: f64 = stdout.trim().parse().unwrap();
    let oracle = 2.0 * 0.2f64.ln() - (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    assert!((v - oracle).abs() < 1e-12);
    assert!((v - -6.0567).abs() < 1e-4);
    assert!(dir.path().join("exponent.csv").exists() && dir.path().join("exponent.svg").exists());
}

#[test]
fn repeated_runs_give_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), CORRELATED);
    for cmd in ["simulate", "evaluate", "fig1"] {
        let a = dir.path().join(format!("{cmd}_a"));
        let b = dir.path().join(format!("{cmd}_b"));
        assert!(run(&[cmd, "--config", cfg.to_str().unwrap()], &a).0);
        assert!(run(&[cmd, "--config", cfg.to_str().unwrap(), "--workers", "3"], &b).0);
        let mut n = 0;
        for entry in fs::read_dir(&a).unwrap() {
            let p = entry.unwrap().path();
            if p.extension().is_some_and(|e| e == "csv") {
                let q = b.join(p.file_name().unwrap());
                assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap(), "{}", p.display());
                n += 1;
            }
        }
        assert!(n > 0, "{cmd} wrote no CSV");
    }
}

#[test]
fn evaluate_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), CORRELATED);
    let (ok, stdout, _) = run(&["evaluate", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(ok);
    assert!(stdout.contains("mean_rate"));
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("mean_rate,ci,exponent_approx,gamma_bound\n"));
    let rates = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 13);
    let running = fs::read_to_string(dir.path().join("running_rate.csv")).unwrap();
    assert!(running.starts_with("k,running_rate\n1,"));
    assert!(dir.path().join("running_rate.svg").exists());
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), CORRELATED);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["simulate", "--config", cfg.to_str().unwrap()], &a).0);
    assert!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "77"], &b).0);
    assert_ne!(fs::read(a.join("trajectory_000.csv")).unwrap(), fs::read(b.join("trajectory_000.csv")).unwrap());
}

#[test]
fn design_exports_usable_noise_block() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("design.toml");
    let (ok, stdout, _) = run(&["design", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(ok);
    assert!(stdout.contains("achieved_entropy"));
    let block = fs::read_to_string(dir.path().join("design_noise.toml")).unwrap();
    let exp = format!("eps = 0.1\nhorizon = 20\nn_traj = 4\n[system]\nf = [0.5]\n{block}");
    let cfg2 = small_config(dir.path(), &exp);
    assert!(run(&["simulate", "--config", cfg2.to_str().unwrap()], &dir.path().join("sim")).0);
    let w = fs::read_to_string(dir.path().join("design_weights.csv")).unwrap();
    assert!(w.starts_with("cell_index,weight\n"));
}

#[test]
fn invalid_config_fails_with_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), &CORRELATED.replace("eps = 0.1", "eps = -0.1"));
    let (ok, _, stderr) = run(&["evaluate", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!ok);
    assert!(stderr.starts_with("error kind=config message="), "{stderr}");
    let bad = small_config(dir.path(), &CORRELATED.replace("\"random(5, 0.9)\"", "[1.0, 2.0]"));
    let o = bin().args(["simulate", "--config", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["simulate"]).output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn fig2_zero_mismatch_matches_fig1_optimal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), CORRELATED);
    let f1 = dir.path().join("f1");
    let f2 = dir.path().join("f2");
    assert!(run(&["fig1", "--config", cfg.to_str().unwrap()], &f1).0);
    assert!(run(&["fig2", "--config", cfg.to_str().unwrap()], &f2).0);
    let last = |p: PathBuf| -> Vec<f64> {
        let t = fs::read_to_string(p).unwrap();
        t.lines().last().unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect()
    };
    let traj = last(f1.join("fig1_running_rates.csv"));
    let mean_fig1 = traj[..3].iter().sum::<f64>() / 3.0;
    let tau = last(f2.join("fig2_tau.csv"));
    assert!((tau[0] - mean_fig1).abs() < 1e-9, "{} vs {mean_fig1}", tau[0]);
    for w in tau.windows(2) {
        assert!(w[1] <= w[0]);
    }
    let eta = last(f2.join("fig2_eta.csv"));
    for w in eta.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert!(f2.join("fig2_tau.svg").exists() && f2.join("fig2_eta.svg").exists());
}
