use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn genfrac() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_genfrac"));
    c.env_remove("GENFRAC_THREADS");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect()
}

fn ml_half(x: f64) -> f64 {
    (0..150).map(|k| (-x).powi(k) / statrs::function::gamma::gamma(1.0 + k as f64 / 2.0)).sum()
}

#[test]
fn shipped_configs_round_trip() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let cfg = genfrac::config::ScenarioConfig::load(&path).unwrap();
        let again = genfrac::config::ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg.to_toml_string().unwrap(), again.to_toml_string().unwrap(), "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 5);
}

#[test]
fn relaxation_run_tracks_mittag_leffler() {
    let dir = tempfile::tempdir().unwrap();
    let out = genfrac().args(["run", "--config"]).arg(configs().join("relaxation.toml")).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("relaxation.csv"));
    assert_eq!(rows.len(), 513);
    assert_eq!(rows[0][1], 1.0);
    let last = rows.last().unwrap();
    assert!((last[0] - 1.0).abs() < 1e-12);
    assert!((last[1] - ml_half(1.0)).abs() < 5e-4, "u(1) = {}", last[1]);
    for r in &rows[64..] {
        assert!((r[1] - ml_half(r[0].sqrt())).abs() < 2e-3, "t = {}", r[0]);
    }
    let side: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("relaxation.json")).unwrap()).unwrap();
    assert_eq!(side["steps"], 512);
}

#[test]
fn repeat_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = genfrac().args(["run", "--config"]).arg(configs().join("porous_medium.toml")).arg("--out").arg(d.path()).output().unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn zero_data_gives_zero_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.toml");
    std::fs::write(
        &cfg,
        r#"
[kernel]
family = "caputo"
beta = 0.6

[memory]
tau = 0.01
n = 20

[operator]
id = "porous_medium"
r = 2.0
grid = { dim = 1, n = 15 }
"#,
    )
    .unwrap();
    let out = genfrac().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("run.csv"));
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r[1..].iter().all(|&v| v == 0.0)));
}

#[test]
fn spde_seed_controls_the_ensemble() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = genfrac()
            .args(["spde", "--config"])
            .arg(configs().join("spde_scalar.toml"))
            .args(["--seed", seed, "--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("spde_scalar_ensemble.json")).unwrap()).unwrap();
        assert_eq!(meta["seed"].as_u64().unwrap().to_string(), seed);
        std::fs::read(dir.path().join("spde_scalar_ensemble.csv")).unwrap()
    };
    let a = run("3");
    assert_eq!(a, run("3"));
    assert_ne!(a, run("4"));
}

#[test]
fn thread_count_does_not_change_results() {
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = genfrac()
            .env("GENFRAC_THREADS", threads)
            .args(["spde", "--config"])
            .arg(configs().join("spde_scalar.toml"))
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.path().join("spde_scalar_ensemble.csv")).unwrap()
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn kernel_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = genfrac()
        .args(["kernel", "sonine", "--family", "multiterm", "--alpha", "0.3", "--beta", "0.7", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("kernel_sonine.json")).unwrap()).unwrap();
    assert!(rep["max_residual"].as_f64().unwrap() < 1e-6);

    let out = genfrac().args(["kernel", "inspect", "--family", "caputo", "--beta", "0.5", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("kernel_inspect.json").exists());

    let out = genfrac().args(["kernel", "verify", "--family", "gamma-sub", "--a", "1", "--b", "2", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn non_monotone_custom_kernel_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bumpy.csv");
    let mut text = String::from("t,k\n");
    for i in 1..=200 {
        let t = i as f64 * 0.01;
        text.push_str(&format!("{t},{}\n", 1.0 + (10.0 * t).sin() * 0.5 + 1.0 / t));
    }
    std::fs::write(&file, text).unwrap();
    let out = genfrac().args(["kernel", "verify", "--family", "custom", "--file"]).arg(&file).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_string());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [vec!["verify", ""], vec!["verify", "dissipativity", "--gamma", "0"], vec!["kernel", "inspect", "--family", "caputo", "--beta", "1.5"], vec!["frobnicate"]] {
        let out = genfrac().args(&args).arg("--out").arg(dir.path()).output().unwrap();
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = genfrac().args(["run", "--config"]).arg(dir.path().join("missing.toml")).output().unwrap();
    assert_ne!(code(&out), 0);
}

#[test]
fn verify_suite_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = genfrac().args(["verify", "contraction", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let recs: Vec<genfrac::verify::CheckRecord> = serde_json::from_slice(&std::fs::read(dir.path().join("verify_contraction.json")).unwrap()).unwrap();
    assert!(!recs.is_empty());
    assert!(recs.iter().all(|r| r.pass));
}
