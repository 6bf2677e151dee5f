use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sample_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample").canonicalize().unwrap()
}

/// Sample config with short chains and three climate options.
fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let s = sample_dir();
    let text = format!(
        r#"seed = 7

[station]
id = "t"
maxima = "{s}/station_maxima.csv"

[[covariates]]
name = "mdr_sst"
historical = "{s}/mdr_sst.csv"
projection = "{s}/mdr_sst_projection.csv"

[[covariates]]
name = "nao"
historical = "{s}/nao.csv"
projection = "{s}/nao_projection.csv"

[mcmc]
n_iterations = 3000
burn_in = 1000

[scenarios]
runoff = [0.6, 0.9]
lifetimes = [20, 40]
thin = 4

[[scenarios.climate]]
name = "m1"
maxima = "{s}/models/model_1.csv"

[[scenarios.climate]]
name = "m2"
maxima = "{s}/models/model_2.csv"

[[scenarios.climate]]
name = "proj_only"

[sweep]
factors = [1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.5, 3.0]
{extra}
"#,
        s = s.display()
    );
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stormsafe")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(out.status.success(), "{args:?} failed:\n{err}");
    err
}

fn pipeline(config: &Path, out: &Path, jobs: &str) {
    let (c, o) = (config.to_str().unwrap(), out.to_str().unwrap());
    for cmd in ["fit", "select", "sweep", "report"] {
        ok(&[cmd, "--config", c, "--out", o, "--jobs", jobs]);
    }
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v = Vec::new();
    for stage in std::fs::read_dir(dir).unwrap() {
        let stage = stage.unwrap().path();
        if stage.is_dir() {
            for f in std::fs::read_dir(&stage).unwrap() {
                let f = f.unwrap().path();
                if f.extension().is_some_and(|e| e == "csv") {
                    v.push(f.strip_prefix(dir).unwrap().to_path_buf());
                }
            }
        }
    }
    v.sort();
    v
}

#[test]
fn pipeline_is_deterministic_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    pipeline(&cfg, &a, "1");
    pipeline(&cfg, &b, "3");
    let files = csv_files(&a);
    assert!(files.len() >= 10, "{files:?}");
    assert_eq!(files, csv_files(&b));
    for f in &files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{}", f.display());
    }
    for f in ["report/summary.md", "report/safety_factor.svg", "manifest.json", "sweep/sweep.json"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    let curve = std::fs::read_to_string(a.join("sweep/curve.csv")).unwrap();
    assert!(curve.starts_with("sf,cost_factor,worst_reliability,mean_reliability\n"));
    let grid = std::fs::read_to_string(a.join("decompose/grid.csv")).unwrap();
    assert!(grid.starts_with("climate,runoff,lifetime,reliability\n"));
    assert_eq!(grid.lines().count(), 1 + 3 * 2 * 2);
}

#[test]
fn different_seed_changes_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let c = cfg.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["fit", "--config", c, "--out", a.to_str().unwrap(), "--covariates", "stationary"]);
    ok(&["fit", "--config", c, "--out", b.to_str().unwrap(), "--covariates", "stationary", "--seed", "8"]);
    assert_ne!(
        std::fs::read(a.join("fit/stationary.csv")).unwrap(),
        std::fs::read(b.join("fit/stationary.csv")).unwrap()
    );
}

#[test]
fn covariate_subset_and_unknown_names() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let c = cfg.to_str().unwrap();
    let o = tmp.path().join("o");
    let o = o.to_str().unwrap();
    ok(&["fit", "--config", c, "--out", o, "--covariates", "mdr_sst,stationary"]);
    assert!(Path::new(o).join("fit/mdr_sst.csv").is_file());
    assert!(Path::new(o).join("fit/stationary.csv").is_file());
    assert!(!Path::new(o).join("fit/nao.csv").exists());
    let err = ok(&["select", "--config", c, "--out", o]);
    assert!(err.contains("selected: mdr_sst"), "{err}");

    let out = run(&["fit", "--config", c, "--out", o, "--covariates", "enso"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("enso") && err.contains("mdr_sst") && err.contains("nao"), "{err}");
}

#[test]
fn missing_covariate_file_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(
        tmp.path(),
        "\n[[covariates]]\nname = \"pdo\"\nhistorical = \"does_not_exist.csv\"\n",
    );
    let out = run(&["fit", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("does_not_exist.csv"), "{err}");
}

#[test]
fn report_lists_missing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let o = tmp.path().join("o");
    let out = run(&["report", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["fit/stationary.json", "fit/mdr_sst.json", "select/selection.json", "sweep/sweep.json"] {
        assert!(err.contains(needle), "{needle} not in:\n{err}");
    }
}

#[test]
fn stale_fits_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let c = cfg.to_str().unwrap();
    let o = tmp.path().join("o");
    let o = o.to_str().unwrap();
    ok(&["fit", "--config", c, "--out", o]);
    let out = run(&["select", "--config", c, "--out", o, "--seed", "99"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("different config or seed"));
}

#[test]
fn decompose_stage_order_and_reliability() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let c = cfg.to_str().unwrap();
    let o = tmp.path().join("o");
    let os = o.to_str().unwrap();
    ok(&["fit", "--config", c, "--out", os]);
    ok(&["select", "--config", c, "--out", os]);
    ok(&["decompose", "--config", c, "--out", os, "--stage-order", "runoff,lifetime,climate"]);
    let grid = std::fs::read_to_string(o.join("decompose/grid.csv")).unwrap();
    assert!(grid.starts_with("runoff,lifetime,climate,reliability\n"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(o.join("decompose/decomposition.json")).unwrap()).unwrap();
    let stages: f64 = json["result"]["stage_uncertainty"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    let total = json["result"]["total"].as_f64().unwrap();
    assert!((stages - total).abs() <= 1e-10 * total);
    let out = run(&["decompose", "--config", c, "--out", os, "--stage-order", "runoff,climate"]);
    assert!(!out.status.success());

    ok(&["reliability", "--config", c, "--out", os, "--sf", "1.5"]);
    let rel = std::fs::read_to_string(o.join("reliability/reliability.csv")).unwrap();
    assert!(rel.starts_with("climate,lifetime,reliability,failure_prob,q05,q95\n"));
    assert_eq!(rel.lines().count(), 1 + 3 * 2);
    ok(&["returns", "--config", c, "--out", os]);
    let rl = std::fs::read_to_string(o.join("returns/return_levels.csv")).unwrap();
    assert!(rl.starts_with("model,return_period,covariate,mean,q05,q50,q95,map\n"));
}
