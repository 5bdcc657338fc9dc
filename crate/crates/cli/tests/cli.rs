//! End-to-end tests of the binary: dataset generation, fitting,
//! reporting, exit codes, and the on-disk format guarantees.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bayesinv_cli::bundle::ResultBundle;
use bayesinv_cli::config::RunConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bayesinv"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn synthetic_config(out: &Path) -> String {
    format!(
        r#"{{
  "problem": "synthetic",
  "grid": {{ "n": 60, "r_c": 8.0, "m": 14, "k_max": 5, "l_set": [1, 2, 3] }},
  "priors": {{ "alpha1": 2.0, "beta1": 1.0, "alpha2": 2.0, "beta2": 1.0 }},
  "samples": {{ "n_phi": 12, "n_psi": 12 }},
  "seed": 7,
  "algorithm": "marginal",
  "synthetic": {{ "family": 2, "order": 3 }},
  "out": "{}"
}}"#,
        out.display()
    )
}

fn fermi_config(out: &Path, algorithm: &str) -> String {
    format!(
        r#"{{
  "problem": "fermi",
  "grid": {{ "n": 100, "r_c": 8.0, "m": 15, "k_max": 16, "l_set": [1, 2, 3, 4, 5, 6] }},
  "priors": {{ "alpha1": 2.0, "beta1": 1e-14, "alpha2": 2.0, "beta2": 1.0 }},
  "samples": {{ "n_phi": 8, "n_psi": 8 }},
  "seed": 0,
  "algorithm": "{algorithm}",
  "out": "{}"
}}"#,
        out.display()
    )
}

#[test]
fn simulate_is_deterministic_and_structured() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    let config = write_config(dir.path(), "c.json", &synthetic_config(&out1));

    let r = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv1 = std::fs::read(out1.join("dataset.csv")).unwrap();
    let text = String::from_utf8(csv1.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), "q,y_clean,y_noisy");
    assert_eq!(text.lines().count(), 15, "header plus m rows");
    assert!(!text.contains('\r'), "LF line endings only");

    // same seed, different out dir: byte-identical data, same config hash
    let r = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let csv2 = std::fs::read(out2.join("dataset.csv")).unwrap();
    assert_eq!(csv1, csv2);
    let meta1: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out1.join("dataset.json")).unwrap()).unwrap();
    let meta2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out2.join("dataset.json")).unwrap()).unwrap();
    assert_eq!(meta1["config_hash"], meta2["config_hash"]);

    // a different seed changes the data and the hash
    let r = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "8",
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let csv3 = std::fs::read(out2.join("dataset.csv")).unwrap();
    assert_ne!(csv1, csv3);
    let meta3: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out2.join("dataset.json")).unwrap()).unwrap();
    assert_ne!(meta1["config_hash"], meta3["config_hash"]);
}

#[test]
fn seed_override_via_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("flag");
    let out2 = dir.path().join("env");
    let config = write_config(dir.path(), "c.json", &synthetic_config(&out1));

    let r = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert!(r.status.success());
    let r = bin()
        .args(["simulate", "--config", config.to_str().unwrap()])
        .env("BAYESINV_SEED", "99")
        .env("BAYESINV_OUT", out2.as_os_str())
        .output()
        .unwrap();
    assert!(r.status.success());
    assert_eq!(
        std::fs::read(out1.join("dataset.csv")).unwrap(),
        std::fs::read(out2.join("dataset.csv")).unwrap()
    );
}

#[test]
fn fit_and_report_marginal_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = write_config(dir.path(), "c.json", &synthetic_config(&out));

    let r = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(r.status.success());
    let r = run(&["fit", "--config", config.to_str().unwrap()]);
    assert!(
        r.status.success(),
        "fit failed: {}",
        String::from_utf8_lossy(&r.stderr)
    );

    let bundle = ResultBundle::load(&out).unwrap();
    assert_eq!(bundle.selection.algorithm, "marginal");
    assert_eq!(bundle.coefficients.len(), bundle.selection.order);
    assert_eq!(bundle.curves.len(), 60);
    assert_eq!(bundle.spectrum.len(), 14);
    let tables = bundle.tables.as_ref().expect("marginal emits tables");
    let p_l_sum: f64 = tables.p_l.iter().map(|(_, p)| p).sum();
    assert!((p_l_sum - 1.0).abs() < 1e-12);
    assert!(tables.p_l.iter().all(|(_, p)| (0.0..=1.0).contains(p)));
    // p_k normalizes within each family
    for l in [1usize, 2, 3] {
        let sum: f64 = tables
            .p_k
            .iter()
            .filter(|(fi, _, _, _)| *fi == l)
            .map(|(_, _, p, _)| p)
            .sum();
        assert!((sum - 1.0).abs() < 1e-12, "family {l} p_k sums to {sum}");
    }
    // joint table sums to one overall
    let joint_sum: f64 = tables.p_k.iter().map(|(_, _, _, j)| j).sum();
    assert!((joint_sum - 1.0).abs() < 1e-12);

    // round trip preserves every numeric field exactly
    let copy_dir = dir.path().join("copy");
    bundle.save(&copy_dir).unwrap();
    let reloaded = ResultBundle::load(&copy_dir).unwrap();
    assert_eq!(bundle, reloaded);

    // report emits the figure tables
    let r = run(&["report", "--bundle", out.to_str().unwrap()]);
    assert!(
        r.status.success(),
        "report failed: {}",
        String::from_utf8_lossy(&r.stderr)
    );
    let figures = out.join("figures");
    let score = std::fs::read_to_string(figures.join("score_map.csv")).unwrap();
    assert_eq!(score.lines().count(), 1 + 5 * 3, "k_max x |l_set| rows");
    let fam = std::fs::read_to_string(figures.join("family_posterior.csv")).unwrap();
    let probs: Vec<f64> = fam
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
    let orders = std::fs::read_to_string(figures.join("order_posterior.csv")).unwrap();
    let probs: Vec<f64> = orders
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(figures.join("basis_curves.csv").exists());
    assert!(figures.join("density_overlay.csv").exists());
}

#[test]
fn fermi_demo_pipeline_hits_the_charge_at_small_q() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fermi");
    let config = write_config(dir.path(), "c.json", &fermi_config(&out, "joint2"));

    let r = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(out.join("dataset.csv")).unwrap();
    assert_eq!(text.lines().count(), 16, "header plus 15 demo points");

    let r = run(&["fit", "--config", config.to_str().unwrap()]);
    // the exact-data prior drives lambda to the grid boundary: completed
    // with warnings
    assert_eq!(r.status.code(), Some(4), "{}", String::from_utf8_lossy(&r.stderr));

    let bundle = ResultBundle::load(&out).unwrap();
    assert!(!bundle.selection.warnings.is_empty());
    assert!(!bundle.scan.is_empty());
    assert!(!bundle.trace.is_empty());

    let r = run(&["report", "--bundle", out.to_str().unwrap()]);
    assert!(r.status.success());
    let overlay =
        std::fs::read_to_string(out.join("figures/form_factor_overlay.csv")).unwrap();
    let first = overlay.lines().nth(1).unwrap();
    let cells: Vec<&str> = first.split(',').collect();
    let q: f64 = cells[0].parse().unwrap();
    let f_true: f64 = cells[1].parse().unwrap();
    assert!((q - 0.001).abs() < 1e-12);
    assert!((f_true - 6.0).abs() / 6.0 < 1e-3, "F(0.001) = {f_true}");
    assert_eq!(
        overlay.lines().next().unwrap(),
        "q,f_true,f_data,f_hat,log10_abs_f_true,log10_abs_f_hat"
    );
}

#[test]
fn joint1_fit_writes_scan_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let body = synthetic_config(&out).replace("\"marginal\"", "\"joint1\"");
    let config = write_config(dir.path(), "c.json", &body);

    let r = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(r.status.success());
    let r = run(&["fit", "--config", config.to_str().unwrap()]);
    assert!(
        r.status.code() == Some(0) || r.status.code() == Some(4),
        "unexpected exit {:?}: {}",
        r.status.code(),
        String::from_utf8_lossy(&r.stderr)
    );
    let bundle = ResultBundle::load(&out).unwrap();
    assert_eq!(bundle.scan.len(), 5 * 3);
    assert!(bundle.tables.is_none());
    assert!(bundle.selection.criterion.is_some());
    // the selected cell is the criterion argmin
    let min = bundle
        .scan
        .iter()
        .map(|r| r.criterion)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(bundle.selection.criterion.unwrap(), min);
}

#[test]
fn bad_inputs_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");

    // unknown key
    let config = write_config(
        dir.path(),
        "bad.json",
        r#"{"problem":"synthetic","algorithm":"marginal","out":"o","nope":1}"#,
    );
    let r = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));

    // empty family set
    let body = synthetic_config(&out).replace("[1, 2, 3]", "[]");
    let config = write_config(dir.path(), "empty.json", &body);
    let r = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&r.stderr);
    assert!(msg.contains("l_set"), "unexpected message: {msg}");

    // fit without a dataset
    let config = write_config(dir.path(), "c.json", &synthetic_config(&out));
    let r = run(&["fit", "--config", config.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));

    // dataset size mismatch
    let r = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(r.status.success());
    let body = synthetic_config(&out).replace("\"m\": 14", "\"m\": 16");
    let config = write_config(dir.path(), "m16.json", &body);
    let r = run(&["fit", "--config", config.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("dataset has 14 rows"));

    // missing config file
    let r = run(&["simulate", "--config", "/nonexistent/c.json"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_code_3() {
    // a proper but too-small psi shape (k/2 + alpha2 - 1 <= 0 at k = 1)
    // breaks the alternating update's precondition: a numerical failure,
    // not a config error
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let body = synthetic_config(&out)
        .replace("\"marginal\"", "\"joint1\"")
        .replace("\"alpha2\": 2.0", "\"alpha2\": 0.4");
    let config = write_config(dir.path(), "c.json", &body);
    let r = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(r.status.success());
    let r = run(&["fit", "--config", config.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("shape term"));
}

#[test]
fn selftest_passes() {
    let r = run(&["selftest"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stdout));
    let out = String::from_utf8_lossy(&r.stdout);
    assert!(out.contains("all checks passed"));
}

#[test]
fn fit_rerun_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = write_config(dir.path(), "c.json", &synthetic_config(&out));
    let r = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(r.status.success());
    let r = run(&["fit", "--config", config.to_str().unwrap()]);
    assert!(r.status.success());
    let first = std::fs::read(out.join("coefficients.csv")).unwrap();
    let tables = std::fs::read(out.join("p_k.csv")).unwrap();
    let r = run(&["fit", "--config", config.to_str().unwrap()]);
    assert!(r.status.success());
    assert_eq!(first, std::fs::read(out.join("coefficients.csv")).unwrap());
    assert_eq!(tables, std::fs::read(out.join("p_k.csv")).unwrap());
}

#[test]
fn config_validation_matches_library_preconditions() {
    // spot check that RunConfig::validate agrees with what the library
    // accepts, via the loader used by the binary
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let config_path = write_config(dir.path(), "c.json", &synthetic_config(&out));
    let config = RunConfig::load(&config_path).unwrap();
    assert_eq!(config.families().len(), 3);
    assert!(config.hyper_priors().is_ok());
    assert_eq!(config.semantic_hash().len(), 64);
}
