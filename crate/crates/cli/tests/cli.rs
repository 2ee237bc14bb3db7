use std::path::{Path, PathBuf};

use rac_intensity::simulation::{builtin_scenarios, Scenario};
use rac_intensity_cli::{run, CliError, EXIT_CONVERGENCE, EXIT_DATA, EXIT_OK, EXIT_USAGE, OUT_DIR_ENV};
use serde_json::Value;

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("rac-intensity").chain(args.iter().copied()))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of an output CSV, skipping the `#` provenance lines.
fn rows(file: &Path) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(file)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

fn json(file: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(file).unwrap()).unwrap()
}

fn lambdas(v: &Value) -> Vec<f64> {
    v["fit"]["lambda_hat"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(Value::as_f64)
        .collect()
}

fn generate(dir: &Path, shoes: usize) -> PathBuf {
    let out = dir.join("gen");
    let code = cli(&[
        "--out-dir", path(&out), "--seed", "5", "generate", "--shoes", &shoes.to_string(),
        "--grid", "60x40", "--avg-racs", "200",
    ]);
    assert_eq!(code, EXIT_OK);
    out.join("shoes.json")
}

#[test]
fn naive_expert_fit_reports_fourteen_regions() {
    let dir = tempfile::tempdir().unwrap();
    let shoes = generate(dir.path(), 12);
    let out = dir.path().join("fit");
    let code = cli(&[
        "--out-dir", path(&out), "fit", "-i", path(&shoes), "--grid", "60x40", "--method", "naive",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(rows(&out.join("regions_naive.csv")).len(), 14);
    assert!(!out.join("fit_cml.json").exists());
}

#[test]
fn all_methods_rescale_cml_to_the_naive_mean() {
    let dir = tempfile::tempdir().unwrap();
    let shoes = generate(dir.path(), 15);
    let out = dir.path().join("fit");
    let code = cli(&["--out-dir", path(&out), "fit", "-i", path(&shoes), "--grid", "60x40"]);
    assert_eq!(code, EXIT_OK);
    let naive = lambdas(&json(&out.join("fit_naive.json")));
    let cml_doc = json(&out.join("fit_cml.json"));
    let cml = lambdas(&cml_doc);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&naive) - mean(&cml)).abs() < 1e-10 * mean(&naive));
    assert!(cml_doc["fit"]["rescale_constant"].as_f64().unwrap() > 0.0);
    let table = rows(&out.join("comparison.csv"));
    assert_eq!(table.len(), 14);
    assert_eq!(table[0].len(), 5);
}

#[test]
fn pixel_random_effects_fit_on_a_small_subsample() {
    let dir = tempfile::tempdir().unwrap();
    let shoes = generate(dir.path(), 10);
    let out = dir.path().join("fit");
    let code = cli(&[
        "--out-dir", path(&out), "--seed", "2", "fit", "-i", path(&shoes), "--grid", "60x40",
        "--partition", "pixel", "--method", "re", "--subsample", "cc-within-prop-cases",
        "--controls", "20", "--knots-x", "1", "--knots-y", "1",
    ]);
    assert_eq!(code, EXIT_OK);
    let surface = rows(&out.join("surface_random_effects.csv"));
    assert_eq!(surface.len(), 60 * 40);
    let values: Vec<f64> = surface.iter().filter_map(|r| r[2].parse().ok()).collect();
    assert!(!values.is_empty());
    assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn single_generated_shoe_is_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let shoes = generate(dir.path(), 1);
    let out = dir.path().join("fit");
    let code = cli(&[
        "--out-dir", path(&out), "fit", "-i", path(&shoes), "--grid", "60x40", "--method", "naive",
    ]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn simulate_shipped_scenario_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/scenario_01_equal_lambda.json");
    let code = cli(&["--out-dir", path(dir.path()), "simulate", "--scenario", path(&file), "--reps", "2"]);
    assert_eq!(code, EXIT_OK);
    let summary = rows(&dir.path().join("scenario_01_equal_lambda_summary.csv"));
    assert_eq!(summary.len(), 1);
    assert_eq!(&summary[0][0], "scenario_01_equal_lambda");
    assert!(dir.path().join("scenario_01_equal_lambda_table.csv").exists());
}

#[test]
fn shipped_scenario_files_match_the_registry() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let builtin = builtin_scenarios();
    let mut files: Vec<PathBuf> = std::fs::read_dir(&root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    assert_eq!(files.len(), builtin.len());
    for sc in &builtin {
        let text = std::fs::read_to_string(root.join(format!("{}.json", sc.scenario_id))).unwrap();
        assert_eq!(&Scenario::from_json_str(&text).unwrap(), sc, "{}", sc.scenario_id);
    }
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(cli(&["--out-dir", path(&out), "fit", "--bogus"]), EXIT_USAGE);
    assert_eq!(cli(&["--out-dir", path(&out), "simulate", "--scenario", "no_such_scenario"]), EXIT_USAGE);
    let missing = dir.path().join("missing.json");
    assert_eq!(cli(&["--out-dir", path(&out), "fit", "-i", path(&missing)]), EXIT_DATA);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(cli(&["--out-dir", path(&out), "stats", "-i", path(&bad)]), EXIT_DATA);
    let err = CliError::Core(rac_intensity::Error::Convergence {
        iterations: 500,
        trace: String::new(),
    });
    assert_eq!(err.exit_code(), EXIT_CONVERGENCE);
}

#[test]
fn output_directory_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-env");
    std::env::set_var(OUT_DIR_ENV, &out);
    let code = cli(&["scenarios", "--only", "scenario_09_constant_wear"]);
    std::env::remove_var(OUT_DIR_ENV);
    assert_eq!(code, EXIT_OK);
    assert!(out.join("scenario_09_constant_wear.json").exists());
}
