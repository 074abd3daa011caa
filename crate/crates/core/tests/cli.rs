use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const OUT_DIR_ENV: &str = "STACKELBERG_OUT_DIR";

fn bench() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stackelberg-bench"));
    cmd.env_remove(OUT_DIR_ENV);
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn stackelberg-bench");
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    read_json(&path)
}

fn assert_valid(schema_name: &str, instance: &Value) {
    let config = schema("config.schema.json");
    let registry = jsonschema::Registry::new()
        .add("urn:stackelberg-bench:config", config)
        .unwrap()
        .prepare()
        .unwrap();
    let validator = jsonschema::options()
        .with_registry(&registry)
        .build(&schema(schema_name))
        .unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:#?}");
}

fn schema_accepts(schema_name: &str, instance: &Value) -> bool {
    jsonschema::validator_for(&schema(schema_name)).unwrap().is_valid(instance)
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    reader.records().map(Result::unwrap).collect()
}

fn without_timing(mut doc: Value) -> Value {
    doc.as_object_mut().unwrap().remove("timing");
    doc
}

#[test]
fn linear_preset_writes_reproducible_schema_valid_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_ok(bench().args(["run", "linear-B2", "--out"]).arg(a.path()));
    run_ok(bench().args(["run", "linear-B2", "--out"]).arg(b.path()));
    let text = stdout(&first);
    assert!(text.contains("proactive: T = 5000"), "{text}");
    assert!(text.contains("reactive: T = 5000"), "{text}");

    for file in ["linear-B2-seed0-proactive.csv", "linear-B2-seed0-reactive.csv"] {
        let left = fs::read(a.path().join(file)).unwrap();
        assert_eq!(left, fs::read(b.path().join(file)).unwrap(), "{file} differs between runs");
        let rows = csv_rows(&a.path().join(file));
        assert_eq!(rows.len(), 5000);
        assert_eq!(&rows[0][0], "1");
        assert_eq!(&rows[4999][0], "5000");
    }

    let results = a.path().join("linear-B2-seed0.results.json");
    let doc = read_json(&results);
    assert_eq!(
        without_timing(doc.clone()),
        without_timing(read_json(&b.path().join("linear-B2-seed0.results.json")))
    );
    assert_valid("results.schema.json", &doc);
    assert_valid("config.schema.json", &doc["config"]);
    assert_eq!(doc["equilibria"]["dm_leads"]["risk_dm"], json!(0.4));
    let runs = doc["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    for run in runs {
        assert_eq!(run["epochs_completed"], json!(5000));
        assert!(run["aborted"].is_null());
        assert!(run["config_digest"].as_str().unwrap().len() == 64);
    }
    assert_ne!(runs[0]["config_digest"], runs[1]["config_digest"]);
}

#[test]
fn out_of_range_probability_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = json!({
        "preset": "fig2-p0.5-B2",
        "game": { "variant": "logistic-constrained", "p": 1.5, "alpha": [2.0], "n": 100, "budget": 2.0 },
    });
    let path = write_json(dir.path(), "bad.json", &bad);
    let out = bench().arg("run").arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("game.p") && err.contains("<= 1"), "{err}");
    assert!(!dir.path().join("fig2-p0.5-B2-seed0.results.json").exists());
    assert!(!schema_accepts("config.schema.json", &bad));
}

#[test]
fn empty_config_reports_every_missing_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_json(dir.path(), "empty.json", &json!({}));
    let out = bench().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for field in ["name", "game", "runs", "seed"] {
        assert!(err.contains(&format!("{field}: missing required field")), "{err}");
    }
    assert!(!schema_accepts("config.schema.json", &json!({})));
}

#[test]
fn malformed_json_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{ \"name\": ").unwrap();
    let out = bench().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn every_preset_expands_to_a_schema_valid_config() {
    let names = stdout(&run_ok(bench().arg("presets")));
    let names: Vec<&str> = names.lines().collect();
    assert!(names.contains(&"linear-B2"));
    assert!(names.contains(&"fig4-lam1-p0.5"));
    for name in names {
        let expanded: Value = serde_json::from_str(&stdout(&run_ok(bench().args(["presets", name])))).unwrap();
        assert_valid("config.schema.json", &expanded);
        assert_eq!(expanded["name"], json!(name));
    }
}

#[test]
fn equilibria_verb_prints_linear_closed_forms() {
    let out = run_ok(bench().args(["equilibria", "linear-B2"]));
    let table: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let close = |v: &Value, x: f64| (v.as_f64().unwrap() - x).abs() <= 1e-12;
    assert!(close(&table["dm_leads"]["risk_dm"], 0.4));
    assert!(close(&table["dm_leads"]["risk_agents"], -0.4));
    assert!(close(&table["agents_lead"]["risk_dm"], 0.25));
    assert!(close(&table["agents_lead"]["risk_agents"], -0.5));
    assert!(close(&table["dm_leads"]["point"][0], 0.2));
    assert!(close(&table["agents_lead"]["point"][0], 1.0));
}

fn preference_rows(dir: &Path, sweep: &Value) -> Vec<csv::StringRecord> {
    let path = write_json(dir, "sweep.json", sweep);
    let out = run_ok(bench().arg("preference-table").arg(&path).arg("--out").arg(dir));
    let csv_path = PathBuf::from(stdout(&out).trim());
    csv_rows(&csv_path)
}

fn column(rows: &[csv::StringRecord], header: &csv::StringRecord, name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn preference_table_over_linear_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = json!({
        "name": "linear-budgets",
        "game": { "variant": "linear", "beta": [1.0, 0.0], "sigma2": 0.0, "budget": 1.0 },
        "grid": { "budget": [0.5, 1.0, 2.0] },
    });
    let rows = preference_rows(dir.path(), &sweep);
    let header = csv::Reader::from_path(dir.path().join("linear-budgets.preference.csv"))
        .unwrap()
        .headers()
        .unwrap()
        .clone();
    assert_eq!(rows.len(), 3);
    let dl = column(&rows, &header, "delta_L");
    let dr = column(&rows, &header, "delta_R");
    let expected = [(0.0, 0.0), (0.0, 0.0), (0.15, 0.1)];
    for (i, (l, r)) in expected.iter().enumerate() {
        assert!((dl[i] - l).abs() <= 1e-12 && (dr[i] - r).abs() <= 1e-12, "row {i}: {} {}", dl[i], dr[i]);
    }
}

#[test]
fn preference_table_logistic_orders_coincide_for_mostly_positive_agents() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = json!({
        "name": "logistic-p09",
        "game": {
            "variant": "logistic-constrained", "p": 0.9, "alpha": [2.0], "n": 100,
            "budget": 1.0, "population_seed": 0,
        },
    });
    let rows = preference_rows(dir.path(), &sweep);
    let header = csv::Reader::from_path(dir.path().join("logistic-p09.preference.csv"))
        .unwrap()
        .headers()
        .unwrap()
        .clone();
    assert_eq!(rows.len(), 1);
    assert!(column(&rows, &header, "delta_L")[0].abs() <= 1e-3);
    assert!(column(&rows, &header, "delta_R")[0].abs() <= 1e-3);
}

#[test]
fn empty_preference_grid_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = json!({
        "name": "nothing",
        "game": { "variant": "linear", "beta": [1.0], "sigma2": 0.0, "budget": 1.0 },
        "grid": { "budget": [] },
    });
    let path = write_json(dir.path(), "sweep.json", &sweep);
    run_ok(bench().arg("preference-table").arg(&path).arg("--out").arg(dir.path()));
    let text = fs::read_to_string(dir.path().join("nothing.preference.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("variant,"));
}

fn proactive_linear(name: &str, epochs: usize) -> Value {
    json!({
        "name": name,
        "game": { "variant": "linear", "beta": [1.0, 0.0], "sigma2": 0.0, "budget": 2.0 },
        "runs": [{
            "order": "proactive", "epochs": epochs, "inner_steps": 10,
            "eta0": 0.05, "eta_exponent": 0.5, "delta0": 0.5, "delta_exponent": 0.0,
            "perturbation": "constant", "fast_step": 1.0,
        }],
        "seed": 3,
    })
}

#[test]
fn regret_slope_verb_fits_over_horizons() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    let mut results = None;
    for t in [500, 1000, 2000, 4000] {
        let name = format!("h{t}");
        let path = write_json(dir.path(), &format!("{name}.json"), &proactive_linear(&name, t));
        run_ok(bench().arg("run").arg(&path).arg("--out").arg(dir.path()));
        traces.push(dir.path().join(format!("{name}-seed3-proactive.csv")));
        results.get_or_insert(dir.path().join(format!("{name}-seed3.results.json")));
    }
    let out = run_ok(bench().arg("regret-slope").arg("--targets").arg(results.unwrap()).args(&traces));
    let fit: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let slope = fit["slope"].as_f64().unwrap();
    assert_eq!(fit["points"].as_array().unwrap().len(), 4);
    assert!(slope > 0.0 && slope < 1.0, "slope {slope}");

    let two = bench().arg("regret-slope").arg("--targets").arg(dir.path().join("h500-seed3.results.json")).args(&traces[..2]).output().unwrap();
    assert_eq!(two.status.code(), Some(2));
}

#[test]
fn costly_agents_leading_lowers_the_decision_makers_risk() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({ "preset": "fig4-lam1-p0.5", "oracle": { "samples": 100, "grid": 41 } });
    let path = write_json(dir.path(), "fig4.json", &config);
    run_ok(bench().arg("run").arg(&path).arg("--out").arg(dir.path()));
    let doc = read_json(&dir.path().join("fig4-lam1-p0.5-seed0.results.json"));
    assert_valid("results.schema.json", &doc);
    let runs = doc["runs"].as_array().unwrap();
    let avg = |order: &str| {
        let run = runs.iter().find(|r| r["order"] == json!(order)).unwrap();
        run["terminal"]["running_avg_dm"].as_f64().unwrap()
    };
    assert!(avg("reactive") <= avg("proactive"), "reactive {} proactive {}", avg("reactive"), avg("proactive"));
    assert!(doc["equilibria"]["delta_dm"].as_f64().unwrap() > 0.0);
}

#[test]
fn output_directory_comes_from_the_environment_unless_overridden() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let config = write_json(env_dir.path(), "short.json", &proactive_linear("short", 20));

    run_ok(bench().arg("run").arg(&config).env(OUT_DIR_ENV, env_dir.path()));
    assert!(env_dir.path().join("short-seed3.results.json").exists());

    run_ok(bench().arg("run").arg(&config).arg("--out").arg(flag_dir.path()).env(OUT_DIR_ENV, env_dir.path()));
    assert!(flag_dir.path().join("short-seed3.results.json").exists());
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_json(dir.path(), "short.json", &proactive_linear("short", 20));
    run_ok(bench().arg("run").arg(&config).args(["--seed", "11", "--out"]).arg(dir.path()));
    let doc = read_json(&dir.path().join("short-seed11.results.json"));
    assert_eq!(doc["config"]["seed"], json!(11));
    assert_eq!(doc["runs"][0]["seed"], json!(11));
}

#[test]
fn divergent_run_is_recorded_and_exits_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({
        "name": "blowup",
        "game": { "variant": "linear", "beta": [1.0, 0.0], "sigma2": 0.0, "budget": 2.0, "theta_radius": 1e300 },
        "runs": [{
            "order": "proactive", "epochs": 100, "inner_steps": 5,
            "eta0": 1e200, "eta_exponent": 0.0, "delta0": 1e-200, "delta_exponent": 0.0, "fast_step": 1.0,
        }],
        "seed": 0,
    });
    let path = write_json(dir.path(), "blowup.json", &config);
    let out = bench().arg("run").arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("aborted"));

    let trace = fs::read_to_string(dir.path().join("blowup-seed0-proactive.csv")).unwrap();
    let marker = trace.lines().last().unwrap();
    assert!(marker.starts_with("# aborted at epoch"), "{marker}");
    let doc = read_json(&dir.path().join("blowup-seed0.results.json"));
    assert_valid("results.schema.json", &doc);
    let run = &doc["runs"][0];
    let completed = run["epochs_completed"].as_u64().unwrap();
    assert!(completed < 100);
    assert_eq!(csv_rows(&dir.path().join("blowup-seed0-proactive.csv")).len() as u64, completed);
    assert!(marker.starts_with(&format!("# aborted at epoch {}:", completed + 1)), "{marker}");
    assert!(run["aborted"].as_str().unwrap().contains(&format!("epoch {}", completed + 1)));
}
