use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const RULES: &str = r#"
[target]
name = "y"
source = "Y"
otherwise = "error"

[[target.rules]]
code = 0
when = { eq = 0 }

[[target.rules]]
code = 1
when = { eq = 1 }

[[feature]]
name = "a"
source = "A"
otherwise = "error"

[[feature.rules]]
code = 0
when = { eq = 0 }

[[feature.rules]]
code = 1
when = { eq = 1 }

[[feature]]
name = "b"
source = "B"
missing = [9]
otherwise = "error"

[[feature.rules]]
code = 0
when = { lt = 5 }

[[feature.rules]]
code = 1
when = { ge = 5 }
"#;

fn treebench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treebench")).args(args).output().unwrap()
}

fn run(cmd: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    treebench(&args)
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

/// `y` follows `a` with some noise; `b` is irrelevant and occasionally missing.
fn write_project(dir: &Path, target: impl Fn(usize, u8) -> u8, seed_line: &str) -> PathBuf {
    let mut raw = String::from("A,B,Y\n");
    for i in 0..120 {
        let a = (i % 2) as u8;
        let b = if i % 40 == 7 { 9 } else { (i * 3) % 9 };
        raw += &format!("{a},{b},{}\n", target(i, a));
    }
    fs::write(dir.join("raw.csv"), raw).unwrap();
    fs::write(dir.join("rules.toml"), RULES).unwrap();
    let config = format!(
        "{seed_line}\n[data]\nraw = \"raw.csv\"\nrules = \"rules.toml\"\n\n\
         [cv]\nfolds = 5\n\n[selection]\nbackground_size = 16\n\n[selection.forest]\nn_trees = 10\n\n\
         [explain]\nrows = [0, 1, 2, 3]\nbackground_size = 16\n"
    );
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    path
}

fn noisy(i: usize, a: u8) -> u8 {
    if i % 10 == 3 { 1 - a } else { a }
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("ingest", &dir.path().join("absent.toml"), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(treebench(&["frobnicate", "--config", "x.toml"]).status.code(), Some(2));
    assert_eq!(treebench(&["ingest"]).status.code(), Some(2));
}

#[test]
fn missing_seed_or_rules_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), noisy, "");
    assert_eq!(run("ingest", &config, &[]).status.code(), Some(2));
    assert_ok(&run("ingest", &config, &["--seed", "3"]));

    fs::remove_file(dir.path().join("rules.toml")).unwrap();
    assert_eq!(run("ingest", &config, &["--seed", "3"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), noisy, "seed = 1\ncolour = \"blue\"");
    assert_eq!(run("ingest", &config, &[]).status.code(), Some(2));
}

#[test]
fn commands_out_of_order_report_the_missing_step() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), noisy, "seed = 1");
    let out = run("compare", &config, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest"));
}

#[test]
fn ingest_drops_missing_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), noisy, "seed = 1");
    assert_ok(&run("ingest", &config, &[]));
    let coded = fs::read_to_string(dir.path().join("out/coded.csv")).unwrap();
    assert_eq!(coded.lines().count(), 1 + 120 - 3);
}

#[test]
fn selection_over_two_features() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), noisy, "seed = 5");
    assert_ok(&run("ingest", &config, &[]));
    assert_ok(&run("select-features", &config, &[]));
    let trace: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/elimination_trace.json")).unwrap()).unwrap();
    let steps = trace["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 2);
    assert_eq!(steps[0]["features"].as_array().unwrap().len(), 2);
    assert_eq!(steps[1]["features"].as_array().unwrap().len(), 1);
    let selected = fs::read_to_string(dir.path().join("out/selected_features.txt")).unwrap();
    assert!(selected.lines().any(|l| l == "a"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), noisy, "seed = 8");
    let mut snapshots = Vec::new();
    for out in ["one", "two"] {
        let out_dir = dir.path().join(out);
        let flag = ["--out", out_dir.to_str().unwrap()];
        for cmd in ["ingest", "select-features", "compare", "explain"] {
            assert_ok(&run(cmd, &config, &flag));
        }
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        snapshots.push(files);
    }
    assert_eq!(snapshots[0].len(), 13);
    assert_eq!(snapshots[0], snapshots[1]);

    let ranking = fs::read_to_string(dir.path().join("one/shap_importance.csv")).unwrap();
    let values: Vec<f64> = ranking.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), noisy, "seed = 8");
    let report = |seed: &str| {
        let out_dir = dir.path().join(seed);
        let flag = ["--out", out_dir.to_str().unwrap(), "--seed", seed];
        assert_ok(&run("ingest", &config, &flag));
        assert_ok(&run("compare", &config, &flag));
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out_dir.join("compare_report.json")).unwrap()).unwrap();
        report["seed"].as_u64().unwrap()
    };
    assert_eq!(report("11"), 11);
}

#[test]
fn explain_out_of_range_row_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), noisy, "seed = 2");
    assert_ok(&run("ingest", &config, &[]));
    assert_ok(&run("select-features", &config, &[]));
    let text = fs::read_to_string(&config).unwrap().replace("rows = [0, 1, 2, 3]", "rows = [500]");
    fs::write(&config, text).unwrap();
    assert_eq!(run("explain", &config, &[]).status.code(), Some(2));
}

#[test]
fn constant_model_has_zero_attributions() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_project(dir.path(), |_, _| 1, "seed = 4");
    for cmd in ["ingest", "select-features", "explain"] {
        assert_ok(&run(cmd, &config, &[]));
    }
    let values = fs::read_to_string(dir.path().join("out/shap_values.csv")).unwrap();
    let phis: Vec<f64> = values.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(!phis.is_empty());
    assert!(phis.iter().all(|&p| p == 0.0));
}
