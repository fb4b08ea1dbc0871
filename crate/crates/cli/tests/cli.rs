//! End-to-end runs of the `contact-hj` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TWO_BRANCH: &str = r#"
[problem]
family = "classical_quadratic"
datum = { kind = "min_of", pieces = [{ kind = "linear", a = [2.0] }, { kind = "linear", a = [0.0] }] }

[trace_singular]
t0 = 0.6
x0 = [0.6]
direction = "bidirectional"
horizon_forward = 0.5
horizon_backward = 0.5

[oracle]
box_min = [-1.0]
box_max = [3.0]
dx = 0.005
dt = 0.002
t_final = 1.1
save_every = 5

[report]
t_min = 0.1
t_max = 1.1
value_samples = 5
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_contact-hj"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/manifest.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn trace_singular_writes_curve_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), TWO_BRANCH, &["trace-singular"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(dir.path());
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(files, ["singular_curve.csv", "singular_report.json"]);
    for f in &files {
        assert!(dir.path().join("out").join(f).exists());
    }
    let csv = std::fs::read_to_string(dir.path().join("out/singular_curve.csv")).unwrap();
    assert!(csv.starts_with("t,x0,lambda0,q,p0,v0,"));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/singular_report.json")).unwrap()).unwrap();
    assert!(report["max_equality_residual"].as_f64().unwrap() <= 1e-7);
    assert_eq!(m["exit"]["code"], 0);
    // every default is echoed
    assert_eq!(m["config"]["tolerances"]["tol_conj"], 1e-7);
    assert_eq!(m["config"]["value"]["points_per_dim"], 21);
}

#[test]
fn malformed_box_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{TWO_BRANCH}\n[value]\nbox_min = [1.0]\nbox_max = [-1.0]\n");
    let o = run(dir.path(), &cfg, &["value"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("value.box_min[0]"), "{}", stderr(&o));
    assert!(!dir.path().join("out/manifest.json").exists());
}

#[test]
fn unknown_key_reports_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{TWO_BRANCH}\nbogus = 1\n");
    let o = run(dir.path(), &cfg, &["oracle"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("bogus") && e.contains("line"), "{e}");
}

#[test]
fn report_matches_grid_kinks_within_two_cells() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), TWO_BRANCH, &["report", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    let cells = r["max_interface_distance_cells"].as_f64().unwrap();
    assert!(cells <= 2.0, "{cells}");
    assert!(r["slices"].as_u64().unwrap() > 10);
    assert_eq!(manifest(dir.path())["config"]["output"]["seed"], 3);
}

#[test]
fn identical_config_and_seed_give_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = r#"
[problem]
family = "contact_discounted"
lambda = 0.5
datum = { kind = "double_well" }

[value]
times = [0.5, 1.5]
box_min = [-1.0]
box_max = [1.0]
points_per_dim = 9
"#;
    for d in [&a, &b] {
        let o = run(d.path(), cfg, &["value", "--seed", "11"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("out/value_map.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(manifest(a.path())["files"], manifest(b.path())["files"]);
}

#[test]
fn tolerance_overrides_are_applied_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[problem]\nfamily = \"focusing\"\n\n[conjugate_scan]\nseeds = [[0.5]]\n";
    let o = run(dir.path(), cfg, &["conjugate-scan", "--tol-override", "dt=0.005"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(dir.path());
    assert_eq!(m["config"]["tolerances"]["dt"], 0.005);
    assert_eq!(m["tol_overrides"][0], "dt=0.005");
    let csv = std::fs::read_to_string(dir.path().join("out/conjugate.csv")).unwrap();
    let t: f64 = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((t - 1.0).abs() < 1e-6);

    let o = run(dir.path(), cfg, &["conjugate-scan", "--tol-override", "nope=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), cfg, &["conjugate-scan", "--tol-override", "tol_conj=-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_invariant_exits_one_and_keeps_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[problem]\nfamily = \"focusing\"\n\n[trace_char]\nseeds = [[0.3]]\nmax_herglotz_residual = 1e-300\n";
    let o = run(dir.path(), cfg, &["trace-char"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let m = manifest(dir.path());
    assert_eq!(m["exit"]["status"], "invariant_failure");
    assert_eq!(m["files"][0]["path"], "trajectory_000.csv");
}

#[test]
fn cfl_violation_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TWO_BRANCH.replace("dt = 0.002", "dt = 0.05");
    let o = run(dir.path(), &cfg, &["oracle"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(manifest(dir.path())["exit"]["status"], "numerical_failure");
}

#[test]
fn task_key_must_match_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("task = \"oracle\"\n{TWO_BRANCH}");
    let o = run(dir.path(), &cfg, &["classify"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("task"));
}

#[test]
fn classify_counts_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
[problem]
family = "classical_quadratic"
datum = { kind = "min_of", pieces = [{ kind = "linear", a = [1.0] }, { kind = "linear", a = [-1.0] }] }

[classify]
times = [1.0]
box_min = [-1.0]
box_max = [1.0]
points_per_dim = 5
"#;
    let o = run(dir.path(), cfg, &["classify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let counts = &manifest(dir.path())["summary"]["counts"];
    assert_eq!(counts["irregular_only"], 1);
    assert_eq!(counts["regular"], 4);
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_contact-hj")).arg("value").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_contact-hj")).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_scenarios_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            let c = contact_hj_cli::ScenarioConfig::load(&p).unwrap();
            c.validate(c.task.expect("scenario files name their task")).unwrap();
            c.build_problem().unwrap();
            n += 1;
        }
    }
    assert!(n >= 5);
}
