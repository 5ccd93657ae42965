use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ivgen::evalbench::ExperimentPlan;
use ivgen::store::{read_dataset, RunConfig};
use ivgen_core::world::TaskId;

fn ivgen(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivgen")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn config_prints_overridden_toml() {
    let dir = tempfile::tempdir().unwrap();
    let o = ivgen(&["config", "--task", "geometry", "--n", "250", "--k", "5", "--seed", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let c = RunConfig::from_toml(&stdout(&o)).unwrap();
    assert_eq!(c.task, TaskId::GeometryAssembly);
    assert_eq!((c.generation.n, c.policy.k, c.generation.seed, c.eval.seed), (250, 5, 4, 4));
}

#[test]
fn bad_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = ivgen(&["config", "--k", "0"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("policy.k"), "{}", stderr(&o));

    fs::write(dir.path().join("run.toml"), "task = \"planar_peg_insert\"\nmystery = 3\n").unwrap();
    let o = ivgen(&["config", "--config", "run.toml"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("mystery"), "{}", stderr(&o));

    fs::write(dir.path().join("run.toml"), "task = \"planar_peg_insert\"\n").unwrap();
    let o = ivgen(&["config", "--config", "run.toml", "--task", "geometry"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn collect_validate_fit_eval() {
    let dir = tempfile::tempdir().unwrap();
    let o = ivgen(&["collect-demos", "--count", "4", "--seed", "2", "-o", "demos.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_dataset(&dir.path().join("demos.jsonl")).unwrap().len(), 4);

    let o = ivgen(&["validate", "demos.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("4 episodes"));
    assert!(stdout(&o).contains("0 violations"));

    let o = ivgen(&["fit", "--data", "demos.jsonl", "-o", "model.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = ivgen(&["eval", "--policy", "model.json", "--clean", "--trials", "5", "--json", "stats.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("success "), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("stats.json")).unwrap()).unwrap();
    assert_eq!(v["trials"], 5);
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ivgen(&["collect-demos", "--count", "2", "-o", "d.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{}";
    fs::write(dir.path().join("bad.jsonl"), lines.join("\n")).unwrap();

    let o = ivgen(&["validate", "bad.jsonl", "--json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["violations"][0]["kind"], "schema");
    assert_eq!(v["violations"][0]["line"], 3);

    let o = ivgen(&["validate", "absent.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn experiment_plan_printing() {
    let dir = tempfile::tempdir().unwrap();
    let o = ivgen(&["experiment", "--preset", "geometry", "--print-plan"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(ExperimentPlan::from_toml(&stdout(&o)).unwrap(), ExperimentPlan::geometry_study());

    fs::write(dir.path().join("plan.toml"), ExperimentPlan::peg_ladder().to_toml() + "\nextra = 1\n").unwrap();
    let o = ivgen(&["experiment", "--plan", "plan.toml", "--print-plan"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn unknown_subcommand_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!ivgen(&["levitate"], dir.path()).status.success());
}
