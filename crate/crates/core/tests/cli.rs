use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msddp::telemetry::{IterationRecord, CSV_COLUMNS};
use msddp::Instance;
use serde_json::Value;

fn msddp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msddp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(name);
    let text = std::fs::read_to_string(path).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(validator: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

fn instance(dir: &Path, name: &str, counts: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["gen", "-T", "3", "--counts", counts, "--seed", "4", "--out"];
    let p = path.to_str().unwrap().to_string();
    args.push(&p);
    args.extend(extra);
    let out = msddp(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

#[test]
fn gen_writes_valid_instance_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = instance(dir.path(), "inv.json", "1,2,2", &[]);
    let inst = Instance::load(&path).unwrap();
    assert!(inst.check().is_ok());
    assert_eq!(inst.scenario_counts(), vec![1, 2, 2]);
}

#[test]
fn gen_rejects_degenerate_random_lp() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"family":"random-lp","T":3,"counts":[1,2,2],"n":2,"seed":1,"lambda":0.9,
            "params":{"box_width":0.0}}"#,
    )
    .unwrap();
    let out = msddp(&["gen", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("box_width"));
}

#[test]
fn solver_json_matches_schema_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let det = instance(dir.path(), "det.json", "1,1,1", &[]);
    let stoch = instance(dir.path(), "stoch.json", "1,2,2", &[]);
    let validator = schema("iteration_record.schema.json");
    let runs: Vec<Vec<&str>> = vec![
        vec![
            "ddp",
            "--instance",
            det.to_str().unwrap(),
            "--delta",
            "0.05",
        ],
        vec![
            "eddp",
            "--instance",
            stoch.to_str().unwrap(),
            "--delta",
            "0.05",
        ],
        vec![
            "sddp",
            "--instance",
            stoch.to_str().unwrap(),
            "--audit",
            "--replicas",
            "3",
        ],
    ];
    for mut args in runs {
        args.extend(["--format", "json"]);
        let out = msddp(&args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_valid(&validator, &doc);
        let records: Vec<IterationRecord> = serde_json::from_value(doc).unwrap();
        assert!(!records.is_empty());
        assert!(records.iter().all(|r| r.wall_ms == 0.0));
        let again = serde_json::to_vec_pretty(&records).unwrap();
        assert_eq!(again, out.stdout[..out.stdout.len() - 1]);
    }
}

#[test]
fn timing_flag_keeps_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let det = instance(dir.path(), "det.json", "1,1,1", &[]);
    let out = msddp(&[
        "ddp",
        "--instance",
        det.to_str().unwrap(),
        "--format",
        "json",
        "--timing",
    ]);
    let records: Vec<IterationRecord> = serde_json::from_slice(&out.stdout).unwrap();
    assert!(records.iter().any(|r| r.wall_ms > 0.0));
}

#[test]
fn csv_has_versioned_header_and_fixed_width() {
    let dir = tempfile::tempdir().unwrap();
    let stoch = instance(dir.path(), "stoch.json", "1,2,2", &[]);
    let out = msddp(&[
        "eddp",
        "--instance",
        stoch.to_str().unwrap(),
        "--delta",
        "0.1",
    ]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, CSV_COLUMNS);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert!(!rows.is_empty());
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), CSV_COLUMNS.len());
        assert_eq!(row[0].parse::<usize>().unwrap(), i + 1);
        assert_eq!(row[8].split(';').count(), 2);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let stoch = instance(dir.path(), "stoch.json", "1,2,2", &[]);
    let s = stoch.to_str().unwrap();
    // ddp needs a single-scenario instance
    assert_eq!(msddp(&["ddp", "--instance", s]).status.code(), Some(4));
    assert_eq!(
        msddp(&["ddp", "--instance", "/missing.json"]).status.code(),
        Some(4)
    );
    assert_eq!(msddp(&["frobnicate"]).status.code(), Some(4));
    let budget = msddp(&[
        "eddp",
        "--instance",
        s,
        "--delta",
        "0.01",
        "--max-iter",
        "1",
    ]);
    assert_eq!(budget.status.code(), Some(2));
    let planned = msddp(&[
        "sddp",
        "--instance",
        s,
        "--stop",
        "budget",
        "--max-iter",
        "2",
    ]);
    assert_eq!(planned.status.code(), Some(0));
    let kelley = msddp(&[
        "kelley",
        "--function",
        "kink",
        "--n",
        "2",
        "--eps",
        "0.001",
        "--max-iter",
        "2",
    ]);
    assert_eq!(kelley.status.code(), Some(2));
}

#[test]
fn infeasible_instance_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let det = instance(dir.path(), "det.json", "1,1,1", &[]);
    let mut inst = Instance::load(&det).unwrap();
    // stage 2 demands x_2 >= 2 inside the unit box
    let real = &mut inst.scenarios[1][0];
    real.G.push(vec![-1.0]);
    real.Q.push(vec![0.0]);
    real.q.push(-2.0);
    inst.stages[1].p += 1;
    let bad = dir.path().join("bad.json");
    inst.save(&bad).unwrap();
    let out = msddp(&["ddp", "--instance", bad.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("recourse"));
}

#[test]
fn oracle_outputs_json() {
    let dir = tempfile::tempdir().unwrap();
    let stoch = instance(dir.path(), "stoch.json", "1,2,2", &[]);
    let s = stoch.to_str().unwrap();
    let out = msddp(&["oracle", "--instance", s, "extensive"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["value"].is_number());
    let out = msddp(&[
        "oracle",
        "--instance",
        s,
        "grid",
        "--stage",
        "3",
        "--res",
        "4",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["values"].as_array().unwrap().len(), 5);
    let first = msddp(&["oracle", "--instance", s, "grid", "--stage", "1"]);
    assert_eq!(first.status.code(), Some(4));
}

#[test]
fn smoke_suite_report_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = msddp(&[
        "suite",
        "--level",
        "smoke",
        "--out",
        report.to_str().unwrap(),
    ]);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_valid(&schema("suite_report.schema.json"), &doc);
    assert_eq!(doc["criteria"].as_array().unwrap().len(), 12);
    assert_eq!(
        out.status.code(),
        Some(if doc["passed"] == true { 0 } else { 1 })
    );
}

#[test]
fn threads_flag_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let stoch = instance(dir.path(), "stoch.json", "1,2,2", &[]);
    let s = stoch.to_str().unwrap();
    let base = [
        "sddp",
        "--instance",
        s,
        "--seed",
        "3",
        "--replicas",
        "5",
        "--max-iter",
        "10",
    ];
    let one = msddp(&[&["--threads", "1"][..], &base].concat());
    let four = msddp(&[&["--threads", "4"][..], &base].concat());
    assert_eq!(one.stdout, four.stdout);
}
