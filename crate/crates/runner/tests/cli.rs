use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fakeinv_runner::report::RunReport;
use tempfile::TempDir;

const TINY: &str = r#"{"schema_version":1,"run_id":"tiny","seeds":[0],"samples_per_env":300,"test_samples":200,
"train":{"epochs":1,"max_outer_epochs":1,"selector_steps":2,"inner_iterations":2,"batch_size":32,
"block_hidden":4,"block_output":2,"predictor_hidden":8,"estimator_hidden":4}}"#;

fn fakeinv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fakeinv")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny(dir: &Path) -> String {
    fs::write(dir.join("tiny.json"), TINY).unwrap();
    "tiny.json".into()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn generate_is_reproducible_and_seeded() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    for out in ["a", "b"] {
        assert_eq!(code(&fakeinv(d, &["generate", "--k", "4", "--out", out])), 0);
    }
    assert_eq!(code(&fakeinv(d, &["generate", "--k", "4", "--seed", "9", "--out", "c"])), 0);
    let (a, b, c) = (files(&d.join("a")), files(&d.join("b")), files(&d.join("c")));
    assert_eq!(a, b);
    let train = |v: &[(String, Vec<u8>)]| v.iter().find(|f| f.0 == "train_env0.csv").unwrap().1.clone();
    assert_ne!(train(&a), train(&c));
    let names: Vec<&str> = a.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("train_")).count(), 2);
    assert_eq!(names.iter().filter(|n| n.starts_with("test_")).count(), 3);
    assert!(!names.contains(&"exact_joint.json"));
}

#[test]
fn generate_writes_exact_table_on_request() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&fakeinv(t.path(), &["generate", "--k", "4", "--exact", "--out", "x"])), 0);
    let text = fs::read_to_string(t.path().join("x/exact_joint.json")).unwrap();
    assert!(fakeinv_core::info::JointTable::from_json(&text).is_ok());
}

#[test]
fn verify_exit_codes() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    let o = fakeinv(d, &["verify", "--out", "runs"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL           prop2_oracle"));
    let report = RunReport::from_json(&fs::read_to_string(d.join("runs/default/verify.json")).unwrap()).unwrap();
    assert_eq!(report.claims.len(), 10);

    let o = fakeinv(d, &["verify", "--out", "runs", "--run-id", "off", "--fake-branch", "off"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("PREMISE ABSENT prop1_witness"));

    assert_eq!(code(&fakeinv(d, &["verify", "--out", "runs"])), 2);
    assert_eq!(code(&fakeinv(d, &["verify", "--out", "runs", "--overwrite"])), 1);
    assert_eq!(code(&fakeinv(d, &["generate", "--k", "1", "--out", "bad"])), 2);
    fs::write(d.join("broken.json"), "{\"schema_version\": 7}").unwrap();
    assert_eq!(code(&fakeinv(d, &["verify", "--config", "broken.json", "--out", "runs", "--run-id", "b"])), 2);
}

#[test]
fn verify_is_byte_reproducible() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    fakeinv(d, &["verify", "--out", "a"]);
    fakeinv(d, &["verify", "--out", "b"]);
    assert_eq!(fs::read(d.join("a/default/verify.json")).unwrap(), fs::read(d.join("b/default/verify.json")).unwrap());
}

#[test]
fn train_and_report() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    let cfg = tiny(d);
    let o = fakeinv(d, &["train", "--config", &cfg, "--out", "runs", "--ablate-mi", "off"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = d.join("runs/tiny");
    for f in ["report.json", "accuracy.csv", "curves.csv", "metadata.json", "models/iil_seed0.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let report = RunReport::from_json(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert!(report.accuracies.iter().any(|a| a.method == "iil_no_mi"));

    let o = fakeinv(d, &["train", "--config", &cfg, "--out", "runs", "--run-id", "s1", "--seeds", "1", "--ablate-mi", "on"]);
    assert_eq!(code(&o), 0);
    let r1 = RunReport::from_json(&fs::read_to_string(d.join("runs/s1/report.json")).unwrap()).unwrap();
    assert!(r1.accuracies.iter().all(|a| a.method != "iil_no_mi" && a.seed == 1));

    assert_eq!(code(&fakeinv(d, &["report", "tiny", "--out", "runs", "--csv", "one.csv"])), 0);
    let one = fs::read_to_string(d.join("one.csv")).unwrap();
    assert_eq!(one.lines().count(), report.accuracies.len() + 1);
    assert!(one.starts_with("run_id,method,shift,seed,accuracy"));

    assert_eq!(code(&fakeinv(d, &["report", "tiny", "s1", "--out", "runs", "--csv", "both.csv"])), 0);
    let both = fs::read_to_string(d.join("both.csv")).unwrap();
    assert!(both.lines().any(|l| l.starts_with("s1,") && l.contains(",1,")));
    assert!(both.lines().any(|l| l.starts_with("tiny,") && l.contains(",0,")));

    assert_eq!(code(&fakeinv(d, &["report", "missing", "--out", "runs"])), 2);
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("runs/s1/report.json")).unwrap()).unwrap();
    v["schema_version"] = 2.into();
    fs::write(d.join("runs/s1/report.json"), v.to_string()).unwrap();
    assert_eq!(code(&fakeinv(d, &["report", "tiny", "s1", "--out", "runs"])), 2);
}

#[test]
fn train_reads_generated_data() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    let cfg = tiny(d);
    assert_eq!(code(&fakeinv(d, &["generate", "--config", &cfg, "--out", "data"])), 0);
    let a = fakeinv(d, &["train", "--config", &cfg, "--out", "runs", "--run-id", "a", "--data", "data"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&fakeinv(d, &["train", "--config", &cfg, "--out", "runs", "--run-id", "b"])), 0);
    let acc = |id: &str| RunReport::from_json(&fs::read_to_string(d.join(format!("runs/{id}/report.json"))).unwrap()).unwrap().accuracies;
    assert_eq!(acc("a"), acc("b"));
    let o = fakeinv(d, &["train", "--config", &cfg, "--seed", "5", "--out", "runs", "--run-id", "c", "--data", "data"]);
    assert_eq!(code(&o), 2);
}
