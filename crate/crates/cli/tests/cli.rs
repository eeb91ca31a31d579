use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rode-density"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_env(args: &[&str], threads: &str) -> Output {
    bin().args(args).env("RODE_THREADS", threads).output().expect("binary runs")
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line");
    serde_json::from_str(line).expect("machine-readable error")
}

#[test]
fn table_reproduces_example1_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    let out = run(&[
        "table",
        "--example",
        "example1",
        "--Ns",
        "1,2",
        "--t",
        "0.5",
        "--oracle",
        "exact",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "N,error,reference");
    assert_eq!(rows.len(), 3);
    // Reference errors for N = 1, 2 from the exact Gaussian density.
    for (row, want) in rows[1..].iter().zip([0.0687343, 0.00743475]) {
        let err: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((err - want).abs() < 0.05 * want, "{row}");
    }
    let summary = String::from_utf8_lossy(&out.stderr);
    assert_eq!(summary.lines().count(), 1);
    assert!(summary.starts_with("table Ns=1,2 t=0.5 -> "), "{summary}");
}

#[test]
fn empty_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    std::fs::write(&path, "{}").unwrap();
    let out = run(&["--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "validation");
    let v: Vec<String> =
        e["error"]["violations"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect();
    assert!(v.iter().any(|s| s.contains("command")), "{v:?}");
    assert!(v.iter().any(|s| s.contains("problem")), "{v:?}");
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_flags_are_all_listed() {
    let out = run(&["density", "--example", "example1", "--xs", "1:0", "--quad", "grid:3", "--formula", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"]["violations"].as_array().unwrap().len(), 3);
}

#[test]
fn density_csv_has_one_row_per_point() {
    let out = run(&[
        "density",
        "--example",
        "example4",
        "--N",
        "1",
        "--ts",
        "0.25,0.5",
        "--xs",
        "-1:1:3",
        "--quad",
        "tensor:6",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "t,x,value");
    assert_eq!(rows.len(), 7);
    let first: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(first[0].parse::<f64>().unwrap(), 0.25);
    assert_eq!(first[1].parse::<f64>().unwrap(), -1.0);
    let v: f64 = first[2].parse().unwrap();
    assert!(v > 0.0 && v < 1.0);
}

#[test]
fn mc_density_has_stderr_column_and_json_form() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.json");
    let out = run(&[
        "density",
        "--example",
        "example5",
        "--N",
        "2",
        "--t",
        "0.4",
        "--xs",
        "0.2:0.6:3",
        "--quad",
        "mc:2000:1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["values"][0].as_array().unwrap().len(), 3);
    assert!(v["stderr"].is_array());
    let out = run(&[
        "density",
        "--example",
        "example5",
        "--N",
        "2",
        "--t",
        "0.4",
        "--xs",
        "0.2:0.6:3",
        "--quad",
        "mc:2000:1",
    ]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("t,x,value,stderr\n"));
}

fn file_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn outputs_are_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let args = |p: &Path| {
        vec![
            "density".to_string(),
            "--example".into(),
            "example5".into(),
            "--N".into(),
            "2".into(),
            "--t".into(),
            "0.4".into(),
            "--xs".into(),
            "0:1:5".into(),
            "--quad".into(),
            "mc:3000:4".into(),
            "--out".into(),
            p.to_str().unwrap().into(),
        ]
    };
    for (p, threads) in [(&a, "1"), (&b, "1"), (&c, "3")] {
        let argv = args(p);
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let out = run_env(&argv, threads);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(file_bytes(&a), file_bytes(&b));
    assert_eq!(file_bytes(&a), file_bytes(&c));
}

#[test]
fn paths_and_verify_run() {
    let out = run(&["paths", "--example", "example4", "--N", "2", "--ts", "0,0.5,1", "--paths", "4", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next(), Some("t,x,path_id"));
    assert_eq!(csv.lines().count(), 1 + 4 * 3);

    let out = run(&["verify", "--example", "example1", "--N", "2", "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 9);
}

#[test]
fn numerical_errors_carry_location() {
    // The xi_1 form is undefined at x = 0.
    let out = run(&[
        "density",
        "--example",
        "example1",
        "--N",
        "1",
        "--t",
        "0.5",
        "--xs",
        "0:1:3",
        "--formula",
        "xi1",
        "--quad",
        "tensor:4",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "undefined_point");
    assert_eq!(e["error"]["location"]["x"], 0.0);
    assert_eq!(e["error"]["location"]["N"], 1);
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = run_env(&["density", "--example", "example1"], "none");
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["error"]["message"].as_str().unwrap().contains("RODE_THREADS"));
}
