use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uniqrisk"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, content).unwrap();
    p.to_str().unwrap().to_string()
}

const PROFILE: &str = r#"{"n": 105, "k": 75, "z": {"1": 50, "2": 20, "3": 5}}"#;

#[test]
fn profile_from_lines_stdin() {
    let o = run_stdin(&["profile", "--in", "-"], "a\nb\nb\n\nc\nc\nc\n");
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["n"], 6);
    assert_eq!(v["k"], 3);
    assert_eq!(v["z"]["1"], 1);
    assert_eq!(v["z"]["3"], 1);
    // the resolved configuration is echoed on stderr as one JSON line
    let err = String::from_utf8(o.stderr).unwrap();
    let config: Value = serde_json::from_str(err.lines().next().unwrap()).unwrap();
    assert_eq!(config["command"]["command"], "profile");
}

#[test]
fn profile_from_counts_and_key_columns() {
    let dir = tempfile::tempdir().unwrap();
    let counts = write(dir.path(), "c.csv", "cell,count\nx,1\ny,2\nz,1\nw,0\n");
    let v: Value = serde_json::from_slice(&run(&["profile", "--in", &counts, "--counts"]).stdout).unwrap();
    assert_eq!((v["n"].as_u64(), v["k"].as_u64()), (Some(4), Some(3)));

    let records = write(dir.path(), "r.csv", "age,sex,zip\n30,f,1\n30,f,2\n30,m,1\n30,f,1\n");
    let o = run(&["profile", "--in", &records, "--key-cols", "age,sex", "--format", "csv"]);
    assert_eq!(stdout(&o), "i,z\n1,1\n3,1\n");
    let o = run(&["profile", "--in", &records, "--key-cols", "height"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn estimate_all_returns_six_reports() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.json", PROFILE);
    let o = run(&["estimate", "--profile", &p, "--lambda", "9", "--nbar", "1050", "--estimator", "all"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["binomial2", "poisson", "naive", "dirichlet", "bethlehem", "skinner"]);
    // naive: Z₁ n / n̄
    assert_eq!(v[2]["value"].as_f64(), Some(50.0 * 105.0 / 1050.0));
}

#[test]
fn json_and_csv_carry_identical_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.json", PROFILE);
    let args = ["estimate", "--profile", &p, "--lambda", "9"];
    let json: Value = serde_json::from_slice(&run(&[&args[..], &["--format", "json"]].concat()).stdout).unwrap();
    let csv = stdout(&run(&[&args[..], &["--format", "csv"]].concat()));
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    for (row, report) in reader.records().zip(json.as_array().unwrap()) {
        let row = row.unwrap();
        assert_eq!(&row[0], report["name"].as_str().unwrap());
        let value: f64 = row[1].parse().unwrap();
        assert_eq!(value.to_bits(), report["value"].as_f64().unwrap().to_bits());
    }
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["estimate", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--table", "4"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    // a single cell seen twice: the concentration equation has no finite root
    let p = write(dir.path(), "p.json", r#"{"n": 2, "k": 1, "z": {"2": 1}}"#);
    let o = run(&["estimate", "--profile", &p, "--lambda", "9", "--estimator", "dirichlet"]);
    assert_eq!(o.status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    let o = run(&["estimate", "--profile", missing.to_str().unwrap(), "--lambda", "9"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_small_table_is_deterministic() {
    let args = ["simulate", "--table", "1", "--seed", "42", "--scale", "0.01", "--iterations", "5"];
    let a = run(&args);
    assert!(a.status.success());
    let text = stdout(&a);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8);
    assert!(lines[0].starts_with("estimator,zipf_0.2,zipf_0.2_sd,"));
    assert!(lines[1].starts_with("true_tau1,"));
    assert_eq!(lines[0].split(',').count(), 15);
    let b = run(&[&args[..], &["--threads", "2"]].concat());
    assert_eq!(a.stdout, b.stdout);
    let other_seed = run(&["simulate", "--table", "1", "--seed", "43", "--scale", "0.01", "--iterations", "5"]);
    assert_ne!(a.stdout, other_seed.stdout);
}

#[test]
fn bounds_curve_csv() {
    let o = run(&["bounds", "--lambda-min", "1", "--lambda-max", "20", "--n", "100000,1000000", "--steps", "19"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap(), vec!["kind", "lambda", "n", "value"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let a1 = rows.iter().find(|r| &r[0] == "a_lambda" && &r[1] == "1.0").unwrap();
    assert_eq!(&a1[3], "2.0");
    assert!(rows.iter().any(|r| &r[0] == "nmse_poisson" && &r[2] == "1000000.0"));
}

#[test]
fn polyapprox_report_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = run(&["polyapprox", "--xi", "20", "--B", "10", "--L", "0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["bessel_sum_holds"], true);
    let c = v["c"].as_f64().unwrap();
    assert!((c - 9.5).abs() < 1e-12);
    // degree 0: the midrange error of e^{-C(t+1)} on [-1, 1]
    assert!((v["e_gamma"].as_f64().unwrap() - (1.0 - (-2.0 * c).exp()) / 2.0).abs() < 1e-10);
    assert_eq!(run(&["polyapprox", "--xi", "20", "--L", "2"]).status.code(), Some(1));
}
