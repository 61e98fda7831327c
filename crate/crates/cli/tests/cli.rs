use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collabmech")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn csv_rows(o: &Output) -> (Vec<String>, Vec<Vec<String>>) {
    let text = stdout(o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn solve_alpha_reports_root_in_bracket() {
    let o = run(&["solve-alpha", "--sigma", "1", "--cost", "1/900", "--agents", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let a_m = v["solution"]["a_m"].as_f64().unwrap();
    assert!(a_m > 1.0 && a_m < 1.0 + 20.0 / 9.0);
    assert!(v["solution"]["residual"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(v["params"]["n_star"].as_u64(), Some(10));
    assert!((v["solution"]["alpha"].as_f64().unwrap() - 5.426365068007024).abs() < 1e-10);
}

#[test]
fn solve_alpha_is_byte_identical_across_runs() {
    let args = ["solve-alpha", "--agents", "21", "--format", "csv"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn small_market_has_no_alpha() {
    let o = run(&["solve-alpha", "--agents", "4", "--cost", "1/64"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("m ≤ 4 uses no corruption"));
}

#[test]
fn bad_flags_exit_one() {
    assert_eq!(run(&["solve-alpha", "--nonsense"]).status.code(), Some(1));
    assert_eq!(run(&["solve-alpha", "--cost", "1/0"]).status.code(), Some(1));
    // n* = sqrt(1000/9) is not an integer
    assert_eq!(run(&["solve-alpha", "--cost", "1/1000"]).status.code(), Some(1));
    assert_eq!(run(&["figures", "g-check", "--m-range", "4:10"]).status.code(), Some(1));
    assert_eq!(run(&["figures", "g-check", "--m-range", "9:5"]).status.code(), Some(1));
}

#[test]
fn g_check_covers_the_full_range() {
    let o = run(&["figures", "g-check", "--m-range", "5:500"]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = csv_rows(&o);
    assert_eq!(header, ["m", "g_upper"]);
    assert_eq!(rows.len(), 496);
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn em_check_rows_and_bound() {
    let o = run(&["figures", "em-check", "--m-range", "5:6"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(csv_rows(&o).1.len(), 2);

    let o = run(&["figures", "em-check", "--m-range", "5:500"]);
    assert_eq!(o.status.code(), Some(0));
    for r in csv_rows(&o).1 {
        let e: f64 = r[1].parse().unwrap();
        let bound: f64 = r[2].parse().unwrap();
        assert!(e < bound, "m = {}", r[0]);
    }
}

#[test]
fn csv_floats_carry_seventeen_digits() {
    let o = run(&["figures", "em-check", "--m-range", "9:9"]);
    let (_, rows) = csv_rows(&o);
    let mantissa = rows[0][1].split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17);
}

#[test]
fn pos_table_stays_between_one_and_two() {
    let o = run(&["experiment", "pos-table", "--m-range", "5:100", "--sigma", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = csv_rows(&o);
    assert_eq!(header, ["m", "alpha", "pos"]);
    assert_eq!(rows.len(), 96);
    for r in rows {
        let pos: f64 = r[2].parse().unwrap();
        assert!(pos > 1.0 && pos < 2.0);
    }
}

#[test]
fn mc_matches_closed_form() {
    let o = run(&["experiment", "mc-vs-closed-form", "--agents", "9", "--replications", "1000000", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("PASS"));
}

#[test]
fn size_check_fabrication_is_reported_profitable() {
    let o = run(&[
        "experiment",
        "nash-sweep",
        "--mechanism",
        "size-check",
        "--unrestricted",
        "--replications",
        "20000",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v["rows"].as_array().unwrap();
    let fabricate = rows.iter().find(|r| r[0].as_str().unwrap().contains("fabricate")).unwrap();
    assert_eq!(fabricate[6], Value::Bool(true));
    assert!(v["summary"][0].as_str().unwrap().contains("expected"));
}

#[test]
fn seed_determines_output() {
    let args = ["experiment", "ir-check", "--replications", "5000", "--seed", "3", "--mu-grid", "0,-5"];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, run(&args).stdout);
    let other = run(&["experiment", "ir-check", "--replications", "5000", "--seed", "4", "--mu-grid", "0,-5"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn out_flag_writes_file() {
    let dir = std::env::temp_dir().join(format!("collabmech-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("g.csv");
    let o = run(&["figures", "g-check", "--m-range", "5:9", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 6);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn small_market_participation_is_rational() {
    let o = run(&["experiment", "ir-check", "--agents", "4", "--replications", "20000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("n*=2"));
}
