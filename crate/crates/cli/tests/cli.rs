use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qrs_cli::{cmd_run, load_trace, RunArgs};
use qrs_core::metrics::finalize;
use qrs_core::netsim::Mode;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn qrs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrs"))
        .args(args)
        .env_remove("QRS_OUT")
        .output()
        .unwrap()
}

#[test]
fn run_writes_outputs_and_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("default.toml");
    let mut csvs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("run{i}"));
        let o = qrs(&["run", sc.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("summary.txt").exists());
        assert!(!out.join("trace.bin").exists());
        csvs.push(fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    assert!(text.starts_with("time_bucket_s,metric_name,stream_id,value,denominator_flag\n"));
    assert!(text.lines().any(|l| l.starts_with("total,efficiency,ALL,")));
}

#[test]
fn malformed_scenario_exits_2_naming_the_section() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[sim]\nhorizon_s = 5\n").unwrap();
    let o = qrs(&["run", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("[topology]"), "{err}");
    assert!(err.contains("line 1"), "{err}");
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("no_failure.toml"))
        .unwrap()
        .replace("horizon_s = 60", "horizon_s = 60\nhorizon = 5");
    let bad = dir.path().join("typo.toml");
    fs::write(&bad, &text).unwrap();
    let line = text.lines().position(|l| l == "horizon = 5").unwrap() + 1;
    let o = qrs(&["run", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&format!("line {line}: [sim] horizon:")), "{err}");
}

#[test]
fn io_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = qrs(&["run", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    // output directory blocked by a regular file
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let sc = scenario("no_failure.toml");
    let o = qrs(&["run", sc.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn qrs_out_overrides_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let env_out = dir.path().join("from_env");
    let flag_out = dir.path().join("from_flag");
    let sc = scenario("no_failure.toml");
    let o = Command::new(env!("CARGO_BIN_EXE_qrs"))
        .args(["run", sc.to_str().unwrap(), "--mode", "baseline", "--out", flag_out.to_str().unwrap()])
        .env("QRS_OUT", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_out.join("metrics.csv").exists());
    assert!(!flag_out.exists());
}

#[test]
fn compare_pairs_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("default.toml");
    let o = qrs(&["compare", sc.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let mut rdr = csv::Reader::from_path(dir.path().join("compare.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["metric", "baseline", "proposed", "delta"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let get = |name: &str| -> (f64, f64, f64) {
        let r = rows.iter().find(|r| &r[0] == name).unwrap();
        (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap())
    };
    let (b, p, d) = get("packets_lost");
    assert!(p < b);
    assert_eq!(d, p - b);
    let summary = fs::read_to_string(dir.path().join("compare_summary.txt")).unwrap();
    for key in ["packets_lost", "efficiency", "jitter_mean_s"] {
        assert!(summary.contains(key), "{summary}");
    }

    let quiet = tempfile::tempdir().unwrap();
    let o = qrs(&["compare", scenario("no_failure.toml").to_str().unwrap(), "--out", quiet.path().to_str().unwrap()]);
    assert!(o.status.success());
    let text = fs::read_to_string(quiet.path().join("compare.csv")).unwrap();
    assert!(text.lines().any(|l| l == "packets_lost,0.0,0.0,0.0"), "{text}");
}

#[test]
fn persisted_trace_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_run(&RunArgs {
        scenario: scenario("default.toml"),
        mode: Some(Mode::Proposed),
        seed: Some(2),
        out: dir.path().to_path_buf(),
        trace: true,
    })
    .unwrap();
    let trace = load_trace(&dir.path().join("trace.bin")).unwrap();
    let again = finalize(&trace);
    assert_eq!(again, report);
    assert_eq!(again.summary(), fs::read_to_string(dir.path().join("summary.txt")).unwrap());
}

#[test]
fn efficiency_gain_holds_across_seeds() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..10 {
        let cmp = qrs_cli::cmd_compare(&qrs_cli::CompareArgs {
            scenario: scenario("default.toml"),
            seed: Some(seed),
            out: dir.path().to_path_buf(),
        })
        .unwrap();
        let row = cmp.row("efficiency").unwrap();
        assert!(row.delta > 0.0, "seed {seed}: {row:?}");
        assert!(cmp.row("packets_lost").unwrap().delta < 0.0, "seed {seed}");
    }
}
