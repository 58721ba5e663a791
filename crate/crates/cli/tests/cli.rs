use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SUBCOMMANDS: [&str; 7] = ["simulate", "budget", "fit-s21", "fit-tls", "stats", "synth", "reproduce-tables"];

fn cpwloss(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpwloss"))
        .current_dir(dir)
        .args(args)
        .env_remove("CPWLOSS_CONFIG")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON report")
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for sub in SUBCOMMANDS {
        let out = cpwloss(dir.path(), &[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("Usage: cpwloss"), "{sub}: {text}");
        for global in ["--config", "--format", "--output", "--jobs", "--verbose"] {
            assert!(text.contains(global), "{sub} help lacks {global}");
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = cpwloss(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(cpwloss(dir.path(), &["budget", "--participation", "sa=1"]).status.code(), Some(1));
    assert_eq!(cpwloss(dir.path(), &["simulate", "--set", "gap=-1 um"]).status.code(), Some(1));
    assert_eq!(cpwloss(dir.path(), &["simulate", "--deposition", "600C"]).status.code(), Some(1));
    assert_eq!(cpwloss(dir.path(), &["fit-tls", "missing.csv"]).status.code(), Some(1));
    assert_eq!(cpwloss(dir.path(), &["synth"]).status.code(), Some(1));
}

#[test]
fn flat_trace_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let synth = cpwloss(dir.path(), &["synth", "--s21", "fr=5e9,ql=1e5,qc=1e14", "-o", "flat.csv"]);
    assert!(synth.status.success());
    let out = cpwloss(dir.path(), &["fit-s21", "flat.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flat.csv"));
}

#[test]
fn synthetic_sweeps_round_trip_through_fit_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let params = [("a.csv", "7"), ("c.csv", "8"), ("b.csv", "9")];
    for (name, seed) in params {
        let out = cpwloss(
            dir.path(),
            &[
                "synth", "--tls", "F=1e-6,nc=10,b=0.4,other=5e-8", "--seed", seed, "--noise", "0.01",
                "--chip", "450C-hf-B", "-o", name,
            ],
        );
        assert!(out.status.success());
    }
    let fits = cpwloss(dir.path(), &["fit-tls", "c.csv", "a.csv", "b.csv", "--format", "json", "-o", "fits.json"]);
    assert!(fits.status.success(), "{}", String::from_utf8_lossy(&fits.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fits.json")).unwrap()).unwrap();
    let records = report["results"].as_array().unwrap();
    let paths: Vec<&str> = records.iter().map(|r| r["path"].as_str().unwrap()).collect();
    assert_eq!(paths, ["a.csv", "b.csv", "c.csv"]);
    for r in records {
        let f = r["f_tan_delta0"].as_f64().unwrap();
        assert!((f / 1e-6 - 1.0).abs() < 0.05, "{f}");
        assert_eq!(r["resonator"], r["path"].as_str().unwrap().trim_end_matches(".csv"));
    }
    let stats = json(&cpwloss(
        dir.path(),
        &["stats", "fits.json", "--compare", "tabulated", "--csv", "box.csv", "--format", "json"],
    ));
    let chip = &stats["results"][0];
    assert_eq!(chip["summary"]["label"]["holder"], "B");
    assert_eq!(chip["summary"]["records"].as_array().unwrap().len(), 3);
    assert_eq!(chip["comparison"]["underestimated"], true);
    let csv = fs::read_to_string(dir.path().join("box.csv")).unwrap();
    assert!(csv.starts_with("chip,quantity,count,whisker_low,q1,median,mean,q3,whisker_high,outliers"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn s21_trace_round_trip_with_photon_number() {
    let dir = tempfile::tempdir().unwrap();
    let out = cpwloss(
        dir.path(),
        &[
            "synth", "--s21", "fr=5e9,qi=1e6,qc=2e5,phi=0.1,a=0.5,alpha=1,tau=5e-8", "--snr", "60",
            "--power-dbm", "-120", "-o", "t.csv",
        ],
    );
    assert!(out.status.success());
    let report = json(&cpwloss(dir.path(), &["fit-s21", "t.csv", "--format", "json"]));
    let r = &report["results"][0];
    assert!((r["q_i"].as_f64().unwrap() / 1e6 - 1.0).abs() < 0.02);
    assert!((r["f_r"].as_f64().unwrap() / 5e9 - 1.0).abs() < 1e-7);
    assert!(r["n_photon"].as_f64().unwrap() > 0.0);
    assert_eq!(r["power_dbm"].as_f64(), Some(-120.0));
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = cpwloss(dir.path(), &["synth", "--tls", "F=1e-6,nc=10,b=0.4", "--seed", seed, "--noise", "0.03"]);
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
    let a = cpwloss(dir.path(), &["simulate", "--level", "1", "--format", "json"]);
    let b = cpwloss(dir.path(), &["simulate", "--level", "1", "--format", "json"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8_lossy(&a.stdout);
    assert!(text.contains("\"total_f_tan_delta\": 9."), "{text}");
    assert!(text.contains("e-7"));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "format = \"json\"\nlevel = 1\ndeposition = \"500C\"\n[stack]\ngap = \"6 um\"\n",
    )
    .unwrap();
    let from_file = json(&cpwloss(dir.path(), &["--config", "run.toml", "simulate"]));
    assert_eq!(from_file["config"]["level"], 1);
    assert_eq!(from_file["config"]["deposition"], "500C");
    assert_eq!(from_file["config"]["stack"]["gap"], "6e-6 m");

    let overridden = json(&cpwloss(
        dir.path(),
        &["--config", "run.toml", "simulate", "--deposition", "400C", "--set", "gap=7 um"],
    ));
    assert_eq!(overridden["config"]["deposition"], "400C");
    assert_eq!(overridden["config"]["stack"]["gap"], "7e-6 m");

    let via_env = Command::new(env!("CARGO_BIN_EXE_cpwloss"))
        .current_dir(dir.path())
        .args(["simulate"])
        .env("CPWLOSS_CONFIG", "run.toml")
        .output()
        .unwrap();
    assert_eq!(json(&via_env)["config"]["deposition"], "500C");

    fs::write(dir.path().join("bad.toml"), "levle = 2\n").unwrap();
    assert_eq!(cpwloss(dir.path(), &["--config", "bad.toml", "budget", "--table", "all"]).status.code(), Some(1));
}

#[test]
fn dump_fields_writes_potential_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = cpwloss(dir.path(), &["simulate", "--level", "1", "--dump-fields", "field.csv"]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("field.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,y,potential"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row.len(), 3);
    assert!(csv.lines().count() > 1000);
}

#[test]
fn budget_from_explicit_values_and_hf_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let report = json(&cpwloss(
        dir.path(),
        &[
            "budget", "--participation", "substrate=0.911,air=0.088,ma=1.87e-5,sa=3.7e-4", "--tan",
            "substrate=1.3e-7,ma=0.01,sa=1.7e-3", "--format", "json",
        ],
    ));
    let total = report["results"][0]["budget"]["total_f_tan_delta"].as_f64().unwrap();
    assert!((total / 9.34e-7 - 1.0).abs() < 0.01);
    let hf = json(&cpwloss(dir.path(), &["budget", "--table", "400C-ref", "--hf-scale", "0.818", "--format", "json"]));
    let total = hf["results"][0]["budget"]["total_f_tan_delta"].as_f64().unwrap();
    assert!((total / 2.72e-7 - 1.0).abs() < 0.01, "{total}");
}
