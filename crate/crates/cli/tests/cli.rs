use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reach-synth"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn grid_synth_check_simulate_render() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = bin(&["synth", "--preset", "grid4x4", "--out-dir", "run"], d);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(stdout_json(&out)["verdict"], "sat");
    let log = std::fs::read_to_string(d.join("run/run.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);

    let out = bin(
        &[
            "check",
            "--preset",
            "grid4x4",
            "--certificate",
            "run/certificate.json",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["violations"].as_array().unwrap().len(), 0);

    let sim = |seed: &str| {
        bin(
            &[
                "simulate",
                "--preset",
                "grid4x4",
                "--certificate",
                "run/certificate.json",
                "--runs",
                "500",
                "--seed",
                seed,
            ],
            d,
        )
    };
    let (a, b) = (sim("3"), sim("3"));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout_json(&a)["reached_goal"], 500);

    let out = bin(
        &[
            "render",
            "--preset",
            "grid4x4",
            "--certificate",
            "run/certificate.json",
            "--svg",
            "g.svg",
            "--csv",
            "g.csv",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(0));
    let svg = std::fs::read_to_string(d.join("g.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="grid x""#).count(), 5);
    assert_eq!(svg.matches(r#"class="grid y""#).count(), 5);

    // Rank and input columns repeat the certificate's per-control-cell values.
    let cert: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/certificate.json")).unwrap())
            .unwrap();
    let csv = std::fs::read_to_string(d.join("g.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let c: usize = f[1].parse().unwrap();
        assert_eq!(f[5], cert["ranks"][c].to_string());
        assert_eq!(f[6], cert["controller"][c].to_string());
        let (must, may) = (f[3], f[4]);
        assert!(must == "0" || may == "1", "{line}");
    }
}

#[test]
fn corrupted_certificates_fail() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = bin(&["synth", "--preset", "conveyor", "--out-dir", "run"], d);
    assert_eq!(out.status.code(), Some(0));
    let path = d.join("run/certificate.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut cert: Value = serde_json::from_str(&text).unwrap();

    // The goal is the last control cell; a nonzero rank there breaks R4.
    let last = cert["ranks"].as_array().unwrap().len() - 1;
    cert["ranks"][last] = Value::from(1);
    std::fs::write(d.join("bad_rank.json"), cert.to_string()).unwrap();
    let out = bin(
        &[
            "check",
            "--preset",
            "conveyor",
            "--certificate",
            "bad_rank.json",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"R4\""));

    let mut cert: Value = serde_json::from_str(&text).unwrap();
    cert["partition_hash"] = Value::from("00");
    std::fs::write(d.join("bad_hash.json"), cert.to_string()).unwrap();
    let out = bin(
        &[
            "check",
            "--preset",
            "conveyor",
            "--certificate",
            "bad_hash.json",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("partition_hash"));
}

#[test]
fn unsat_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = bin(
        &["synth", "--preset", "grid4x4-walled", "--out-dir", "w"],
        d,
    );
    assert_eq!(out.status.code(), Some(10));
    let v = stdout_json(&out);
    assert_eq!(v["verdict"], "unsat");
    assert_eq!(v["encoding_hash"].as_str().unwrap().len(), 64);

    std::fs::write(d.join("bad.json"), "{\"format\": ").unwrap();
    assert_eq!(bin(&["synth", "bad.json"], d).status.code(), Some(1));

    // A goal box that cuts a control cell in half names the field.
    let out = bin(&["export", "grid4x4"], d);
    let mut p: Value = serde_json::from_slice(&out.stdout).unwrap();
    p["goal"][0]["lo"][0] = Value::from("7/2");
    std::fs::write(d.join("straddle.json"), p.to_string()).unwrap();
    let out = bin(&["synth", "straddle.json"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("field"));
}

#[test]
fn budget_exhaustion_is_unknown() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = bin(&["export", "conveyor"], d);
    let mut p: Value = serde_json::from_slice(&out.stdout).unwrap();
    // With steps of 3/5 part of every control cell maps back into itself, so
    // no rank decreases at k = 1 while the weak encoding stays satisfiable.
    for u in p["system"]["inputs"].as_array_mut().unwrap() {
        let neg = u[0].as_str().unwrap().starts_with('-');
        u[0] = Value::from(if neg { "-3/5" } else { "3/5" });
    }
    p["system"]["input_box"] = serde_json::json!({"lo": ["-3/5"], "hi": ["3/5"]});
    std::fs::write(d.join("c.json"), p.to_string()).unwrap();
    let out = bin(
        &["synth", "c.json", "--max-iters", "1", "--out-dir", "u"],
        d,
    );
    assert_eq!(out.status.code(), Some(20));
    let v = stdout_json(&out);
    assert_eq!(v["verdict"], "unknown");
    assert!(v["reason"].as_str().unwrap().contains("iteration budget"));
}

#[test]
fn encode_header() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = bin(
        &[
            "encode",
            "--preset",
            "grid4x4",
            "--variant",
            "weak",
            "--out",
            "w.smt2",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(d.join("w.smt2")).unwrap();
    assert!(text.contains("; variant weak\n"));
    let declared: usize = text
        .lines()
        .find_map(|l| l.strip_prefix("; assertions "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(declared, text.matches("(assert ").count());

    let out = bin(
        &["encode", "--preset", "blocks6x6", "--variant", "exact"],
        d,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("align"));
}
