use std::process::{Command, Output};

use regulab::cli::{exit_code, EXIT_CONSISTENCY, EXIT_FIXTURE, EXIT_OK, EXIT_USAGE};
use regulab::Error;

fn regulab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regulab"))
        .args(args)
        .env_remove("REGULAB_THREADS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn analyze_map_prints_json() {
    let out = regulab(&["analyze-map", "--fixture", "builtin:identity-map", "--resolution", "16"]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["command"], "analyze-map");
    assert!(v.get("timing_seconds").map_or(true, |t| t.is_null()));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&regulab(&[])), EXIT_USAGE);
    assert_eq!(code(&regulab(&["no-such-command", "--fixture", "builtin:identity-map"])), EXIT_USAGE);
    assert_eq!(code(&regulab(&["analyze-map"])), EXIT_USAGE);
    let prop = regulab(&["analyze-map", "--fixture", "builtin:identity-map", "--property", "metric"]);
    assert_eq!(code(&prop), EXIT_USAGE);
    let csv = regulab(&["analyze-map", "--fixture", "builtin:identity-map", "--format", "csv-bundle"]);
    assert_eq!(code(&csv), EXIT_USAGE);
    let tol = regulab(&["analyze-map", "--fixture", "builtin:identity-map", "--tol", "-1"]);
    assert_eq!(code(&tol), EXIT_USAGE);
    let threads = regulab(&["analyze-map", "--fixture", "builtin:identity-map", "--threads", "0"]);
    assert_eq!(code(&threads), EXIT_USAGE);
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(code(&regulab(&["--help"])), EXIT_OK);
    assert_eq!(code(&regulab(&["--version"])), EXIT_OK);
}

#[test]
fn fixture_errors_exit_2() {
    let out = regulab(&["analyze-map", "--fixture", "builtin:nope"]);
    assert_eq!(code(&out), EXIT_FIXTURE);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown builtin"));
    assert_eq!(code(&regulab(&["analyze-map", "--fixture", "/nonexistent/f.json"])), EXIT_FIXTURE);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"name": "bad", "kind": "map_analysis", "dimension": 1, "expressions": ["x1 +"],
            "boxes": {"x": {"lo": [0], "hi": [1], "resolution": 3}}}"#,
    )
    .unwrap();
    let out = regulab(&["analyze-map", "--fixture", bad.to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_FIXTURE);
    assert!(String::from_utf8_lossy(&out.stderr).contains("expressions[0]"));

    // A loja pair has no map to analyze.
    let out = regulab(&["analyze-map", "--fixture", "builtin:pair-abs-square"]);
    assert_eq!(code(&out), EXIT_FIXTURE);
    let out = regulab(&["analyze-map", "--fixture", "builtin:identity-map", "--box", "nope"]);
    assert_eq!(code(&out), EXIT_FIXTURE);
}

#[test]
fn consistency_errors_map_to_3() {
    assert_eq!(exit_code(&Error::Consistency("x".into())), EXIT_CONSISTENCY);
}

#[test]
fn json_file_and_csv_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("sub/report.json");
    let out = regulab(&[
        "fit-loja",
        "--fixture",
        "builtin:pair-abs-square",
        "--out",
        json.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&json).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["command"], "fit-loja");

    let bundle = dir.path().join("bundle");
    let out = regulab(&[
        "fit-loja",
        "--fixture",
        "builtin:pair-abs-square",
        "--format",
        "csv-bundle",
        "--out",
        bundle.to_str().unwrap(),
        "--stdout",
    ]);
    assert_eq!(code(&out), EXIT_OK);
    assert_eq!(std::fs::read_to_string(bundle.join("fit.json")).unwrap().as_bytes(), &out.stdout[..]);
    let csvs: Vec<_> = std::fs::read_dir(&bundle)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    assert!(!csvs.is_empty());
}

#[test]
fn output_is_deterministic_across_threads() {
    let run = |t: &str| {
        let out = regulab(&["check-openness", "--fixture", "builtin:cubic-fold", "--threads", t]);
        assert_eq!(code(&out), EXIT_OK);
        out.stdout
    };
    let one = run("1");
    assert_eq!(one, run("4"));
    assert_eq!(one, run("1"));
}

#[test]
fn threads_env_overrides_flag() {
    let out = Command::new(env!("CARGO_BIN_EXE_regulab"))
        .args(["analyze-map", "--fixture", "builtin:identity-map", "--threads", "2"])
        .env("REGULAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), EXIT_USAGE);
}

#[test]
fn timing_is_opt_in() {
    let out = regulab(&["fit-loja", "--fixture", "builtin:pair-abs-square", "--timing"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["timing_seconds"].as_f64().is_some());
}
