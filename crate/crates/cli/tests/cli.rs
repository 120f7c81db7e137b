use std::fs;
use std::path::Path;
use std::process::{Command as Process, Output};

use dualtherm::io::read_records_csv;
use dualtherm_cli::{parse_args, parse_exit_code, Command, OutputFormat};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Process::new(env!("CARGO_BIN_EXE_dualtherm"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn scenario_command_parses_seed_override() {
    let cmd = parse_args([
        "dualtherm",
        "scenario",
        "--config",
        "ramp.json",
        "--seed",
        "7",
        "--out",
        "run.csv",
    ])
    .unwrap();
    assert_eq!(cmd.command, Command::Scenario);
    assert_eq!(cmd.seed, Some(7));
    assert_eq!(cmd.config.as_deref(), Some(Path::new("ramp.json")));
    assert_eq!(cmd.out.as_deref(), Some(Path::new("run.csv")));
    assert_eq!(cmd.format, OutputFormat::Csv);
}

#[test]
fn bad_format_and_missing_subcommand_are_usage_errors() {
    for argv in [
        vec!["dualtherm", "scenario", "--format", "xml"],
        vec!["dualtherm"],
        vec!["dualtherm", "scenario", "--bogus"],
    ] {
        let e = parse_args(argv.clone()).unwrap_err();
        assert_eq!(parse_exit_code(&e), 2, "{argv:?}");
    }
    assert_eq!(
        parse_exit_code(&parse_args(["dualtherm", "--help"]).unwrap_err()),
        0
    );
}

#[test]
fn exit_codes_from_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("bad_key.json"),
        r#"{"kind": "ramp", "pl": {"exposure_sec": 1.0}}"#,
    )
    .unwrap();
    fs::write(
        d.join("bad_value.json"),
        r#"{"kind": "ramp", "pl": {"exposure_s": -1.0}}"#,
    )
    .unwrap();
    fs::write(
        d.join("ramp.json"),
        r#"{"kind": "ramp", "ramp": {"steps": 3}}"#,
    )
    .unwrap();

    assert_eq!(bin(&[], d).status.code(), Some(2));
    assert_eq!(
        bin(&["scenario", "--format", "xml"], d).status.code(),
        Some(2)
    );
    assert_eq!(
        bin(&["scenario"], d).status.code(),
        Some(2),
        "scenario needs --config"
    );

    let o = bin(&["scenario", "--config", "bad_key.json"], d);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).contains("did you mean `exposure_s`"),
        "{}",
        stderr(&o)
    );

    let o = bin(&["scenario", "--config", "bad_value.json"], d);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("pl.exposure_s"), "{}", stderr(&o));

    assert_eq!(
        bin(&["scenario", "--config", "missing.json"], d)
            .status
            .code(),
        Some(4)
    );
    let o = bin(
        &[
            "scenario",
            "--config",
            "ramp.json",
            "--out",
            "no/such/dir/run.csv",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(4));

    let help = String::from_utf8_lossy(&bin(&["--help"], d).stdout).into_owned();
    assert!(help.contains("Exit codes") && help.contains("3  configuration error"));
}

#[test]
fn scenario_output_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("ramp.json"),
        r#"{"kind": "ramp", "ramp": {"steps": 4}}"#,
    )
    .unwrap();
    for (out, seed) in [("a.csv", "7"), ("b.csv", "7"), ("c.csv", "8")] {
        assert!(bin(
            &[
                "scenario",
                "--config",
                "ramp.json",
                "--seed",
                seed,
                "--out",
                out
            ],
            d
        )
        .status
        .success());
    }
    let read = |f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
    let records = read_records_csv(&read("a.csv")[..]).unwrap();
    assert_eq!(records.len(), 4);

    assert!(bin(
        &[
            "scenario",
            "--config",
            "ramp.json",
            "--format",
            "json",
            "--out",
            "a.json"
        ],
        d
    )
    .status
    .success());
    let json: serde_json::Value = serde_json::from_slice(&read("a.json")).unwrap();
    let rows = json.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let keys: Vec<&String> = rows[0].as_object().unwrap().keys().collect();
    assert_eq!(keys[0], "time_s");
    assert!(rows
        .iter()
        .all(|r| r.as_object().unwrap().keys().eq(keys.iter().copied())));
}

#[test]
fn simulate_fit_and_crossval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(bin(
        &["simulate", "--temperature-c", "40", "--out", "odmr.csv"],
        d
    )
    .status
    .success());
    let o = bin(&["fit", "--input", "odmr.csv"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let t: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("temperature_C,"))
        .and_then(|rest| rest.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((t - 40.0).abs() < 1.0, "{text}");

    assert!(bin(&["simulate", "--channel", "pl", "--out", "pl.csv"], d)
        .status
        .success());
    assert!(bin(&["fit", "--input", "pl.csv", "--window", "722,752"], d)
        .status
        .success());
    assert_eq!(
        bin(&["fit", "--input", "pl.csv", "--window", "722"], d)
            .status
            .code(),
        Some(2)
    );

    fs::write(
        d.join("ramp.json"),
        r#"{"kind": "ramp", "ramp": {"steps": 12}}"#,
    )
    .unwrap();
    assert!(bin(
        &["scenario", "--config", "ramp.json", "--out", "run.csv"],
        d
    )
    .status
    .success());
    let o = bin(&["crossval", "--input", "run.csv"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("window_start_s,"));
    assert!(stderr(&o).contains("channel regression"));
}

#[test]
fn sensitivity_prints_the_formula() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(
        &[
            "sensitivity",
            "--contrast",
            "0.12",
            "--fwhm-mhz",
            "12",
            "--rate-cps",
            "1e7",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    let eta: f64 = out.lines().nth(1).unwrap().parse().unwrap();
    assert!((eta - 0.428551).abs() < 1e-6, "{out}");
}
