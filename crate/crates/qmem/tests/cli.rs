use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmem"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_writes_versioned_file_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = qmem(&[
        "--scenario",
        "reproduce-paper",
        "--out",
        out,
        "--seed",
        "5",
        "simulate",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "report.json",
        "records_pre_storage.csv",
        "records_post_storage.csv",
        "rho_pre_storage_mle_real.csv",
        "rho_pre_storage_mle_imag.csv",
        "rho_post_storage_linear_real.csv",
        "rho_post_storage_mle.json",
        "g2_pre_storage.csv",
        "fringe_post_storage.csv",
        "eit_spectrum.csv",
        "efficiency.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["scenario"]["master_seed"], 5);
    assert_eq!(report["stages"][1]["stage"], "post_storage");
    for f in ["g2_pre_storage.csv", "eit_spectrum.csv", "efficiency.csv"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.starts_with("schema_version,"), "{f}");
    }
    let rho: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("rho_post_storage_mle.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(rho["basis"], "HH,HV,VH,VV");

    let o = qmem(&["--out", out, "report"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[post_storage]"));
}

#[test]
fn tomo_and_chsh_run_on_simulated_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        code(&qmem(&[
            "--scenario",
            "noiseless",
            "--out",
            out,
            "simulate",
            "--stage",
            "pre"
        ])),
        0
    );
    let records = dir.path().join("records_pre_storage.csv");
    let records = records.to_str().unwrap();

    let o = qmem(&[
        "--out",
        out,
        "tomo",
        "--records",
        records,
        "--resamples",
        "100",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    let f: f64 = stdout.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(f > 0.998, "{stdout}");
    assert!(dir.path().join("rho_mle_real.csv").exists());

    let o = qmem(&["chsh", "--records", records, "--resamples", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    let s: f64 = stdout.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((s - 2.0 * 2f64.sqrt()).abs() < 0.02, "{stdout}");
}

#[test]
fn eit_and_analytic_chsh() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = qmem(&["--scenario", "reproduce-paper", "--out", out, "eit"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("20.000 MHz"));
    let text = fs::read_to_string(dir.path().join("eit_spectrum.csv")).unwrap();
    assert!(text.starts_with("schema_version,detuning_mhz,transmission"));

    let o = qmem(&["--scenario", "noiseless", "chsh"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("2.828427"));
}

#[test]
fn calibrate_reproduces_bundled_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = qmem(&["--out", out, "calibrate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cal: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("scenario.json")).unwrap())
            .unwrap();
    let bundled: serde_json::Value =
        serde_json::from_str(include_str!("../scenarios/reproduce-paper.json")).unwrap();
    for path in [
        "/eit/rabi_coupling",
        "/decay/tau_mem",
        "/source/pair_prob",
        "/source/p_white",
        "/mem_noise/background_flux",
        "/detectors/1/stray_light_rate",
    ] {
        let a = cal.pointer(path).unwrap().as_f64().unwrap();
        let b = bundled.pointer(path).unwrap().as_f64().unwrap();
        assert!(
            (a - b).abs() <= 1e-6 * b.abs().max(1e-12),
            "{path}: {a} vs {b}"
        );
    }
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let mut bad: serde_json::Value =
        serde_json::from_str(include_str!("../scenarios/noiseless.json")).unwrap();
    bad["timing"]["storage_time"] = serde_json::json!(5000.0);
    let p = write(dir.path(), "bad.json", &bad.to_string());
    let o = qmem(&["--scenario", &p, "--out", out, "simulate"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let p = write(
        dir.path(),
        "typo.json",
        &include_str!("../scenarios/noiseless.json").replacen("\"name\"", "\"nmae\"", 1),
    );
    assert_eq!(code(&qmem(&["--scenario", &p, "simulate"])), 2);

    let t = write(dir.path(), "targets.json", r#"{"eta_storage": 1.5}"#);
    let o = qmem(&["--out", out, "calibrate", "--targets", &t]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("tau_mem"));

    let header = "setting_label,singles_1,singles_2,coincidences,triples,acquisition_s,seed\n";
    let rows: String = [
        "HH", "HV", "HD", "HR", "VH", "VV", "VD", "VR", "DH", "DV", "DD", "DR", "RH", "RV", "RD",
        "RR",
    ]
    .iter()
    .map(|l| format!("{l},10,10,0,0,1.0,0\n"))
    .collect();
    let r = write(dir.path(), "empty.csv", &format!("{header}{rows}"));
    assert_eq!(code(&qmem(&["--out", out, "tomo", "--records", &r])), 4);

    let o = qmem(&["tomo", "--records", "/nonexistent/records.csv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/nonexistent/records.csv"));

    let report = write(dir.path(), "report.json", "{}");
    assert_eq!(code(&qmem(&["report", "--input", &report])), 2);
}
