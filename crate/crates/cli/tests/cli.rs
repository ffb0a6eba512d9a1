use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn omnisync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omnisync"))
        .args(args)
        .env_remove("OMNISYNC_SEED")
        .output()
        .expect("binary runs")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn pattern_rows(csv: &str, side: &str) -> Vec<(f64, usize, f64)> {
    csv.lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2] == side).then(|| (f[0].parse().unwrap(), f[1].parse().unwrap(), f[3].parse().unwrap()))
        })
        .collect()
}

#[test]
fn omni_codebooks_round_trip_through_verify() {
    let dir = TempDir::new().unwrap();
    let file = path(&dir, "cb.json");
    for flags in [
        ["--mt", "64", "--nt", "2", "--mr", "16", "--nr", "2", "--k", "1"],
        ["--mt", "16", "--nt", "4", "--mr", "8", "--nr", "2", "--k", "4"],
        ["--mt", "64", "--nt", "4", "--mr", "16", "--nr", "2", "--k", "8"],
        ["--mt", "2", "--nt", "2", "--mr", "2", "--nr", "2", "--k", "1"],
    ] {
        let mut args = vec!["codebook", "--out", &file];
        args.extend(flags);
        let out = omnisync(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("verify pass"));
        let v = omnisync(&["verify", "--in", &file]);
        assert_eq!(
            v.status.code(),
            Some(0),
            "{flags:?}\n{}",
            String::from_utf8_lossy(&v.stdout)
        );
    }
}

#[test]
fn other_designs_fail_flatness() {
    let dir = TempDir::new().unwrap();
    let file = path(&dir, "cb.json");
    for design in ["random-phase", "quasi-omni-zc"] {
        assert!(
            omnisync(&["codebook", "--design", design, "--mt", "16", "--k", "2", "--out", &file])
                .status
                .success()
        );
        let v = omnisync(&["verify", "--in", &file]);
        assert_eq!(v.status.code(), Some(1));
        let report = String::from_utf8_lossy(&v.stdout).into_owned();
        let line = |name: &str| report.lines().find(|l| l.starts_with(name)).unwrap().to_string();
        assert!(line("constant-modulus").ends_with("pass"));
        assert!(line("flatness-tx").ends_with("FAIL"));
    }
}

#[test]
fn invalid_dimensions_exit_nonzero_without_output() {
    let dir = TempDir::new().unwrap();
    let file = path(&dir, "cb.json");
    let out = omnisync(&["codebook", "--nt", "3", "--out", &file]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("N = 3"));
    assert!(!Path::new(&file).exists());

    assert!(
        !omnisync(&["codebook", "--design", "dft-sweep", "--mr", "4", "--out", &file])
            .status
            .success()
    );
    assert!(!omnisync(&["codebook", "--bogus", "1", "--out", &file]).status.success());
    assert!(!Path::new(&file).exists());

    fs::write(&file, "{not json").unwrap();
    assert_eq!(omnisync(&["verify", "--in", &file]).status.code(), Some(2));
    let csv = path(&dir, "p.csv");
    assert!(!omnisync(&["pattern", "--in", &file, "--out", &csv]).status.success());
    assert!(!Path::new(&csv).exists());
}

#[test]
fn dft_sweep_has_one_column_per_slot() {
    let dir = TempDir::new().unwrap();
    let file = path(&dir, "cb.json");
    assert!(omnisync(&[
        "codebook",
        "--design",
        "dft-sweep",
        "--k",
        "64",
        "--mt",
        "64",
        "--out",
        &file
    ])
    .status
    .success());
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&file).unwrap()).unwrap();
    let w = doc["w"].as_array().unwrap();
    assert_eq!(w.len(), 64);
    assert!(w
        .iter()
        .all(|m| m.as_array().unwrap().len() == 64 && m[0].as_array().unwrap().len() == 1));
}

#[test]
fn pattern_export_of_the_two_four_antenna_designs() {
    let dir = TempDir::new().unwrap();
    let cb = path(&dir, "cb.json");
    let csv = path(&dir, "p.csv");

    assert!(
        omnisync(&["codebook", "--design", "basis", "--mt", "4", "--k", "4", "--out", &cb])
            .status
            .success()
    );
    assert!(omnisync(&["pattern", "--in", &cb, "--grid", "64", "--out", &csv])
        .status
        .success());
    let rows = pattern_rows(&fs::read_to_string(&csv).unwrap(), "tx");
    assert_eq!(rows.len(), 4 * 64);
    assert!(rows.iter().all(|r| (r.2 - 1.0).abs() < 1e-9));

    assert!(omnisync(&[
        "codebook",
        "--design",
        "dft-sweep",
        "--mt",
        "4",
        "--k",
        "4",
        "--out",
        &cb
    ])
    .status
    .success());
    assert!(omnisync(&["pattern", "--in", &cb, "--grid", "64", "--out", &csv])
        .status
        .success());
    let rows = pattern_rows(&fs::read_to_string(&csv).unwrap(), "tx");
    for slot in 1..=4 {
        let (theta, _, peak) =
            rows.iter()
                .filter(|r| r.1 == slot)
                .fold((0.0, 0, 0.0), |best, r| if r.2 > best.2 { *r } else { best });
        assert!((peak - 4.0).abs() < 1e-9);
        assert!((theta - (slot % 4) as f64 / 4.0).abs() < 1e-12);
    }
    for g in 0..64 {
        let sum: f64 = rows.iter().filter(|r| r.0 == g as f64 / 64.0).map(|r| r.2).sum();
        assert!((sum - 4.0).abs() < 1e-9);
    }

    assert!(omnisync(&["codebook", "--mt", "64", "--out", &cb]).status.success());
    assert!(omnisync(&["pattern", "--in", &cb, "--out", &csv]).status.success());
    let rows = pattern_rows(&fs::read_to_string(&csv).unwrap(), "tx");
    assert_eq!(rows.len(), 512);
    assert!(rows.iter().all(|r| (r.2 - 2.0).abs() < 1e-9));
}

#[test]
fn threshold_is_machine_readable() {
    let out = omnisync(&[
        "threshold",
        "--pfa",
        "1e-2",
        "--k",
        "1",
        "--l",
        "64",
        "--nr",
        "2",
        "--nt",
        "2",
    ]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let gamma = doc["gamma"].as_f64().unwrap();
    assert!(gamma > 0.0 && gamma < 1.0);
    assert!((doc["p_fa_at_gamma"].as_f64().unwrap() / 1e-2 - 1.0).abs() < 1e-9);
    assert!(!omnisync(&["threshold", "--pfa", "0"]).status.success());
}

#[test]
fn analytic_emits_fixed_header() {
    let out = omnisync(&["analytic", "--preset", "desk", "--quantity", "fa"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("quantity,k,l,nr,nt,gamma,noise_var,value,log_value"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..5], ["fa", "1", "64", "2", "2"]);
    assert!((row[7].parse::<f64>().unwrap() - 1e-2).abs() < 1e-12);

    let out = omnisync(&[
        "analytic",
        "--preset",
        "desk",
        "--quantity",
        "md-asym",
        "--approach",
        "omni-golay",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let values: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(7).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 7);
    assert!(values.windows(2).all(|w| w[1] < w[0]));

    assert_eq!(
        omnisync(&["analytic", "--preset", "desk", "--quantity", "pd"])
            .status
            .code(),
        Some(2)
    );
}

fn small_config(dir: &TempDir) -> String {
    let mut cfg: serde_json::Value =
        serde_json::from_str(&omnisync::montecarlo::ExperimentConfig::desk().to_json()).unwrap();
    cfg["drops"] = 12.into();
    cfg["frames_per_drop"] = 200.into();
    cfg["snr_db"] = serde_json::json!([0.0, 10.0]);
    cfg["channel"]["paths"] = 2.into();
    let file = path(dir, "cfg.json");
    fs::write(&file, cfg.to_string()).unwrap();
    file
}

#[test]
fn simulate_output_does_not_depend_on_workers() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir);
    let mut outputs = Vec::new();
    for w in ["1", "8"] {
        let csv = path(&dir, &format!("out{w}.csv"));
        let out = omnisync(&["simulate", "--config", &cfg, "--out", &csv, "--workers", w]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read(&csv).unwrap());
        assert!(Path::new(&format!("{csv}.manifest.json")).exists());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(
        outputs[0].split(|&b| b == b'\n').filter(|l| !l.is_empty()).count(),
        1 + 3 * 2
    );
}

#[test]
fn seed_override_comes_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir);
    let csv = path(&dir, "out.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_omnisync"))
        .args(["simulate", "--config", &cfg, "--out", &csv])
        .env("OMNISYNC_SEED", "77")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",77")));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(format!("{csv}.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed_source"], "OMNISYNC_SEED");
    assert_eq!(manifest["config"]["master_seed"], 77);
}

#[test]
fn sec6_preset_is_accepted_and_echoed() {
    let dir = TempDir::new().unwrap();
    let csv = path(&dir, "sec6.csv");
    let manifest = path(&dir, "sec6.json");
    let out = omnisync(&[
        "simulate",
        "--preset",
        "paper-sec6",
        "--out",
        &csv,
        "--manifest",
        &manifest,
        "--dry-run",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!Path::new(&csv).exists());
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(doc["config"]["drops"], 500);
    assert_eq!(doc["config"]["frames_per_drop"], 10_000);
    assert_eq!(doc["config"]["p_fa_target"], 1e-4);
    assert_eq!(doc["config"]["schema"], 1);
}

#[test]
fn schema_violations_are_listed_by_path() {
    let dir = TempDir::new().unwrap();
    let mut cfg: serde_json::Value =
        serde_json::from_str(&omnisync::montecarlo::ExperimentConfig::desk().to_json()).unwrap();
    cfg["nt"] = 3.into();
    cfg["p_fa_target"] = 1.5.into();
    let file = path(&dir, "bad.json");
    fs::write(&file, cfg.to_string()).unwrap();
    let csv = path(&dir, "out.csv");
    let out = omnisync(&["simulate", "--config", &file, "--out", &csv]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("$.nt") && err.contains("$.p_fa_target"), "{err}");
    assert!(!Path::new(&csv).exists());
    assert!(!omnisync(&["simulate", "--out", &csv]).status.success());
}
