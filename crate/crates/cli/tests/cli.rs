use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sta_core::imaging::{synthesize_profile, GridSpec, Noise};
use sta_core::scenario::{preset, DriveConfig};
use tempfile::TempDir;

fn sta(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sta"))
        .current_dir(dir)
        .env_remove("STA_OUTPUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn presets_are_listed() {
    let tmp = TempDir::new().unwrap();
    let out = sta(tmp.path(), &["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.contains("sec4-tof"));
}

#[test]
fn run_preset_writes_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = sta(
        tmp.path(),
        &[
            "--out-dir",
            "out",
            "run",
            "--preset",
            "sec3-isotropic",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = json(&out);
    let q = summary["stroke_end"]["q_star"].as_f64().unwrap();
    assert!((q - 1.0).abs() < 1e-3);
    let dir = tmp.path().join("out/sec3-isotropic");
    for f in ["trajectory.csv", "drive.csv", "summary.json"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let traj = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("# sta trajectory\n# config: {"));
}

#[test]
fn output_dir_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sta"))
        .current_dir(tmp.path())
        .env("STA_OUTPUT_DIR", "from-env")
        .args(["design", "--preset", "sec4-anisotropic"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp
        .path()
        .join("from-env/sec4-anisotropic-lowT/drive.csv")
        .is_file());
    assert_eq!(json(&out)["feasible"], true);
}

#[test]
fn missing_file_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    let out = sta(tmp.path(), &["run", "nope.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_arguments_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(sta(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(sta(tmp.path(), &["run"]).status.code(), Some(1));
    assert_eq!(sta(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_scenario_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    let mut sc = preset("sec3-isotropic").unwrap();
    sc.tau_s = -1e-3;
    fs::write(tmp.path().join("bad.json"), sc.to_json()).unwrap();
    let out = sta(tmp.path(), &["run", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stroke duration"), "{err}");
}

#[test]
fn sweep_without_sweep_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    let out = sta(tmp.path(), &["sweep", "--preset", "sec3-isotropic"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn collapse_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let table = "t_s,omega_sq_x_hz2,omega_sq_y_hz2,omega_sq_z_hz2\n\
                 0,1e14,1e14,1e14\n\
                 1e-6,1e14,1e14,1e14\n";
    fs::write(tmp.path().join("squeeze.csv"), table).unwrap();
    let scenario = r#"{
        "name": "squeeze",
        "regime": "non-interacting",
        "initial_frequency_hz": [1, 1, 1],
        "target_b": 1.0,
        "tau_s": 1e-6,
        "gas": { "initial_energy_ef": 1.0 },
        "drive": { "kind": "table", "path": "squeeze.csv" }
    }"#;
    fs::write(tmp.path().join("squeeze.json"), scenario).unwrap();
    let out = sta(tmp.path(), &["run", "squeeze.json"]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn designed_drive_replays_as_a_table() {
    let tmp = TempDir::new().unwrap();
    let out = sta(
        tmp.path(),
        &["--out-dir", "o", "design", "--preset", "sec3-isotropic"],
    );
    assert!(out.status.success());

    let mut sc = preset("sec3-isotropic").unwrap();
    sc.name = "replay".into();
    sc.drive = DriveConfig::Table {
        path: "o/sec3-isotropic/drive.csv".into(),
    };
    fs::write(tmp.path().join("replay.json"), sc.to_json()).unwrap();
    let out = sta(tmp.path(), &["--out-dir", "o", "run", "replay.json"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = json(&out);
    assert_eq!(summary["drive"], "table");
    for axis in ["x", "y", "z"] {
        let b = summary["stroke_end"]["b"][axis].as_f64().unwrap();
        assert!((b - 1.5).abs() < 1e-3, "b_{axis} = {b}");
    }
}

#[test]
fn sweep_writes_a_monotone_table() {
    let tmp = TempDir::new().unwrap();
    let out = sta(
        tmp.path(),
        &[
            "--out-dir",
            "o",
            "sweep",
            "--preset",
            "sec4-tof",
            "--jobs",
            "2",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let table = fs::read_to_string(tmp.path().join("o/sec4-tof/sweep.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(table.as_bytes());
    let col = rdr
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "aspect_ratio_end")
        .unwrap();
    let ratios: Vec<f64> = rdr
        .records()
        .map(|r| r.unwrap()[col].parse().unwrap())
        .collect();
    assert_eq!(ratios.len(), 4);
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn empty_batch_succeeds_with_empty_index() {
    let tmp = TempDir::new().unwrap();
    let out = sta(tmp.path(), &["--out-dir", "o", "batch"]);
    assert_eq!(out.status.code(), Some(0));
    let index: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/index.json")).unwrap())
            .unwrap();
    assert_eq!(index["scenarios"].as_array().unwrap().len(), 0);
}

#[test]
fn batch_continues_past_a_failure() {
    let tmp = TempDir::new().unwrap();
    let mut bad = preset("sec3-isotropic").unwrap();
    bad.name = "bad".into();
    bad.initial_frequency_hz[0] = -1.0;
    fs::write(tmp.path().join("bad.json"), bad.to_json()).unwrap();
    let out = sta(
        tmp.path(),
        &["--out-dir", "o", "batch", "--presets", "bad.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    let index = json(&out);
    let entries = index["scenarios"].as_array().unwrap();
    assert_eq!(entries.len(), 5);
    assert_eq!(entries.iter().filter(|e| e["status"] == "ok").count(), 4);
    assert_eq!(entries[4]["status"], "failed");
    assert_eq!(entries[4]["validation_error"], true);
}

#[test]
fn fit_recovers_sigma_and_in_trap_size() {
    let tmp = TempDir::new().unwrap();
    let grid = GridSpec {
        half_width: 6.0,
        points: 301,
    };
    let profile = synthesize_profile(1.25, 0.1, 2.0, grid, Noise::None, 0).unwrap();
    let mut buf = Vec::new();
    profile.write_csv(&mut buf).unwrap();
    fs::write(tmp.path().join("p.csv"), buf).unwrap();

    let out = sta(tmp.path(), &["fit", "p.csv"]);
    assert!(out.status.success());
    let v = json(&out);
    assert!((v["fit"]["sigma"].as_f64().unwrap() - 1.25).abs() < 1e-8);
    assert!(v["in_trap_sigma"].is_null());

    let out = sta(
        tmp.path(),
        &[
            "fit", "p.csv", "--tof", "5e-4", "--trap", "sec4-tof", "--axis", "z",
        ],
    );
    assert!(out.status.success());
    let in_trap = json(&out)["in_trap_sigma"].as_f64().unwrap();
    assert!(in_trap < 1.25 && in_trap > 1.0, "{in_trap}");
}

#[test]
fn bad_profile_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("p.csv"), "x,value\n0,1\n1,oops\n").unwrap();
    assert_eq!(sta(tmp.path(), &["fit", "p.csv"]).status.code(), Some(1));
}
