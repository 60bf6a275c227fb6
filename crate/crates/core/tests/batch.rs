use std::fs;

use sta_core::runner::{run_batch, run_scenario, run_sweep, RunOptions, Status, INDEX_FILE};
use sta_core::scenario::{preset, Scenario};
use tempfile::TempDir;

#[test]
fn empty_batch_writes_an_empty_index() {
    let tmp = TempDir::new().unwrap();
    let outcome = run_batch(&[], &RunOptions::new(tmp.path())).unwrap();
    assert!(outcome.index.scenarios.is_empty());
    let text = fs::read_to_string(tmp.path().join(INDEX_FILE)).unwrap();
    assert!(text.contains("\"scenarios\": []"));
}

#[test]
fn duplicate_names_reject_the_batch() {
    let tmp = TempDir::new().unwrap();
    let s = preset("sec3-isotropic").unwrap();
    assert!(run_batch(&[s.clone(), s], &RunOptions::new(tmp.path())).is_err());
}

#[test]
fn failures_are_indexed_and_others_still_run() {
    let tmp = TempDir::new().unwrap();
    let mut bad = preset("sec3-isotropic").unwrap();
    bad.name = "bad".into();
    bad.gas.alpha_s = 1.0;
    let good = preset("sec4-anisotropic").unwrap();
    let outcome = run_batch(
        &[bad, good],
        &RunOptions::new(tmp.path()).with_parallelism(2),
    )
    .unwrap();
    let entries = &outcome.index.scenarios;
    assert_eq!(entries[0].status, Status::Failed);
    assert!(entries[0].error.as_ref().unwrap().contains("alpha_s"));
    assert_eq!(entries[1].status, Status::Ok);
    assert!(tmp
        .path()
        .join("sec4-anisotropic-lowT/summary.json")
        .is_file());
    assert!(!tmp.path().join("bad").exists());
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let sc = preset("sec4-anisotropic").unwrap();
    let a = RunOptions::new(tmp.path().join("a"));
    let b = RunOptions::new(tmp.path().join("b"));
    run_scenario(&sc, &a).unwrap();
    run_scenario(&sc, &b).unwrap();
    for f in ["trajectory.csv", "drive.csv", "summary.json"] {
        let x = fs::read(a.scenario_dir(&sc).join(f)).unwrap();
        let y = fs::read(b.scenario_dir(&sc).join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn sweep_over_target_b_and_tau() {
    let tmp = TempDir::new().unwrap();
    let sc = Scenario::from_json(
        r#"{
            "name": "grid",
            "regime": "unitary",
            "initial_frequency_hz": [825, 230, 230],
            "target_b": 1.5,
            "tau_s": 1.25e-3,
            "gas": { "initial_energy_ef": 0.75 },
            "drive": { "kind": "lcd" },
            "output": { "stroke_samples": 11 },
            "sweep": { "tau_s": [1e-3, 2e-3], "target_b": [1.2, [1.3, 1.3, 1.3]] }
        }"#,
    )
    .unwrap();
    let outcome = run_sweep(&sc, &RunOptions::new(tmp.path()).with_parallelism(3)).unwrap();
    assert!(outcome.index.all_ok());
    let targets = [1.2, 1.3, 1.2, 1.3];
    for (r, b) in outcome.results.iter().zip(targets) {
        let s = r.as_ref().unwrap();
        assert!((s.stroke_end.b.x - b).abs() < 1e-6);
        assert!((s.stroke_end.q_star.unwrap() - 1.0).abs() < 1e-6);
    }
    let table = fs::read_to_string(tmp.path().join("grid/sweep.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| l.starts_with("grid-")).count(), 4);
}

#[test]
fn hold_keeps_the_lcd_endpoint_stationary() {
    let mut sc = preset("sec3-isotropic").unwrap();
    sc.post_stroke = Some(sta_core::scenario::PostStrokeConfig::Hold { duration_s: 2e-3 });
    let sim = sta_core::runner::simulate(&sc, Default::default()).unwrap();
    let last = sim.summary().final_state;
    assert!((last.b.x - 1.5).abs() < 1e-6);
    assert!((last.q_star.unwrap() - 1.0).abs() < 1e-6);
}
