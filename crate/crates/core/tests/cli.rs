use std::path::Path;
use std::process::{Command, Output};

use curvlab::output;

fn curvlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvlab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CURVLAB_WORKERS")
        .output()
        .unwrap()
}

#[test]
fn trajectory_csv_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvlab(
        &[
            "trajectory",
            "--sign",
            "lorentz",
            "--dim",
            "2",
            "--g",
            "sin",
            "--xi",
            "1.0",
            "--out",
            "t.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let file = output::parse_trajectory_csv(&std::fs::read_to_string(dir.path().join("t.csv")).unwrap()).unwrap();
    assert!(file.samples.windows(2).all(|w| w[1].r > w[0].r));
    assert!(file.samples.iter().all(|s| s.up.abs() < 1.0));
    assert_eq!(file.config.xi, 1.0);
}

#[test]
fn classify_at_float_half_pi() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvlab(
        &[
            "classify",
            "--sign",
            "euclid",
            "--dim",
            "1",
            "--g",
            "sin",
            "--xi",
            "1.5707963267948966",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let observed = v["report"]["observed"].as_str().unwrap();
    assert!(observed == "GradientBlowup" || observed == "TheoryBoundary", "{v}");
}

#[test]
fn negative_xi_flag_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvlab(
        &[
            "classify", "--sign", "lorentz", "--dim", "1", "--g", "cubic", "--xi", "-0.5", "--format", "csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PeriodicOscillating"));
}

#[test]
fn bad_config_names_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"sign":"lorentz","dimension":2,"xi":"high","nonlinearity":{"kind":"sin"}}"#,
    )
    .unwrap();
    let out = curvlab(&["classify", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`xi`"));
}

#[test]
fn unwritable_path_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = curvlab(
        &[
            "trajectory",
            "--sign",
            "lorentz",
            "--dim",
            "1",
            "--g",
            "sin",
            "--xi",
            "1",
            "--out",
            "missing/dir/t.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn euclidean_sine_grid_sweep_has_no_disagreements() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "signs": ["euclid"],
        "dimensions": [1, 2, 3],
        "nonlinearities": [{"kind": "sin"}],
        "xi_grid": [1.0, 1.4, 1.5707963267948966, 1.7, 2.0]
    }"#;
    std::fs::write(dir.path().join("sweep.json"), cfg).unwrap();
    let out = curvlab(
        &[
            "sweep",
            "--config",
            "sweep.json",
            "--workers",
            "2",
            "--out",
            "phase.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("phase.csv")).unwrap();
    assert!(text.contains("# disagreement_count: 0"), "{text}");
}

#[test]
fn sweep_disagreement_exits_two() {
    // Tolerances this loose let the N = 1 orbit drift far enough that the
    // period check fails, which is reported as a disagreement.
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "signs": ["lorentz"],
        "dimensions": [1],
        "nonlinearities": [{"kind": "sin"}],
        "xi_grid": [2.5],
        "controls": {"rel_tol": 1e-3, "abs_tol": 1e-3}
    }"#;
    std::fs::write(dir.path().join("sweep.json"), cfg).unwrap();
    let out = curvlab(&["sweep", "--config", "sweep.json", "--format", "json"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["disagreements"].as_array().unwrap().len(), 1);
}
