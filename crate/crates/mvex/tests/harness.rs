use mvex::harness::*;
use mvex::io::{ModelSpec, ReservoirSpec};
use std::process::Command;

fn experiment(theta: f64, regime: Option<Regime>) -> Experiment {
    Experiment {
        model: ModelSpec::Model1 { dim: 1 },
        theta,
        regime,
        robin_kappa: LATTICE_ROBIN,
        sizes: vec![16, 32],
        replicas: 4,
        initial: InitialProfile::Linear {
            left: vec![1.4, 0.2],
            right: vec![0.6, 0.0],
            bump: vec![],
        },
        reservoirs: ReservoirSpec::constant(&[0.8, 0.6], &[0.3, 0.3]),
        smoothing: Smoothing::Width(0.1),
        times: vec![0.01, 0.02],
        seed: 3,
        pde_cells: 64,
        drift: DriftScheme::Central,
    }
}

#[test]
fn regime_tag_must_match_theta() {
    let err = experiment(2.0, Some(Regime::Dirichlet)).validate().unwrap_err();
    assert!(
        matches!(
            err,
            HarnessError::RegimeMismatch {
                expected: "neumann",
                ..
            }
        ),
        "{err}"
    );
    assert_eq!(experiment(1.0, Some(Regime::Robin)).validate().unwrap(), Regime::Robin);
    assert_eq!(experiment(0.3, None).validate().unwrap(), Regime::Dirichlet);
}

#[test]
fn experiment_json_round_trip() {
    let exp = experiment(0.0, Some(Regime::Dirichlet));
    let text = serde_json::to_string(&exp).unwrap();
    let back: Experiment = serde_json::from_str(&text).unwrap();
    assert_eq!(back, exp);
    let minimal = r#"{"model": {"kind": "model1", "dim": 1}, "theta": 0, "sizes": [16], "replicas": 2,
        "initial": {"kind": "constant", "value": [1.0, 0.0]},
        "reservoirs": {"alpha": [0.5, 0.5], "beta": [0.5, 0.5]}, "times": [0.01], "seed": 1}"#;
    let e: Experiment = serde_json::from_str(minimal).unwrap();
    assert_eq!(e.robin_kappa, 2.0);
    assert_eq!(e.smoothing, Smoothing::Width(0.03));
}

#[test]
fn convergence_report_is_reproducible() {
    let exp = experiment(0.0, None);
    let a = run_convergence(&exp, |_| {}).unwrap();
    let b = run_convergence(&exp, |_| {}).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 4);
    for row in &a.rows {
        assert!(row
            .l1
            .iter()
            .chain(&row.l2)
            .chain(&row.stderr)
            .all(|x| *x >= 0.0 && x.is_finite()));
        assert_eq!(row.test_errors.len(), TEST_BASKET.len());
    }
    assert_eq!(a.slopes.len(), 2);
}

// Identical flat state everywhere: the PDE stays put and the error is the
// Monte Carlo floor, of order (M · 2εN)^{-1/2} per component.
#[test]
fn matched_constant_state_sits_at_noise_floor() {
    let mut exp = experiment(0.0, None);
    exp.reservoirs = ReservoirSpec::constant(&[0.5, 0.5], &[0.5, 0.5]);
    exp.initial = InitialProfile::Constant { value: vec![1.0, 0.0] };
    exp.sizes = vec![64];
    exp.replicas = 20;
    let report = run_convergence(&exp, |_| {}).unwrap();
    for row in &report.rows {
        // per-site variance of I0 and I1 is 1/2 under the half-filled measure
        let floor = (0.5 / (exp.replicas as f64 * 2.0 * 0.1 * 64.0)).sqrt();
        for k in 0..2 {
            assert!(
                row.l1[k] < 3.0 * floor,
                "N={} k={k}: {} vs floor {floor}",
                row.n,
                row.l1[k]
            );
        }
    }
}

#[test]
fn manifest_rerun_reproduces_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_mvex");
    let run = |out: &std::path::Path| {
        let status = Command::new(bin)
            .args([
                "simulate",
                "--N",
                "24",
                "--theta",
                "0.5",
                "--T",
                "0.02",
                "--snapshots",
                "0.01,0.02",
            ])
            .args([
                "--replicas",
                "3",
                "--seed",
                "7",
                "--alpha",
                "0.8,0.6",
                "--beta",
                "0.3,0.3",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a);
    run(&b);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 6);
    for name in names {
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn check_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_mvex");
    let ok = Command::new(bin).args(["check", "--seed", "3"]).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = Command::new(bin).args(["check", "--mutate"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stdout).contains("stationarity                         FAIL"));
}

#[test]
fn compare_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.json");
    let mut exp = experiment(1.0, Some(Regime::Robin));
    exp.sizes = vec![16];
    std::fs::write(&path, serde_json::to_string(&exp).unwrap()).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_mvex"))
        .arg("compare")
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["rows.csv", "report.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    // a mismatched tag aborts but still leaves a manifest
    let mut bad = exp.clone();
    bad.regime = Some(Regime::Neumann);
    std::fs::write(&path, serde_json::to_string(&bad).unwrap()).unwrap();
    let out2 = dir.path().join("out2");
    let status = Command::new(env!("CARGO_BIN_EXE_mvex"))
        .arg("compare")
        .arg(&path)
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap();
    assert!(!status.success());
    assert!(out2.join("manifest.json").exists());
}
