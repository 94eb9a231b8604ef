use std::fs;
use std::process::Command;

use levylab::experiment::{emit_plotdata, run, Experiment, ExperimentConfig, ExperimentReport, Records};
use levylab::limit::{tabulate_density, LimitOptions};
use levylab::stable::EnsembleParams;
use levylab::stats::{GapEnsemble, LsvEnsemble};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levylab"))
}

fn lsv_config() -> ExperimentConfig {
    ExperimentConfig::new(
        EnsembleParams::feasible(64, 1.5).unwrap().with_seed(7),
        Experiment::Lsv {
            ensemble: LsvEnsemble::Gaussian,
            trials: 10,
        },
    )
}

#[test]
fn lsv_report_is_reproducible() {
    let a = run(&lsv_config()).unwrap().to_json();
    let b = run(&lsv_config()).unwrap().to_json();
    assert_eq!(a, b);
}

#[test]
fn report_reload_audits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let report = run(&lsv_config()).unwrap();
    report.save(&path).unwrap();
    let back = ExperimentReport::load(&path).unwrap();
    assert_eq!(back, report);

    let text = fs::read_to_string(&path).unwrap();
    let mut tampered: serde_json::Value = serde_json::from_str(&text).unwrap();
    tampered["records"]["rows"][0]["scaled"] = serde_json::json!(123.0);
    fs::write(&path, tampered.to_string()).unwrap();
    assert!(ExperimentReport::load(&path).is_err());
}

#[test]
fn lsv_plotdata_columns() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&lsv_config()).unwrap();
    let files = emit_plotdata(&report, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let emp = fs::read_to_string(dir.path().join("lsv_empirical.csv")).unwrap();
    assert!(emp.starts_with("r,F_emp\n"));
    assert_eq!(emp.lines().count(), 11);
    let lim = fs::read_to_string(dir.path().join("lsv_limit.csv")).unwrap();
    assert!(lim.starts_with("r,F_limit\n0,0\n"));
}

#[test]
fn gap_plotdata_columns() {
    let cfg = ExperimentConfig::new(
        EnsembleParams::feasible(16, 1.5).unwrap(),
        Experiment::Gap {
            ensemble: GapEnsemble::GaussianSymmetric,
            r: vec![0.5, 1.0, 2.0],
            epsilon: 0.01,
            trials: 20,
        },
    );
    let dir = tempfile::tempdir().unwrap();
    emit_plotdata(&run(&cfg).unwrap(), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("gap.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("w,p_emp,p_bracket_lo,p_bracket_hi"));
    let ps: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(ps.len(), 3);
    // Wider windows can only lower the gap probability on the same spectra.
    assert!(ps[0] >= ps[1] && ps[1] >= ps[2]);
}

#[test]
fn density_plotdata_passes_tabulation_through() {
    let energies = vec![0.0, 0.5];
    let etas = vec![0.05, 0.025, 0.0125];
    let cfg = ExperimentConfig::new(
        EnsembleParams::feasible(16, 1.0).unwrap(),
        Experiment::Density {
            energies: energies.clone(),
            etas: etas.clone(),
        },
    );
    let report = run(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_plotdata(&report, dir.path()).unwrap();
    let direct = tabulate_density(1.0, &energies, &etas, LimitOptions::default()).unwrap();
    let Records::Density(rows) = &report.records else {
        panic!("density records expected")
    };
    assert_eq!(rows, &direct);
    let text = fs::read_to_string(dir.path().join("density.csv")).unwrap();
    let written: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    let expected: Vec<f64> = direct.iter().filter(|r| r.eta == 0.0).map(|r| r.rho).collect();
    assert_eq!(written, expected);
    assert!((expected[0] - 1.0 / std::f64::consts::PI).abs() < 1e-3);
}

#[test]
fn locallaw_emits_grid() {
    let cfg = ExperimentConfig::new(
        EnsembleParams::feasible(64, 1.5).unwrap(),
        Experiment::default_for("locallaw").unwrap(),
    );
    let report = run(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_plotdata(&report, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("locallaw.csv")).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(report.aggregates["max_residual"] >= report.aggregates["mean_residual"]);
}

#[test]
fn cli_runs_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(&cfg_path, lsv_config().to_json()).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["lsv", "--config"])
        .arg(&cfg_path)
        .args(["--seed", "9", "--workers", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = ExperimentReport::load(&out.join("report.json")).unwrap();
    assert_eq!(report.config.params.seed, 9);
    assert!(out.join("lsv_limit.csv").exists());

    let audit = bin().arg("audit").arg(out.join("report.json")).status().unwrap();
    assert!(audit.success());
}

#[test]
fn cli_worker_env_does_not_change_report() {
    let run_with = |workers: &str| {
        let out = bin()
            .args(["lsv", "--n", "24", "--seed", "3"])
            .env("LEVYLAB_WORKERS", workers)
            .output()
            .unwrap();
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run_with("1"), run_with("3"));
}

#[test]
fn cli_exit_codes() {
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code();
    assert_eq!(code(&["lsv", "--n", "0"]), Some(2));
    assert_eq!(code(&["lsv", "--workers", "0"]), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let wrong_kind = dir.path().join("gap.json");
    fs::write(&wrong_kind, lsv_config().to_json()).unwrap();
    assert_eq!(code(&["gap", "--config", wrong_kind.to_str().unwrap()]), Some(2));
}
