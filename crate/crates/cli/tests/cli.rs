use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use bellreg_cli::config::{self, Command as RunCommand, RunConfig};
use bellreg_cli::report::{self, RunReport};
use bellreg_core::ModelKind;
use tempfile::TempDir;

fn mine() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mine_fracture.csv")
}

fn bellreg(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_bellreg")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn short_args<'a>(out: &'a str, data: &'a str) -> Vec<&'a str> {
    vec![
        "--data", data, "--out", out, "--iters", "6000", "--burnin", "2000", "--thin", "4", "--seed", "11",
    ]
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn gof_command_writes_table() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, err) = bellreg(&["gof", "--data", mine().to_str().unwrap(), "--out", out]);
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&dir.path().join("table_gof.csv"));
    assert_eq!(rows[0], ["cell", "observed", "expected_bell", "expected_poisson"]);
    assert_eq!(rows[6][0], ">=5");
    assert_eq!(rows[7][0], "chi2");
    let chi2: f64 = rows[7][2].parse().unwrap();
    assert!((chi2 - 1.216).abs() < 0.02);
    let r = report::read_report(dir.path()).unwrap();
    assert_eq!(r.command, RunCommand::Gof);
    assert!(r.fits.is_empty());
}

#[test]
fn compare_outputs_and_round_trip() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let data = mine();
    let mut args = vec!["compare"];
    args.extend(short_args(out, data.to_str().unwrap()));
    let (code, err) = bellreg(&args);
    assert_eq!(code, 0, "{err}");

    let written = report::read_report(dir.path()).unwrap();
    assert_eq!(written.seed, 11);
    assert_eq!(written.config_hash, written.config.hash());
    assert_eq!(written.fits.len(), 2);
    assert!(written.preference.is_some());
    for fit in &written.fits {
        assert_eq!(fit.retained_per_chain, 1000);
        assert_eq!(fit.total_draws, 2000);
        assert_eq!(fit.accept_rates.len(), 2);
        assert_eq!(fit.seed, 11);
        for c in 0..2 {
            let rows = csv_rows(&dir.path().join(format!("chain_{}_{c}.csv", fit.model)));
            assert_eq!(rows[0], ["iteration", "intercept", "x1", "x2", "x3", "x4", "log_posterior"]);
            assert_eq!(rows.len(), 1001);
            assert_eq!(rows[1][0], "2004");
        }
    }

    // the report re-parses to exactly what an in-process run computes
    let again = bellreg_cli::execute(&written.config).unwrap().report;
    assert_eq!(again, written);

    let criteria = csv_rows(&dir.path().join("table_criteria.csv"));
    assert_eq!(criteria[0], ["model", "prior", "lmpl", "dic", "eaic", "ebic"]);
    let bell = written.fit(ModelKind::Bell).unwrap();
    let lmpl: f64 = criteria[1][2].parse().unwrap();
    assert_eq!(lmpl, bell.criteria.lmpl);
    let posterior = csv_rows(&dir.path().join("table_posterior.csv"));
    assert_eq!(posterior.len(), 11);
}

#[test]
fn same_seed_same_bytes() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let data = mine();
    for dir in [&a, &b] {
        let mut args = vec!["fit", "--model", "bell"];
        args.extend(short_args(dir.path().to_str().unwrap(), data.to_str().unwrap()));
        assert_eq!(bellreg(&args).0, 0);
    }
    let ra = report::read_report(a.path()).unwrap();
    let mut rb = report::read_report(b.path()).unwrap();
    assert_eq!(ra.config_hash, rb.config_hash);
    rb.config.output_dir = ra.config.output_dir.clone();
    assert_eq!(ra, rb);
    for name in ["table_posterior.csv", "table_criteria.csv", "chain_bell_0.csv", "chain_bell_1.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn input_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let (code, err) = bellreg(&["compare", "--out", out]);
    assert_eq!(code, 2, "{err}");
    let (code, _) = bellreg(&["gof", "--data", "/nonexistent.csv", "--out", out]);
    assert_eq!(code, 2);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,x\n1,2\n2.5,3\n").unwrap();
    let (code, err) = bellreg(&["gof", "--data", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 2);
    assert!(err.contains("row 2") && err.contains("\"y\""), "{err}");
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"mcmc": {"n_iters": 5}}"#).unwrap();
    let (code, _) = bellreg(&["gof", "--config", cfg.to_str().unwrap(), "--data", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn singular_design_exits_3() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = String::from("y,a,b\n");
    for i in 0..20 {
        text.push_str(&format!("{},{},{}\n", i % 4, i, 2 * i));
    }
    fs::write(&data, text).unwrap();
    let mut args = vec!["fit"];
    let out = dir.path().join("out");
    args.extend(short_args(out.to_str().unwrap(), data.to_str().unwrap()));
    let (code, err) = bellreg(&args);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("bell model") || err.contains("singular"), "{err}");
}

#[test]
fn stuck_chains_trip_the_gate() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"mcmc": {"n_iter": 400, "burn_in": 100, "thin": 1,
            "proposal": {"mode": {"mode": "fixed_scale", "sigma": 1e-6}, "covariance_shape": "gram_inverse"}}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let data = mine();
    let base = [
        "fit",
        "--model",
        "bell",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    let (code, err) = bellreg(&base);
    assert_eq!(code, 4, "{err}");
    let r = report::read_report(&out).unwrap();
    assert!(!r.converged);
    let mut relaxed = base.to_vec();
    relaxed.push("--allow-unconverged");
    assert_eq!(bellreg(&relaxed).0, 0);
}

#[test]
fn sweep_fits_every_prior() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"model": "bell", "sweep": {"tau": [10.0], "m": [0.5]}}"#).unwrap();
    let out = dir.path().join("out");
    let data = mine();
    let mut args = vec!["fit", "--config", cfg.to_str().unwrap()];
    args.extend(short_args(out.to_str().unwrap(), data.to_str().unwrap()));
    assert_eq!(bellreg(&args).0, 0);
    let r = report::read_report(&out).unwrap();
    let labels: Vec<&str> = r.fits.iter().map(|f| f.prior_label.as_str()).collect();
    assert_eq!(labels, ["gprior", "flat_tau10", "gprior_m0.5"]);
    assert!(out.join("chain_bell_flat_tau10_1.csv").exists());
}

#[test]
fn simulate_command() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "simulate", "--n", "40", "--p", "3", "--reps", "2", "--iters", "3000", "--burnin", "1000", "--thin", "4",
        "--seed", "5", "--out", out,
    ];
    let (code, err) = bellreg(&args);
    assert_eq!(code, 0, "{err}");
    let r: RunReport = report::read_report(dir.path()).unwrap();
    let sim = r.simulation.as_ref().unwrap();
    assert_eq!(sim.cells.len(), 2);
    assert!(sim.cells.iter().all(|c| c.reps_ok == 2));
    let est = csv_rows(&dir.path().join("table_sim_estimates.csv"));
    assert_eq!(est.len(), 1 + 2 * 3);
    assert_eq!(est[1][4], "0");
    assert_eq!(est[2][4], "-0.5");
    let errs = csv_rows(&dir.path().join("table_sim_errors.csv"));
    assert_eq!(errs[0], ["n", "p", "prior", "mse", "mae", "reps", "failures"]);
}

#[test]
fn config_file_then_flags() {
    let mut c = config::parse_config(r#"{"seed": 4, "model": "poisson", "level": 0.9}"#).unwrap();
    c.command = Some(RunCommand::Compare);
    assert!(c.validate().is_err());
    c.data_path = Some(mine());
    c.validate().unwrap();
    let default = RunConfig::default();
    assert_ne!(c.hash(), default.hash());
}
