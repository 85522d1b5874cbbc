//! End-to-end runs of the `rmcle` binary.

use std::path::Path;
use std::process::{Command, Output};

use rmcle_core::model::drift;
use rmcle_core::{DensityState, ModelParams};

fn rmcle(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rmcle"));
    cmd.args(args);
    if let Some(out) = out {
        cmd.arg("--out-dir").arg(out);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn classify_reports_regimes() {
    let o = rmcle(&["classify", "--k", "3", "--m", "2", "--c", "0.8"], None);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["regime"], "LimitCycle");
    assert!((v["n_star"].as_f64().unwrap() - 0.6667).abs() < 1e-4);

    let o = rmcle(&["classify", "--k", "1", "--m", "0.8", "--c", "0.8"], None);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["regime"], "PredatorExtinction");
    assert!(v["n_star"].is_null());
}

#[test]
fn usage_errors_exit_2() {
    let o = rmcle(&["classify", "--k", "0", "--m", "2", "--c", "0.8"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("k must be"), "{}", stderr(&o));

    for args in [
        &["classify", "--omega", "100", "--rho", "0.1"][..],
        &["classify", "--k", "abc"],
        &["survival", "--kind", "fancy"],
        &["survival", "--paths", "0"],
        &["moments", "--power", "3"],
        &["lln", "--replicates", "10"],
        &["lln", "--omegas", "1000,100"],
        &["ode", "--n0", "-1"],
        &["classify", "--bogus", "1"],
        &["nonsense"],
    ] {
        let dir = tempfile::tempdir().unwrap();
        let o = rmcle(args, Some(dir.path()));
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = rmcle(&["ssa", "--budget", "10"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("jump budget"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nk = 1\nm = 0.8\nc = 0.8\nhorizon = 5\n").unwrap();
    let out = dir.path().join("out");
    let o = rmcle(
        &["ode", "--config", cfg.to_str().unwrap(), "--horizon", "2"],
        Some(&out),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(m["config"]["k"], "1");
    assert_eq!(m["config"]["horizon"], "2");
    assert_eq!(m["subcommand"], "ode");
    let last = rows(&read(&out.join("ode.csv"))).pop().unwrap();
    assert!((last[0] - 2.0).abs() < 1e-12);

    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let o = rmcle(&["ode", "--config", cfg.to_str().unwrap()], Some(&out));
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(&cfg, "omega = 100\nrho = 0.1\n").unwrap();
    let o = rmcle(&["ode", "--config", cfg.to_str().unwrap()], Some(&out));
    assert_eq!(o.status.code(), Some(2));

    // a flag outranks the file, including across omega/rho
    let o = rmcle(
        &["ode", "--config", cfg.to_str().unwrap(), "--rho", "0.2"],
        Some(&out),
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn ode_output_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = rmcle(
        &["ode", "--horizon", "10", "--grid-step", "0.5"],
        Some(dir.path()),
    );
    assert!(o.status.success());
    let csv = read(&dir.path().join("ode.csv"));
    assert_eq!(csv.lines().next(), Some("t,N,P"));
    let r = rows(&csv);
    assert_eq!(r.len(), 21);
    assert_eq!(r[0], vec![0.0, 0.8, 0.6]);
}

#[test]
fn zero_noise_sde_is_euler() {
    let dir = tempfile::tempdir().unwrap();
    let o = rmcle(
        &["sde", "--rho", "0", "--horizon", "5", "--dt", "0.01"],
        Some(dir.path()),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "absorption_time=none");
    let csv = read(&dir.path().join("path.csv"));
    assert_eq!(csv.lines().next(), Some("t,N,P,absorbed"));
    let p = ModelParams::with_rho(3.0, 2.0, 0.8, 0.0).unwrap();
    let mut z = DensityState::new(0.8, 0.6);
    let r = rows(&csv);
    assert_eq!(r.len(), 501);
    for (i, row) in r.iter().enumerate() {
        if i > 0 {
            let mu = drift(&p, z).unwrap();
            z = DensityState::new(z.prey + mu[0] * 0.01, z.predator + mu[1] * 0.01);
        }
        assert_eq!(row[1..3], [z.prey, z.predator], "step {i}");
        assert_eq!(row[3], 0.0);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("path.json"))).unwrap();
    assert!(summary["absorption_time"].is_null());
}

#[test]
fn absorbed_sde_freezes_in_csv() {
    // strong noise absorbs quickly
    let dir = tempfile::tempdir().unwrap();
    let o = rmcle(
        &["sde", "--omega", "1", "--horizon", "50", "--seed", "3"],
        Some(dir.path()),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("path.json"))).unwrap();
    let tau = summary["absorption_time"].as_f64().expect("absorbed");
    let r = rows(&read(&dir.path().join("path.csv")));
    let frozen: Vec<_> = r.iter().filter(|row| row[3] == 1.0).collect();
    assert!((frozen[0][0] - tau).abs() < 1e-9);
    assert!(frozen.iter().all(|row| row[1..3] == frozen[0][1..3]));
    assert!(frozen[0][1] == 0.0 || frozen[0][2] == 0.0);
}

#[test]
fn ssa_output_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = rmcle(&["ssa", "--horizon", "1"], Some(dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let jumps = read(&dir.path().join("jumps.csv"));
    let mut lines = jumps.lines();
    assert_eq!(lines.next(), Some("t,n,p,channel"));
    assert!(lines.next().unwrap().ends_with(",80,60,"));
    for line in lines {
        let ch = line.rsplit(',').next().unwrap();
        assert!(["B", "C", "D", "E"].contains(&ch), "{line}");
    }
    assert_eq!(
        read(&dir.path().join("density.csv")).lines().next(),
        Some("t,N,P")
    );
}

#[test]
fn survival_outputs_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let args = [
        "survival",
        "--paths",
        "200",
        "--horizon",
        "20",
        "--seed",
        "9",
    ];
    let o = rmcle(&args, Some(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("survivor_fraction="), "{line}");

    let survival = read(&out.join("survival.csv"));
    assert_eq!(survival.lines().next(), Some("t,survival"));
    let r = rows(&survival);
    assert_eq!(r[0], vec![0.0, 1.0]);
    assert!(r.windows(2).all(|w| w[1][1] <= w[0][1]));
    assert_eq!(read(&out.join("cloud.csv")).lines().next(), Some("N,P"));

    let doc: serde_json::Value = serde_json::from_str(&read(&out.join("ensemble.json"))).unwrap();
    for key in [
        "toolkit_version",
        "config",
        "grid",
        "survival",
        "mean_N",
        "mean_P",
        "histogram",
        "survivor_fraction",
        "n_paths",
    ] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    let frac = doc["survivor_fraction"].as_f64().unwrap();
    let counts: u64 = doc["histogram"]["counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c.as_u64().unwrap())
        .sum();
    assert_eq!(counts, (frac * 200.0).round() as u64);
    assert_eq!(doc["histogram"]["bin_edges"].as_array().unwrap().len(), 31);
    assert_eq!(doc["config"]["n_paths"], 200);

    let manifest: serde_json::Value =
        serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["master_seed"], 9);
    assert!(manifest["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);

    // replaying the resolved config into another directory reproduces the bytes
    let replay = out.join("replay.cfg");
    let again = dir.path().join("b");
    let o = rmcle(
        &["survival", "--config", replay.to_str().unwrap()],
        Some(&again),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["survival.csv", "cloud.csv", "ensemble.json"] {
        assert_eq!(read(&out.join(name)), read(&again.join(name)), "{name}");
    }
}

#[test]
fn comparisons_write_both_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = rmcle(
        &["compare-fact", "--paths", "100", "--horizon", "10"],
        Some(dir.path()),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for name in [
        "survival_event.csv",
        "survival_cholesky.csv",
        "ensemble_event.json",
        "ensemble_cholesky.json",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let cmp: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("comparison.json"))).unwrap();
    let overlap = cmp["terminal_hist_overlap"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&overlap));

    let dir = tempfile::tempdir().unwrap();
    let o = rmcle(
        &[
            "compare-cov",
            "--rho",
            "0",
            "--paths",
            "3",
            "--horizon",
            "10",
        ],
        Some(dir.path()),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        read(&dir.path().join("cloud_full.csv")),
        read(&dir.path().join("cloud_diagonal.csv"))
    );
    assert_eq!(
        stdout(&o).trim(),
        "survivor_fraction_full=1 survivor_fraction_diagonal=1"
    );
}

#[test]
fn probes_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = rmcle(
        &["extinction", "--paths", "100", "--horizon", "20"],
        Some(dir.path()),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("extinction.json"))).unwrap();
    let f = v["extinct_fraction"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f));

    let o = rmcle(
        &[
            "moments",
            "--paths",
            "100",
            "--horizon",
            "10",
            "--power",
            "4",
        ],
        Some(dir.path()),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("sup_mean_moment_p4="));

    let o = rmcle(
        &[
            "lln",
            "--omegas",
            "100",
            "--replicates",
            "100",
            "--horizon",
            "2",
        ],
        Some(dir.path()),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(&dir.path().join("lln.csv"));
    assert_eq!(csv.lines().next(), Some("omega,deviation"));
    assert_eq!(rows(&csv).len(), 1);
}

#[test]
fn help_lists_defaults() {
    let o = rmcle(&["survival", "--help"], None);
    assert!(o.status.success());
    let help = stdout(&o);
    for needle in [
        "--paths <VALUE>",
        "[default: 2000]",
        "--kind",
        "[default: cholesky]",
        "--rho",
        "--config",
    ] {
        assert!(help.contains(needle), "{needle}");
    }
}
