use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qmetro::config::resolve;
use qmetro::output::RunManifest;
use qmetro::run::{cmd_experiment, cmd_sweep, Context};

const FAST: &str = r#"
[experiment]
mode = "full_dynamics"
mean_n_r = 1
nu = 4
scan_points = 7
"#;

fn qmetro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmetro"))
        .args(args)
        .env_remove("QMETRO__SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn out(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn invalid_configurations_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = out(dir.path(), "o");
    let cases: [&[&str]; 5] = [
        &["analytic", "--out", &o, "--set", "analytic.points=0"],
        &["analytic", "--out", &o, "--set", "analytic.p_r=[]"],
        &["experiment", "--out", &o, "--set", "experiment.mode=full_dynamics", "--set", "experiment.mean_n_r=5"],
        &["experiment", "--out", &o, "--set", "experiment.no_such_key=1"],
        &["analytic", "--out", &o, "--set", "analytic.n_r"],
    ];
    for args in cases {
        let r = qmetro(args);
        assert_eq!(r.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&r.stderr));
    }
    assert_eq!(qmetro(&["bogus"]).status.code(), Some(1));
}

#[test]
fn analytic_writes_one_fringe_per_purity() {
    let dir = tempfile::tempdir().unwrap();
    let o = out(dir.path(), "a");
    let r = qmetro(&["analytic", "--out", &o, "--set", "analytic.n_r=4", "--set", "analytic.p_r=[0.0, 0.5, 1.0]"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for tag in ["0", "0p5", "1"] {
        let text = fs::read_to_string(dir.path().join("a").join(format!("fringe_pr{tag}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 402);
        assert!(dir.path().join("a").join(format!("outcomes_pr{tag}.csv")).exists());
    }
    let m = RunManifest::load(&dir.path().join("a")).unwrap().unwrap();
    assert_eq!(m.command, "analytic");
    assert_eq!(m.outputs.len(), 7);
}

#[test]
fn experiments_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", FAST);
    let run = |name: &str, extra: &[&str]| {
        let o = out(dir.path(), name);
        let mut args = vec!["experiment", "--config", &cfg, "--out", &o];
        args.extend_from_slice(extra);
        let r = qmetro(&args);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        fs::read_to_string(dir.path().join(name).join("dataset.csv")).unwrap()
    };
    let a = run("a", &["--jobs", "1"]);
    let b = run("b", &["--jobs", "3"]);
    let c = run("c", &["--seed", "2"]);
    assert_eq!(a, b);
    assert_ne!(a, c);

    // The snapshot alone reproduces the run.
    let snap = out(&dir.path().join("a"), "config.resolved.toml");
    let o = out(dir.path(), "d");
    assert!(qmetro(&["experiment", "--config", &snap, "--out", &o]).status.success());
    assert_eq!(a, fs::read_to_string(dir.path().join("d").join("dataset.csv")).unwrap());
}

#[test]
fn environment_overrides_sit_between_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", FAST);
    let env = vec![("QMETRO__EXPERIMENT__NU".to_string(), "6".to_string())];
    let r = resolve(Some(Path::new(&cfg)), env.clone(), &[]).unwrap();
    assert_eq!(r.config.experiment.nu, 6);
    let r = resolve(Some(Path::new(&cfg)), env, &["experiment.nu=8".into()]).unwrap();
    assert_eq!(r.config.experiment.nu, 8);
}

#[test]
fn single_cell_sweep_matches_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{FAST}\n[[sweep.axes]]\nkey = \"experiment.p_c\"\nvalues = [0.95]\n");
    let cfg = write(dir.path(), "c.toml", &text);
    let e = out(dir.path(), "e");
    let s = out(dir.path(), "s");
    assert!(qmetro(&["experiment", "--config", &cfg, "--out", &e]).status.success());
    assert!(qmetro(&["sweep", "--config", &cfg, "--out", &s]).status.success());

    let mut exp = csv::Reader::from_path(dir.path().join("e").join("dataset.csv")).unwrap();
    let mut sw = csv::Reader::from_path(dir.path().join("s").join("sweep.csv")).unwrap();
    let cols = exp.headers().unwrap().clone();
    let sh = sw.headers().unwrap().clone();
    let idx: Vec<usize> = cols.iter().map(|c| sh.iter().position(|h| h == c).unwrap()).collect();
    let a: Vec<_> = exp.records().map(|r| r.unwrap()).collect();
    let b: Vec<_> = sw.records().map(|r| r.unwrap()).collect();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        let y: Vec<&str> = idx.iter().map(|&i| &y[i]).collect();
        assert_eq!(x.iter().collect::<Vec<_>>(), y);
    }
}

#[test]
fn interrupted_sweeps_resume_to_the_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{FAST}\n[[sweep.axes]]\nkey = \"experiment.linewidth_hz\"\nvalues = [0.0, 1e5]\n\
         [[sweep.axes]]\nkey = \"experiment.p_r\"\nvalues = [0.5, 1.0]\n"
    );
    let resolved = resolve(Some(&dir.path().join(write(dir.path(), "c.toml", &text))), [], &[]).unwrap();
    let ctx = |name: &str, stop| Context {
        resolved: resolved.clone(),
        config_path: None,
        out: dir.path().join(name),
        jobs: 1,
        stop_after: stop,
    };
    let whole = cmd_sweep(&ctx("whole", None)).unwrap();
    assert_eq!(whole.completed_cells, vec![0, 1, 2, 3]);

    let err = cmd_sweep(&ctx("parts", Some(1))).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert_eq!(RunManifest::load(&dir.path().join("parts")).unwrap().unwrap().completed_cells, vec![0]);
    assert!(cmd_sweep(&ctx("parts", Some(2))).is_err());
    cmd_sweep(&ctx("parts", None)).unwrap();
    assert_eq!(
        fs::read(dir.path().join("whole").join("sweep.csv")).unwrap(),
        fs::read(dir.path().join("parts").join("sweep.csv")).unwrap()
    );

    let mut changed = ctx("parts", None);
    changed.resolved = resolved.with("experiment.nu", toml::Value::Integer(5)).unwrap();
    assert_eq!(cmd_sweep(&changed).unwrap_err().exit_code(), 1);
}

#[test]
fn failing_cells_are_recorded_and_the_sweep_continues() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{FAST}\n[[sweep.axes]]\nkey = \"experiment.p_c\"\nvalues = [2.0, 0.9]\n");
    let cfg = write(dir.path(), "c.toml", &text);
    let o = out(dir.path(), "s");
    assert_eq!(qmetro(&["sweep", "--config", &cfg, "--out", &o]).status.code(), Some(3));
    let mut r = csv::Reader::from_path(dir.path().join("s").join("sweep.csv")).unwrap();
    let rows: Vec<_> = r.records().map(|r| r.unwrap()).collect();
    let err = rows.iter().filter(|r| r[0] == *"0").collect::<Vec<_>>();
    assert_eq!(err.len(), 1);
    assert!(err[0][err[0].len() - 1].contains("p_c"));
    assert_eq!(rows.iter().filter(|r| r[0] == *"1" && r[r.len() - 1].is_empty()).count(), 7);
}

#[test]
fn large_register_runs_write_the_gate_curve() {
    let dir = tempfile::tempdir().unwrap();
    let resolved = resolve(
        None,
        [],
        &[
            "experiment.mode=large_n_model".into(),
            "experiment.nu=6".into(),
            "experiment.large_n.contrast_max_n=3".into(),
            "experiment.large_n.bank_size=10".into(),
        ],
    )
    .unwrap();
    let ctx = Context { resolved, config_path: None, out: dir.path().to_path_buf(), jobs: 2, stop_after: None };
    let m = cmd_experiment(&ctx).unwrap();
    assert!(m.outputs.iter().any(|o| o == "gate_curve.json"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["sensitivity"]["ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn calibration_reports_a_scale() {
    let dir = tempfile::tempdir().unwrap();
    let o = out(dir.path(), "c");
    let r = qmetro(&["calibrate", "--out", &o]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).starts_with("experiment.gate.amplitude_scale = "));
    let cal: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("c").join("calibration.json")).unwrap()).unwrap();
    assert!(cal["transfer"].as_f64().unwrap() > 0.98);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let r = resolve(Some(&path), [], &[]).unwrap();
        r.config.validate_analytic().unwrap();
        r.config.experiment_config().unwrap();
        if !r.config.sweep.axes.is_empty() {
            r.config.validate_sweep().unwrap();
        }
        seen += 1;
    }
    assert!(seen >= 4);
}
