use std::path::Path;

use liebracket::cli::{
    main_with_args, EXIT_AUDIT_FAIL, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_INFEASIBLE, EXIT_OK, EXIT_RESOLUTION,
};

fn run(args: &[&str], out: &Path) -> i32 {
    let mut argv = vec!["liebracket".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.push("--out".into());
    argv.push(out.display().to_string());
    main_with_args(argv)
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn simulate_defaults_write_both_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["simulate"], dir.path()), EXIT_OK);
    let last = |name: &str| -> f64 {
        let text = read(dir.path().join(name));
        text.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap()
    };
    assert!(last("system_omega_200.0.csv").abs() <= 1e-3);
    assert!((last("lbs.csv") / (-25.0f64).exp() - 1.0).abs() <= 1e-3);
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest["manifest"]["command"], "simulate");
}

#[test]
fn zero_horizon_gives_single_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nname = \"paper-example\"\n[simulation]\nt_end = 0.0\n");
    assert_eq!(run(&["simulate", "--config", &cfg], dir.path()), EXIT_OK);
    assert_eq!(read(dir.path().join("system_omega_200.0.csv")).lines().count(), 2);
    assert_eq!(read(dir.path().join("lbs.csv")).lines().count(), 2);
}

#[test]
fn sweep_writes_one_file_per_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nname = \"paper-example\"\n[simulation]\nt_end = 1.0\n");
    let args = ["simulate", "--config", &cfg, "--omega", "100", "--omega", "200", "--omega", "400", "--omega", "800"];
    assert_eq!(run(&args, dir.path()), EXIT_OK);
    for w in ["100.0", "200.0", "400.0", "800.0"] {
        assert!(dir.path().join(format!("system_omega_{w}.csv")).exists());
    }
    let rows: serde_json::Value = serde_json::from_str(&read(dir.path().join("deviation.json"))).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 4);
}

#[test]
fn manifest_reproduces_csv_bit_for_bit() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let cfg =
        write_config(first.path(), "[scenario]\nname = \"paper-example\"\n[simulation]\nt_end = 0.5\nomega = 150.0\n");
    assert_eq!(run(&["simulate", "--config", &cfg], first.path()), EXIT_OK);
    let manifest = first.path().join("manifest.json").display().to_string();
    assert_eq!(run(&["simulate", "--config", &manifest], second.path()), EXIT_OK);
    for name in ["system_omega_150.0.csv", "lbs.csv"] {
        assert_eq!(read(first.path().join(name)), read(second.path().join(name)), "{name}");
    }
}

#[test]
fn divergence_exits_three_with_partial_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[scenario]\nname = \"unstable-drift\"\na = 400.0\n[simulation]\nt_end = 10.0\nh = 1e-2\n",
    );
    assert_eq!(run(&["simulate", "--config", &cfg], dir.path()), EXIT_DIVERGENCE);
    assert!(read(dir.path().join("system_omega_200.0.csv")).lines().count() > 2);
}

#[test]
fn certify_defaults_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["certify"], dir.path()), EXIT_OK);
    let cert: serde_json::Value = serde_json::from_str(&read(dir.path().join("certificate.json"))).unwrap();
    assert_eq!(cert["alpha_bar"], 1.0);
    assert_eq!(cert["beta_bar"], 2.5);
    let full = cert["log10_omega_star"].as_f64().unwrap();
    assert!(full > 10.0);

    let cfg = write_config(dir.path(), "[scenario]\nname = \"paper-example\"\nlipschitz = 0.001\n");
    assert_eq!(run(&["certify", "--config", &cfg], dir.path()), EXIT_OK);
    let cert: serde_json::Value = serde_json::from_str(&read(dir.path().join("certificate.json"))).unwrap();
    let small = cert["log10_omega_star"].as_f64().unwrap();
    assert!((0.0..full).contains(&small));

    let cfg = write_config(dir.path(), "[scenario]\nname = \"paper-example\"\n[budget]\nalpha_bar = 3.0\nt_f = 0.1\n");
    assert_eq!(run(&["certify", "--config", &cfg], dir.path()), EXIT_INFEASIBLE);
}

#[test]
fn audit_pass_and_corrupted_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nname = \"paper-example\"\n[audit]\nhorizon = 0.3\nprobes = 40\n");
    assert_eq!(run(&["audit", "--config", &cfg, "--omega", "200", "--seed", "7"], dir.path()), EXIT_OK);
    assert_eq!(run(&["audit", "--config", &cfg, "--seed", "8", "--workers", "2"], dir.path()), EXIT_OK);
    let args = ["audit", "--config", &cfg, "--lipschitz-scale", "1e-4"];
    assert_eq!(run(&args, dir.path()), EXIT_AUDIT_FAIL);
    let report: serde_json::Value = serde_json::from_str(&read(dir.path().join("audit_omega_200.0.json"))).unwrap();
    assert!(report["violations"].as_u64().unwrap() > 0);
}

#[test]
fn audit_resolution_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nname = \"paper-example\"\n[audit]\nsteps_per_period = 8\n");
    assert_eq!(run(&["audit", "--config", &cfg], dir.path()), EXIT_RESOLUTION);
}

#[test]
fn adapt_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["adapt"], dir.path()), EXIT_OK);
    let header = read(dir.path().join("adaptive.csv")).lines().next().unwrap().to_string();
    assert_eq!(header, "t,x1,w");

    let cfg = write_config(dir.path(), "[scenario]\nname = \"paper-example\"\n[simulation]\nx0 = [0.0]\n");
    assert_eq!(run(&["adapt", "--config", &cfg], dir.path()), EXIT_OK);

    let cfg = write_config(
        dir.path(),
        "[scenario]\nname = \"unstable-drift\"\na = 1.0\n[simulation]\nh = 1e-3\n[adaptive]\nmax_epochs = 3\n",
    );
    assert_eq!(run(&["adapt", "--config", &cfg], dir.path()), EXIT_DIVERGENCE);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nname = \"missing\"\n");
    assert_eq!(run(&["simulate", "--config", &cfg], dir.path()), EXIT_CONFIG);
    assert_eq!(run(&["simulate", "--config", "/nonexistent/config.toml"], dir.path()), EXIT_CONFIG);
    assert_eq!(run(&["simulate", "--workers", "0"], dir.path()), EXIT_CONFIG);
}
