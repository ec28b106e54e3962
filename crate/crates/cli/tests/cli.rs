//! End-to-end tests of the `dqopt` binary.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dqopt"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dqopt_cli_{tag}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

const CONFIG: &str = r#"
schema_version = 1

[experiment]
name = cli_smoke
seeds = 1,2
iters = 40
classify_epsilon = 0.1
classify_rho = 1.0

[mixing]
kind = ring
n_agents = 5

[quantizer]
scheme = switching
interval_ell = 0.3
bit_width = 9

[schedule]
mode = practical
alpha = 0.62
beta = 0.94
c1 = 0.03
c2 = 0.3
p = 0.1
epsilon_target = 0.1
t0 = 5
hold = 10
n_holds = 2

[objective]
kind = logistic

[init]
kind = at_point
point = 0,0

[variant.switching]
scheme = switching

[variant.exact]
scheme = identity
"#;

#[test]
fn batch_runs_and_is_deterministic() {
    let dir = workdir("smoke");
    let cfg = dir.join("exp.conf");
    fs::write(&cfg, CONFIG).unwrap();
    let out1 = dir.join("out1");
    let out2 = dir.join("out2");

    for out in [&out1, &out2] {
        let status = bin()
            .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in [
        "switching__1.csv",
        "switching__2.csv",
        "exact__1.csv",
        "exact__2.csv",
        "summary.txt",
        "summary.kv",
    ] {
        assert!(out1.join(name).exists(), "missing {name}");
    }
    // No hidden state: two processes, identical CSV bytes.
    for name in ["switching__1.csv", "exact__2.csv"] {
        assert_eq!(
            fs::read(out1.join(name)).unwrap(),
            fs::read(out2.join(name)).unwrap(),
            "{name} differs between processes"
        );
    }
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn seed_and_iteration_overrides() {
    let dir = workdir("overrides");
    let cfg = dir.join("exp.conf");
    fs::write(&cfg, CONFIG).unwrap();
    let out = dir.join("out");
    let status = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed-override",
            "7",
            "--iters-override",
            "10",
            "--quiet",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    // Only seed 7 ran.
    assert!(out.join("switching__7.csv").exists());
    assert!(!out.join("switching__1.csv").exists());
    // 10 iterations -> 11 rows + header.
    let csv = fs::read_to_string(out.join("switching__7.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = workdir("envout");
    let cfg = dir.join("exp.conf");
    fs::write(&cfg, CONFIG).unwrap();
    let out_env = dir.join("from_env");
    let status = bin()
        .current_dir(&dir)
        .env("DQOPT_OUT_DIR", out_env.to_str().unwrap())
        .args(["--config", cfg.to_str().unwrap(), "--quiet"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_env.join("summary.kv").exists());

    // --out wins over the environment.
    let out_flag = dir.join("from_flag");
    let status = bin()
        .current_dir(&dir)
        .env("DQOPT_OUT_DIR", dir.join("ignored").to_str().unwrap())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_flag.to_str().unwrap(),
            "--quiet",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_flag.join("summary.kv").exists());
    assert!(!dir.join("ignored").exists());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn usage_errors_exit_2() {
    // Unknown flag.
    let out = bin().args(["--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("usage:"), "{stderr}");

    // Missing required flag.
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Duplicate flags conflict.
    let out = bin()
        .args(["--config", "a", "--config", "b"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate"));
}

#[test]
fn config_errors_exit_2_and_name_the_problem() {
    let dir = workdir("badcfg");
    let cfg = dir.join("exp.conf");
    fs::write(&cfg, CONFIG.replace("alpha = 0.62", "alpha = 0.7")).unwrap();
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("alpha"), "{stderr}");

    fs::write(&cfg, CONFIG.replace("[variant.exact]", "[variant.exact]\nbogus_key = 1")).unwrap();
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn missing_config_file_exits_nonzero() {
    let out = bin()
        .args(["--config", "/nonexistent/nowhere.conf"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn divergence_aborts_with_exit_1() {
    // A fixed gradient stepsize far above the curvature scale blows up the
    // unbounded-below quadratic; the run must abort with a diagnostic.
    let diverging = CONFIG
        .replace(
            "[objective]\nkind = logistic",
            "[objective]\nkind = quadratic_saddle\n\n[objective.quadratic]\ndim = 3\nmargin = 1.0",
        )
        .replace("point = 0,0", "point = 1,1,1")
        .replace("iters = 40", "iters = 100000")
        .replace(
            "[variant.exact]\nscheme = identity\n",
            "[variant.exact]\nscheme = identity\nstepsize = constant\neps_const = 1.0\neta_const = 3.0\n",
        )
        .replace("[variant.switching]\nscheme = switching\n", "");
    let dir = workdir("diverge");
    let cfg = dir.join("exp.conf");
    fs::write(&cfg, diverging).unwrap();
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap(), "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("divergence"), "{stderr}");
    let _ = fs::remove_dir_all(&dir);
}
