use std::path::Path;
use std::process::{Command, Output};

fn bvmfg(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bvmfg"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.conf");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn solve_on_the_decoupled_preset() {
    let dir = tempfile::tempdir().unwrap();
    let out = bvmfg(&["solve-mfg"], Some("[model]\npreset = decoupled\n[grid]\nnx = 81\n"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    for f in ["mu_star.csv", "value.csv", "policy.csv", "residuals.csv", "meta.json", "summary.txt", "manifest.json"] {
        assert!(o.join(f).exists(), "{f} missing");
    }
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("meta.json")).unwrap()).unwrap();
    assert!(meta["residual_history"].as_array().unwrap().len() <= 3);
    assert_eq!(meta["converged"], true);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bvmfg(&["solve-mfg"], Some("[model]\npreset = decoupled\ngamm1 = 0.5\n"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "config");
    assert_eq!(err["key"], "gamm1");
    assert_eq!(err["line"], 3);
}

#[test]
fn too_coarse_time_grid_reports_cfl() {
    let dir = tempfile::tempdir().unwrap();
    let out = bvmfg(&["solve-mfg"], Some("[grid]\nnx = 101\nnt = 3\n"), dir.path());
    assert_eq!(out.status.code(), Some(4));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "cfl");
    assert!(err["suggested_nt"].as_u64().unwrap() > 3);
}

#[test]
fn non_convergence_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bvmfg(&["solve-mfg"], Some("[grid]\nnx = 61\n[solver]\nmax_iter = 2\n"), dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "non_convergence");
    assert!(dir.path().join("out/mu_star.csv").exists());
    assert!(dir.path().join("out/manifest.json").exists());
}

#[test]
fn manifest_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = bvmfg(&["check-assumptions"], Some("[experiment]\nassumption_samples = 50\n"), dir.path());
    assert!(out.status.success());
    assert!(bvmfg(&["verify"], None, dir.path()).status.success());
    let file = dir.path().join("out/assumptions.json");
    let mut text = std::fs::read_to_string(&file).unwrap();
    text.push(' ');
    std::fs::write(&file, text).unwrap();
    let out = bvmfg(&["verify"], None, dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "verification");
    assert_eq!(err["mismatched"][0]["file"], "assumptions.json");
}

const SMALL_SWEEP: &str = "[grid]\nnx = 61\n[experiment]\nn_values = 8, 16, 32\nreplications = 6\n";

#[test]
fn sweep_n_is_reproducible_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(bvmfg(&["sweep-n", "--threads", "1"], Some(SMALL_SWEEP), a.path()).status.success());
    assert!(bvmfg(&["sweep-n", "--threads", "3"], Some(SMALL_SWEEP), b.path()).status.success());
    for f in ["gap_report.csv", "gap_report.json", "summary.txt", "equilibrium/mu_star.csv"] {
        let x = std::fs::read(a.path().join("out").join(f)).unwrap();
        let y = std::fs::read(b.path().join("out").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let csv = std::fs::read_to_string(a.path().join("out/gap_report.csv")).unwrap();
    assert!(csv.starts_with("N,coupling_err_sq,coupling_se,gap,gap_se\n"));
    assert!(csv.contains("# slope_coupling = "));
}

#[test]
fn seed_flag_overrides_the_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(bvmfg(&["sweep-n", "--seed", "1"], Some(SMALL_SWEEP), a.path()).status.success());
    assert!(bvmfg(&["sweep-n", "--seed", "2"], Some(SMALL_SWEEP), b.path()).status.success());
    let read = |d: &Path| std::fs::read(d.join("out/gap_report.csv")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(b.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 2);
    assert_eq!(manifest["config"]["experiment"]["seed"], "2");
}
