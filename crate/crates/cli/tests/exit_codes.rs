use std::path::{Path, PathBuf};
use std::process::Command;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn perflab(out: &Path, args: &[&str]) -> (i32, String) {
    let output = Command::new(env!("CARGO_BIN_EXE_perflab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("PERFLAB_SEED")
        .output()
        .unwrap();
    (output.status.code().unwrap(), String::from_utf8_lossy(&output.stderr).into_owned())
}

#[test]
fn closed_form_landscape_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let inst = config("canonical.toml");
    let (code, err) = perflab(dir.path(), &["landscape", "--closed-form", "--instance", inst.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(dir.path().join("landscape.csv")).unwrap();
    assert!(csv.starts_with("# perflab-schema v1\n"));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn unknown_condition_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = perflab(dir.path(), &["verify", "--closed-form", "--conditions", "convexish"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn bad_method_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = perflab(dir.path(), &["solve", "--method", "newton"]);
    assert_eq!(code, 2);
}

#[test]
fn invalid_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config("canonical.toml")).unwrap();
    std::fs::write(&bad, text.replace("sigma = 1.0", "sigma = -1.0")).unwrap();
    let (code, err) = perflab(dir.path(), &["landscape", "--closed-form", "--instance", bad.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("map.sigma"), "{err}");
}

#[test]
fn missing_instance_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let (code, _) = perflab(dir.path(), &["landscape", "--instance", missing.to_str().unwrap()]);
    assert_eq!(code, 5);
}

#[test]
fn declared_sensitivity_too_small_is_violated() {
    let dir = tempfile::tempdir().unwrap();
    let inst = config("canonical_declared.toml");
    let (code, err) = perflab(
        dir.path(),
        &["verify", "--closed-form", "--conditions", "sens", "--instance", inst.to_str().unwrap()],
    );
    assert_eq!(code, 3, "{err}");
    let reports = std::fs::read_to_string(dir.path().join("reports.json")).unwrap();
    assert!(reports.contains("\"violated\""), "{reports}");
}

#[test]
fn closed_form_on_strategic_map_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = config("strategic.toml");
    let (code, err) = perflab(dir.path(), &["landscape", "--closed-form", "--instance", inst.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
}
