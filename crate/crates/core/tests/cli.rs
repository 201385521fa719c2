use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_powertalk"));
    cmd.env_remove("POWERTALK_OUT_DIR");
    cmd
}

fn scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/reference.toml")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn validate_prints_summary() {
    let out = bin().arg("validate").arg(scenario()).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("buses 1, DERs 10, types 4"));
    assert!(text.contains("signaling amplitude"));
}

#[test]
fn run_is_reproducible_byte_for_byte() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = bin().arg("run").arg(scenario()).arg("--out").arg(d.path()).arg("--seed").arg("17").output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for name in ["slots.csv", "ders.csv", "summary.csv", "manifest.toml"] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn output_directory_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = bin()
        .current_dir(dir.path())
        .env("POWERTALK_OUT_DIR", &target)
        .arg("run")
        .arg(scenario())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(target.join("summary.csv").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn experiment_writes_csv_script_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["exp", "detection", "--trials", "200", "--scenario"])
        .arg(scenario())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("detection.csv")).unwrap();
    // header plus 5 budgets x 3 group sizes
    assert_eq!(csv.lines().count(), 16);
    assert!(dir.path().join("detection.gp").exists());
    let manifest = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("experiment = \"detection\""));
    assert!(manifest.contains("trials = 200"));
}

fn write_scenario(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("s.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let reference = fs::read_to_string(scenario()).unwrap();

    let missing = bin().arg("validate").arg(dir.path().join("absent.toml")).output().unwrap();
    assert_eq!(missing.status.code(), Some(7));
    assert!(stderr(&missing).starts_with("error[io]"));

    let garbled = write_scenario(dir.path(), &reference.replace("buses = 1", "buses = 1\nflux = 3"));
    let out = bin().arg("validate").arg(&garbled).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));

    let unsorted = write_scenario(dir.path(), &reference.replace("[5.0, 7.5, 10.0, 50.0]", "[5.0, 10.0, 7.5, 50.0]"));
    let out = bin().arg("validate").arg(&unsorted).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).starts_with("error[validation]"));

    let overloaded = write_scenario(dir.path(), &reference.replace("constant_power = 5000.0", "constant_power = 5.0e7"));
    let out = bin().arg("validate").arg(&overloaded).output().unwrap();
    assert_eq!(out.status.code(), Some(5), "{}", stderr(&out));
}
