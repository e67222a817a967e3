use std::path::Path;
use std::process::Command;

const SCENARIO: &str = include_str!("../../../configs/sinusoid.toml");

fn qosscale(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qosscale")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, policy: &str, fixed: u32) -> String {
    let text = SCENARIO
        .replace("name = \"phoebe\"", &format!("name = \"{policy}\""))
        .replace("static_scaleout = 24", &format!("static_scaleout = {fixed}"))
        .replace("duration_s = 21600", "duration_s = 7200")
        .replace("first_s = 3905", "first_s = 1805")
        .replace("count = 8", "count = 4");
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn invalid_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[policy]\nname = \"magic\"\n").unwrap();
    let out = qosscale(&["run", "--config", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));

    let missing = qosscale(&["profile", "--config", "/nonexistent/x.toml", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn phoebe_without_models_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.toml", "phoebe", 24);
    let out = qosscale(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn profile_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_string_lossy().into_owned();
    let phoebe = write_config(dir.path(), "phoebe.toml", "phoebe", 24);
    let fixed = write_config(dir.path(), "static.toml", "static", 24);

    let out = qosscale(&["profile", "--config", &phoebe, "--out", &d("models")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["models.txt", "profiling.csv", "tmax.csv"] {
        assert!(dir.path().join("models").join(f).is_file(), "{f}");
    }

    let out = qosscale(&["run", "--config", &phoebe, "--models", &d("models"), "--out", &d("phoebe"), "--repeats", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("phoebe/seed-1/metrics.csv").is_file());
    assert!(dir.path().join("phoebe/seed-2/summary.json").is_file());
    assert!(dir.path().join("phoebe/aggregate.json").is_file());

    let out = qosscale(&["--seed", "5", "run", "--config", &fixed, "--out", &d("static")]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("static-24 seed 5"));

    let out = qosscale(&["report", "--runs", &d("static"), &d("phoebe/seed-1"), "--out", &d("cmp")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("cmp/comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}
