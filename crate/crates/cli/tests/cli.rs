use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ictrack"));
    c.env_remove("ICTRACK_OUT_DIR");
    c
}

fn cache() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("ictrack-cli-cache")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

#[test]
fn missing_config_names_the_path() {
    let o = run(&["run", "--config", "/no/such/dir/exp.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let v = stderr_json(&o);
    assert_eq!(v["error"], "io");
    assert!(v["message"].as_str().unwrap().contains("/no/such/dir/exp.toml"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["run", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn validate_reports_violated_halfspaces() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("lemniscate06.toml")).unwrap().replace("a_y = 1.0", "a_y = 2.5");
    let cfg = dir.path().join("wide.toml");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let v = stderr_json(&o);
    assert_eq!(v["error"], "config");
    let list: Vec<String> =
        v["violations"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect();
    assert!(list.iter().any(|s| s.contains("[1, 0]·x ≤ 2")), "{list:?}");
    assert!(list.iter().any(|s| s.contains("[-1, 0]·x ≤ 2")), "{list:?}");
}

#[test]
fn malformed_config_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "duration = 1.0\n[trajectory]\nkind = \"hold\"\nspeed = 3\n").unwrap();
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "parse");
}

#[test]
fn hover_run_writes_reports_and_replots_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = configs().join("hover.toml");
    let cache = cache();
    let o = bin()
        .args(["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(["--cache", cache.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trace_LQR.csv", "path.svg", "solve_times.svg", "metrics.csv", "timing.csv", "report.md", "report.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().nth(1).unwrap(), "LQR,0,,0,,0,,201,ok");

    let again = dir.path().join("replot");
    let o = run(&["plot", "--traces", out.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["path.svg", "solve_times.svg"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn environment_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from_env");
    let cfg = configs().join("hover.toml");
    let o = bin()
        .env("ICTRACK_OUT_DIR", &out)
        .args(["run", "--config", cfg.to_str().unwrap(), "--cache", cache().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("metrics.csv").is_file());
}

#[test]
fn plot_without_traces_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["plot", "--traces", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "invalid_argument");
}

#[test]
fn synth_prints_gains_and_writes_sets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("hover.toml");
    let o = bin()
        .args(["synth", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .args(["--cache", cache().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("y-axis") && text.contains("z-axis") && text.contains("K = ["), "{text}");
    let sets = std::fs::read_to_string(dir.path().join("design_sets.csv")).unwrap();
    assert!(sets.contains("# y/omega_high") && sets.contains("# z/omega_low"));
}
