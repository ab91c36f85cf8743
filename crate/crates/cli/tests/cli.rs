use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn phasepop(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_phasepop"));
    cmd.args(args).env_remove("PHASEPOP_OUTPUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// Small random-migration scenario writing into `out`.
fn small_config(out: &Path, times: &str, l1_threshold: f64) -> String {
    format!(
        r#"{{
  "model": "random_migration",
  "grid": {{ "axes": [ {{ "name": "n", "lo": 0, "hi": 12, "count": 241 }} ] }},
  "initial": {{ "components": [
    {{ "center": [4.2], "sigma": [0.6], "weight": 0.5 }},
    {{ "center": [7.2], "sigma": [0.6], "weight": 0.5 }} ] }},
  "params": {{ "beta": 1.0 }},
  "times": {times},
  "oracle": {{ "enabled": true, "members": 4000, "dt": 1e-3, "bins": 60, "l1_threshold": {l1_threshold} }},
  "output_dir": "{}"
}}"#,
        out.display()
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn version_flag() {
    let o = phasepop(&["--version"], &[]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("phasepop "), "{text}");
    assert!(text.contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn clean_run_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(tmp.path(), "ok.json", &small_config(&out, "[0, 0.5, 1]", 0.05));
    let o = phasepop(&["verify", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["field_t0.csv", "marginal_t2.csv", "summary.csv", "histogram_t1.csv", "checks.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn negative_time_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(tmp.path(), "bad.json", &small_config(&out, "[0, -0.5]", 0.05));
    let o = phasepop(&["run", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    // points at the offending line
    assert!(err.contains("bad.json:8:"), "{err}");
    assert!(!out.exists(), "no files may be written on a config error");
}

#[test]
fn unknown_key_and_model_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let base = small_config(&out, "[0, 0.5]", 0.05);
    let cfg = write(tmp.path(), "typo.json", &base.replace("\"times\"", "\"time\""));
    assert_eq!(phasepop(&["run", cfg.to_str().unwrap()], &[]).status.code(), Some(2));
    let cfg = write(tmp.path(), "model.json", &base.replace("random_migration", "gompertz"));
    let o = phasepop(&["run", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("random_migration"), "known models should be listed");
    let cfg = write(tmp.path(), "missing.json", "");
    assert_eq!(phasepop(&["run", tmp.path().join("nope.json").to_str().unwrap()], &[]).status.code(), Some(2));
    assert_eq!(phasepop(&["run", cfg.to_str().unwrap()], &[]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn verify_needs_an_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let text =
        small_config(&tmp.path().join("out"), "[0, 0.5]", 0.05).replace("\"enabled\": true", "\"enabled\": false");
    let cfg = write(tmp.path(), "no_oracle.json", &text);
    assert_eq!(phasepop(&["verify", cfg.to_str().unwrap()], &[]).status.code(), Some(2));
}

#[test]
fn zero_l1_threshold_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(tmp.path(), "strict.json", &small_config(&out, "[0, 0.5]", 0.0));
    let o = phasepop(&["run", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(out.join("summary.csv").is_file());
    let o = phasepop(&["verify", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(4));
    let checks = fs::read_to_string(out.join("checks.csv")).unwrap();
    assert!(checks.lines().any(|l| l.starts_with("\"oracle L1") && l.ends_with(",false")), "{checks}");
}

#[test]
fn self_interaction_breakdown_exits_three_with_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let text = fs::read_to_string(scenario_path("fig7.json")).unwrap();
    let text = text
        .replace("\"times\": [0, 0.054, 0.09]", "\"times\": [0, 0.054, 0.09, 0.12]")
        .replace("\"enabled\": true", "\"enabled\": false");
    let cfg = write(tmp.path(), "breakdown.json", &text);
    let o = phasepop(&["run", cfg.to_str().unwrap()], &[("PHASEPOP_OUTPUT_DIR", &out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("t = 0.12"));
    assert!(out.join("field_t2.csv").is_file());
    assert!(!out.join("field_t3.csv").exists());
    let fp = fs::read_to_string(out.join("fixed_point.csv")).unwrap();
    let last = fp.lines().last().unwrap();
    assert!(last.starts_with("0.12,false,"), "{fp}");
}

#[test]
fn env_var_overrides_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let configured = tmp.path().join("configured");
    let overridden = tmp.path().join("overridden");
    let cfg = write(tmp.path(), "env.json", &small_config(&configured, "[0, 0.5]", 0.05));
    let o = phasepop(&["run", cfg.to_str().unwrap()], &[("PHASEPOP_OUTPUT_DIR", &overridden)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(overridden.join("summary.csv").is_file());
    assert!(!configured.exists());
}
