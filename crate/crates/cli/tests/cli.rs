use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fmcf(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmcf"))
        .args(args)
        .env("FMCF_OUT", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shrinking_circle_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let o = fmcf(&["verify", "--config", "shrinking_circle"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = dir.path().join("shrinking_circle");
    for f in [
        "summary.json",
        "monitors.csv",
        "harnack_report.json",
        "integral_harnack.json",
        "oracle.csv",
        "trace/00000.csv",
        "trace/index.csv",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(run.join("summary.json")).unwrap();
    assert!(summary.contains("\"global_min\""));
    assert!(stdout(&o).contains("shrinking_circle: PASS"));
}

#[test]
fn negative_dt_is_usage_error_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"name":"bad","curve":{"kind":"circle","radius":1,"n":64},
            "flow":{"scheme":"rk4","dt":-0.01,"t_end":0.1}}"#,
    )
    .unwrap();
    let o = fmcf(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("flow.dt"), "{}", stderr(&o));
}

#[test]
fn malformed_json_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("broken.json");
    fs::write(&cfg, "{\"name\": \"x\",\n  \"curve\": {\"kind\": \"circle\", \"radius\": 1, \"n\": 64},\n  \"flow\": {\"scheme\": \"rk9\"}\n}").unwrap();
    let o = fmcf(&["simulate", "-c", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("flow.scheme") && err.contains("line 3"), "{err}");
}

#[test]
fn expanding_sphere_passes_as_vacuous() {
    let dir = tempfile::tempdir().unwrap();
    let o = fmcf(&["verify", "-c", "expanding_sphere_vacuous"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("expanding_sphere_vacuous/summary.json")).unwrap();
    assert!(summary.contains("\"vacuous\": true"));
    assert!(stdout(&o).contains("harnack=vacuous"));
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.json");
    fs::write(
        &cfg,
        r#"{"name":"strict","curve":{"kind":"circle","radius":1,"n":32},
            "flow":{"scheme":"explicit_euler","dt":0.002,"t_end":0.2,"record_every":10},
            "checks":[{"check":"radial_oracle","rel_tol":1e-9}]}"#,
    )
    .unwrap();
    let o = fmcf(&["verify", "-c", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("radial_oracle=FAIL"));
}

#[test]
fn list_and_describe() {
    let dir = tempfile::tempdir().unwrap();
    let o = fmcf(&["list"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().count() >= 6);

    let o = fmcf(&["describe", "differential_harnack"], dir.path());
    assert!(stdout(&o).contains("∂ₜH_f + 2⟨∇H_f,V⟩ + h(V,V) ≥ 0"));
    let o = fmcf(&["describe", "pinch"], dir.path());
    assert!(stdout(&o).contains("inf H_f + λ − 2μ ≤ 0"));
    let o = fmcf(&["describe", "curvature_magic"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_table_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = fmcf(
        &["oracle", "--r0", "2", "--c", "0", "--t-end", "1.5", "--samples", "4", "--nodes", "128"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,R_exact,R_sim,abs_err"));
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 1.5);
    assert!((last[1] - 1.0).abs() < 1e-12 && last[3] < 1e-4);
    assert!(dir.path().join("oracle.csv").exists());

    let o = fmcf(&["oracle", "--r0", "1", "--c", "0", "--t-end", "0.6"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("extinction"));
}

#[test]
fn summaries_are_reproducible_across_job_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let names = ["-c", "gauss_circle_integral", "-c", "anisotropic_circle"];
    let mut serial = vec!["verify", "-j", "1"];
    serial.extend(names);
    let mut parallel = vec!["verify", "-j", "2"];
    parallel.extend(names);
    assert_eq!(fmcf(&serial, a.path()).status.code(), Some(0));
    assert_eq!(fmcf(&parallel, b.path()).status.code(), Some(0));
    for name in ["gauss_circle_integral", "anisotropic_circle"] {
        let sa = fs::read(a.path().join(name).join("summary.json")).unwrap();
        let sb = fs::read(b.path().join(name).join("summary.json")).unwrap();
        assert_eq!(sa, sb, "{name}");
    }
}

#[test]
fn out_flag_overrides_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = fmcf(
        &["simulate", "-c", "f_minimal_circle", "--out", flag_dir.path().to_str().unwrap()],
        env_dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.path().join("f_minimal_circle/summary.json").exists());
    assert!(!env_dir.path().join("f_minimal_circle").exists());
}
