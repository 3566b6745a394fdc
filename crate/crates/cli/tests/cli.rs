use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn offgrid(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_offgrid"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn staged_commands_reproduce_a_full_run() {
    let staged = tempfile::tempdir().unwrap();
    let full = tempfile::tempdir().unwrap();
    let flags = ["--seed", "3", "--max-iters", "40"];
    for stage in ["gen-truth", "simulate", "init", "solve", "eval", "plot"] {
        let mut args = vec![stage];
        args.extend(flags);
        let out = offgrid(&args, staged.path());
        assert!(
            out.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let mut args = vec!["run"];
    args.extend(flags);
    let out = offgrid(&args, full.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    for name in [
        "truth.json",
        "scheme.json",
        "measurements.json",
        "init.json",
        "final.json",
        "trace.json",
        "trace.csv",
        "spectral.pgm",
        "trajectories.svg",
    ] {
        let a = fs::read(staged.path().join(name)).unwrap();
        let b = fs::read(full.path().join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    let mut a = json(&staged.path().join("report.json"));
    let mut b = json(&full.path().join("report.json"));
    a["wall_time_s"] = 0.into();
    b["wall_time_s"] = 0.into();
    assert_eq!(a, b);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = offgrid(
        &["run", "--seed", "9", "--no-projection", "--max-iters", "5"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cfg = json(&dir.path().join("config.json"));
    assert_eq!(cfg["seed"], 9);
    assert_eq!(cfg["solver"]["projection_enabled"], false);
    assert_eq!(cfg["solver"]["max_iters"], 5);
    let trace = json(&dir.path().join("trace.json"));
    assert_eq!(trace["iterations"].as_array().unwrap().len(), 6);
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"d":1,"k":2,"epsilon":0.2,"domain_box":{"lower":[0],"upper":[1]},
            "scheme":{"kind":"gaussian","m":40,"sigma":15.0},
            "init":{"epsilon_g":0.01,"k_in":6},"solver":{"max_iters":20},"seed":2}"#,
    )
    .unwrap();
    let out = offgrid(
        &["run", "--config", path.to_str().unwrap()],
        &dir.path().join("run"),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&dir.path().join("run/report.json"));
    assert_eq!(report["truth_count"], 2);
}

#[test]
fn missing_inputs_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = offgrid(&["simulate"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("simulate stage failed"), "{stderr}");
    assert!(stderr.contains("truth.json"), "{stderr}");
}

#[test]
fn infeasible_packing_fails_in_gen_truth() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"d":1,"k":50,"epsilon":0.5,"domain_box":{"lower":[0],"upper":[1]},
            "scheme":{"kind":"regular","f_c":4,"base":6.283185307179586},
            "init":{"epsilon_g":0.01,"k_in":6}}"#,
    )
    .unwrap();
    for command in ["run", "gen-truth"] {
        let out = offgrid(&[command, "--config", path.to_str().unwrap()], dir.path());
        assert!(!out.status.success());
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains("gen-truth stage failed"), "{stderr}");
    }
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = offgrid(&["run", "--max-iters", "0"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_iters"));
}
