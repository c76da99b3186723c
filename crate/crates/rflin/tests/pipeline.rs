//! End-to-end tests of the `rflin` command-line tool: stage ordering,
//! artifact resumability, exit-code classes, and report content.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn rflin(model: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rflin"))
        .arg("--model")
        .arg(model)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("failed to launch rflin")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn check_passes_on_shipped_models() {
    for name in ["pendulum.toml", "double_integrator.toml", "ahfv.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let out = rflin(&models().join(name), dir.path(), &["check"]);
        assert!(out.status.success(), "{name}: {}", stderr(&out));
        assert!(stdout(&out).contains("ok"), "{name}: {}", stdout(&out));
    }
}

#[test]
fn non_square_model_exits_with_parse_code() {
    let text = std::fs::read_to_string(models().join("pendulum.toml")).unwrap();
    let broken = text.replace(r#"outputs = ["x1"]"#, r#"outputs = ["x1", "x2"]"#);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, broken).unwrap();
    let out = rflin(&path, dir.path(), &["check"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not square"), "{}", stderr(&out));
}

#[test]
fn missing_coefficient_value_is_reported_by_name() {
    let text = std::fs::read_to_string(models().join("ahfv.toml")).unwrap();
    let broken = text.replace("nominal = 4.6773\n", "");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unset.toml");
    std::fs::write(&path, broken).unwrap();
    let out = rflin(&path, dir.path(), &["check"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("parameter value missing: cla"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn unreachable_input_exits_with_degree_code() {
    // The input never influences the output chain, so no relative degree
    // exists; the linearize stage must fail with its own exit class.
    let model = r#"
format = 1
name = "no_degree"
dynamics = ["x2", "-x1"]
outputs = ["x1"]

[[states]]
name = "x1"
trim = 0.0

[[states]]
name = "x2"
trim = 0.0

[[inputs]]
name = "u"
trim = 0.0

[box]
chi_lo = [-1.0, -1.0, -1.0]
chi_hi = [1.0, 1.0, 1.0]
v_lo = [-1.0]
v_hi = [1.0]

[weights]
q = [1.0, 1.0, 1.0]
r = [1.0]
"#;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("no_degree.toml");
    std::fs::write(&path, model).unwrap();
    let out = rflin(&path, dir.path(), &["linearize"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn exit_codes_cover_every_failure_class() {
    use rflin::Error;
    assert_eq!(Error::Model("m".into()).exit_code(), 2);
    assert_eq!(Error::Parse { msg: "p".into(), line: 1, col: 1 }.exit_code(), 2);
    assert_eq!(Error::Degree("d".into()).exit_code(), 3);
    assert_eq!(Error::Bound("b".into()).exit_code(), 4);
    assert_eq!(Error::Riccati("r".into()).exit_code(), 5);
    assert_eq!(Error::Sim("s".into()).exit_code(), 6);
}

#[test]
fn stages_require_prior_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let model = models().join("pendulum.toml");
    for (cmd, missing) in [
        ("bound", "linearize"),
        ("synth", "bound"),
        ("sim", "design"),
        ("plot", "sim"),
    ] {
        let out = rflin(&model, dir.path(), &[cmd]);
        assert!(!out.status.success(), "{cmd} ran without prior artifacts");
        assert!(
            stderr(&out).contains("stage first"),
            "{cmd}: {} (expected gating on {missing})",
            stderr(&out)
        );
    }
}

#[test]
fn hypersonic_linearize_reports_structure() {
    let dir = tempfile::tempdir().unwrap();
    let out = rflin(&models().join("ahfv.toml"), dir.path(), &["linearize"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("r = [3, 4]"), "{text}");
    assert!(text.contains("n_bar = 9"), "{text}");
    let artifact = std::fs::read_to_string(dir.path().join("linearize.txt")).unwrap();
    assert!(artifact.starts_with("rflin linearize artifact v1"));
    assert!(artifact.contains("active_channels = 3 4 7 8 9"), "{artifact}");
}

#[test]
fn zero_uncertainty_synthesis_reports_lqr_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let model = models().join("double_integrator.toml");
    for cmd in ["linearize", "bound"] {
        let out = rflin(&model, dir.path(), &[cmd]);
        assert!(out.status.success(), "{cmd}: {}", stderr(&out));
    }
    let out = rflin(&model, dir.path(), &["synth"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("reduces to standard LQR"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn full_run_produces_artifacts_and_exact_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let model = models().join("pendulum.toml");
    for cmd in ["check", "linearize", "bound", "synth", "sim", "plot"] {
        let out = rflin(&model, dir.path(), &[cmd]);
        assert!(out.status.success(), "{cmd}: {}", stderr(&out));
    }
    for name in [
        "linearize.txt",
        "bound.txt",
        "design.txt",
        "case1.csv",
        "case2.csv",
        "case3.csv",
        "sim_summary.txt",
    ] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("case1.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "t,x1,x2,chi1,chi2,chi3,u1,v1,y1,yc1,cost");
    // 30 s at 1 ms plus header and the t = 0 row.
    assert_eq!(csv.lines().count(), 30_002);
    let svg_count = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            e.as_ref().unwrap().path().extension().map(|x| x == "svg").unwrap_or(false)
        })
        .count();
    assert!(svg_count >= 9, "expected one SVG per case and signal group, got {svg_count}");
}

#[test]
fn deleting_sim_artifacts_resumes_from_stored_design() {
    let dir = tempfile::tempdir().unwrap();
    let model = models().join("pendulum.toml");
    for cmd in ["linearize", "bound", "synth", "sim"] {
        let out = rflin(&model, dir.path(), &[cmd]);
        assert!(out.status.success(), "{cmd}: {}", stderr(&out));
    }
    let design_before = std::fs::read(dir.path().join("design.txt")).unwrap();
    let case1_before = std::fs::read(dir.path().join("case1.csv")).unwrap();

    for name in ["case1.csv", "case2.csv", "case3.csv", "sim_summary.txt"] {
        std::fs::remove_file(dir.path().join(name)).unwrap();
    }
    let out = rflin(&model, dir.path(), &["sim"]);
    assert!(out.status.success(), "{}", stderr(&out));

    let design_after = std::fs::read(dir.path().join("design.txt")).unwrap();
    let case1_after = std::fs::read(dir.path().join("case1.csv")).unwrap();
    assert_eq!(design_before, design_after, "re-running sim touched the design");
    assert_eq!(case1_before, case1_after, "sim rerun is not reproducible");
    assert!(dir.path().join("sim_summary.txt").exists());
}
