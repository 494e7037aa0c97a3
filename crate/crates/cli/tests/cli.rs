use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nlw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlw")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
seed = 3

[equation]
p = 3.0
gamma0 = 1.5

[grid]
r_max = 16.0
dr = 0.0625

[data]
profile = "gaussian"
amplitude = 1.0
width = 1.0

[run]
t_end = 3.0
cadence = 0.5
diagnostics = ["energy", "scattering"]

[sweep]
amplitude = [0.5, 1.0]

[apexes]
t0 = [1.0, 2.0]
r0 = [0.0, 1.0]
random = 3
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");

    let o = nlw(&["run", &cfg, "--out", a.to_str().unwrap(), "--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("0 reused"));
    let o = nlw(&["run", &cfg, "--out", b.to_str().unwrap(), "--jobs", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));

    for file in [
        "summary.txt",
        "point_000/energy.csv",
        "point_001/energy.csv",
        "point_001/scattering.csv",
        "point_001/trajectory.bin",
    ] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs"
        );
    }

    // Re-running reuses the persisted trajectories and reproduces the reports.
    let before = fs::read(a.join("point_000/energy.csv")).unwrap();
    fs::remove_file(a.join("point_000/energy.csv")).unwrap();
    let o = nlw(&["run", &cfg, "--out", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("2 reused"), "{}", stdout(&o));
    assert_eq!(fs::read(a.join("point_000/energy.csv")).unwrap(), before);
}

#[test]
fn changed_config_re_evolves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), SMALL);
    assert!(nlw(&["run", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let cfg = write_config(dir.path(), &SMALL.replace("t_end = 3.0", "t_end = 2.0"));
    let o = nlw(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("0 reused"));
}

#[test]
fn empty_diagnostics_write_trajectory_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL.replace(r#"diagnostics = ["energy", "scattering"]"#, "diagnostics = []"),
    );
    let out = dir.path().join("o");
    let o = nlw(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<_> = fs::read_dir(out.join("point_000"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["point.txt", "trajectory.bin", "trajectory.manifest"]);

    let o = nlw(&["inspect", out.join("point_000/trajectory.manifest").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("7 record(s)"), "{text}");
    assert!(text.contains("p = 3, gamma0 = 1.5"));

    let o = nlw(&[
        "inspect",
        out.join("point_000/trajectory.bin").to_str().unwrap(),
        "--record",
        "0",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1 + 257);
}

#[test]
fn invalid_config_lists_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("gamma0 = 1.5", "gamma0 = 2.5")
        .replace("cadence = 0.5", "cadence = -1.0")
        .replace("t0 = [1.0, 2.0]", "t0 = [1.0, 20.0]");
    let cfg = write_config(dir.path(), &text);
    let o = nlw(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("gamma0"), "{err}");
    assert!(err.contains("cadence"), "{err}");
    assert!(err.contains("apexes.t0[1]"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unparsable_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[equation\np = ");
    assert_eq!(nlw(&["run", &cfg]).status.code(), Some(2));
    assert_eq!(nlw(&["run", "/nonexistent/config.toml"]).status.code(), Some(2));
    let cfg = write_config(dir.path(), &SMALL.replace("gamma0 = 1.5", "gamma0 = 0.5"));
    assert_eq!(nlw(&["run", &cfg, "--dry-run"]).status.code(), Some(2));
}

#[test]
fn unreliable_decay_fit_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace(
        r#"diagnostics = ["energy", "scattering"]"#,
        r#"diagnostics = ["decay"]"#,
    ) + "\n[decay]\nt_lo = 0.5\nt_hi = 3.0\nfixed_r = [0.0]\nper_band = 10\n";
    let cfg = write_config(dir.path(), &text);
    let o = nlw(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("decay"));
    let summary = fs::read_to_string(dir.path().join("o/summary.txt")).unwrap();
    assert!(summary.contains("FAILED decay"));
}

#[test]
fn verify_scattering_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = nlw(&["verify", "scattering", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("[PASS]"));
    assert!(text.contains("p* = 2.35417"));
    let csv = fs::read_to_string(dir.path().join("verify_scattering.csv")).unwrap();
    assert!(csv.starts_with("criterion,name,status"));
}

#[test]
fn verify_rejects_unknown_suite() {
    let o = nlw(&["verify", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("conservation"));
}

#[test]
fn shipped_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let o = nlw(&["run", path.to_str().unwrap(), "--dry-run"]);
        assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
        assert!(stdout(&o).contains("point_000"));
    }
}
