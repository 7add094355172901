//! The binary end to end: exit codes, output files, configuration lookup
//! and sweep goldens.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_microforge");

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn microforge(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("MICROFORGE_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

const PASSING: &str = r#"
schema_version = 1
[metadata]
name = "drive"
duration = 1.0
[world]
water_fraction = 1.0
[[world.bodies]]
id = "base"
kind = "type2_base"
pose = [0.0, 0.0, 0.0]
[[script]]
t = 0.0
action = "mark"
name = "start"
[[script]]
t = 0.0
action = "field"
base = "base"
grad_x = 1.0
grad_y = 0.0
[[script]]
t = 1.0
action = "assert"
predicate = "moved_at_least"
body = "base"
mark = "start"
distance = 40.0
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn passing_run_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write(dir.path(), "drive.scn", PASSING);
    let out = dir.path().join("out");
    let o = microforge(&out, &["run", scn.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(out.join("drive/trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("time,body,x,y,theta,lambda,water_fraction,mate_state"));
    assert_eq!(trace.lines().count(), 1 + 101);
    let last: Vec<&str> = trace.lines().last().unwrap().split(',').collect();
    assert_eq!(last[0], "1");
    let x: f64 = last[2].parse().unwrap();
    assert!((x - 50.0).abs() < 1.0, "x = {x}");
    let transitions = std::fs::read_to_string(out.join("drive/transitions.csv")).unwrap();
    assert_eq!(transitions.trim(), "time,base,effector,from,to,can_insert,interference_locked,locked,solvent_target");
}

#[test]
fn failed_assertion_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write(dir.path(), "drive.scn", &PASSING.replace("distance = 40.0", "distance = 60.0"));
    let o = microforge(&dir.path().join("out"), &["run", scn.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("assertion failed"));
}

#[test]
fn schema_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        PASSING.replace("schema_version = 1", "schema_version = 7"),
        PASSING.replace("[world]", "[world]\ngravity = 9.8"),
        PASSING.replace("kind = \"type2_base\"", "kind = \"type9_base\""),
        PASSING.replace("t = 1.0", "t = 5.0"),
        "this is not toml".to_string(),
    ];
    for (i, text) in cases.iter().enumerate() {
        let scn = write(dir.path(), &format!("bad{i}.scn"), text);
        let o = microforge(&dir.path().join("out"), &["run", scn.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(3), "case {i}: {}", String::from_utf8_lossy(&o.stdout));
    }
}

#[test]
fn missing_file_exits_one_and_worst_code_wins() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "drive.scn", PASSING);
    let out = dir.path().join("out");
    let o = microforge(&out, &["run", "/nonexistent/x.scn"]);
    assert_eq!(o.status.code(), Some(1));
    let bad = write(dir.path(), "bad.scn", "nope");
    let o = microforge(&out, &["run", "--jobs", "3", good.to_str().unwrap(), "/nonexistent/x.scn", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn seed_and_dt_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write(dir.path(), "drive.scn", PASSING);
    let out = dir.path().join("out");
    let o = microforge(&out, &["--dt", "0.0005", "--seed", "5", "run", scn.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    // too large for the coil model
    let o = microforge(&out, &["--dt", "0.5", "run", scn.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn config_comes_from_flag_or_environment() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write(dir.path(), "drive.scn", PASSING);
    let out = dir.path().join("out");
    // a weaker coil limit makes the scripted distance unreachable
    let cfg = write(dir.path(), "weak.toml", "[world.coil]\ncoil_limit = 0.5\n");
    let o = microforge(&out, &["--config", cfg.to_str().unwrap(), "run", scn.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let o = Command::new(BIN)
        .args(["--out", out.to_str().unwrap(), "run", scn.to_str().unwrap()])
        .env("MICROFORGE_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let broken = write(dir.path(), "broken.toml", "[world]\nno_such_key = 1\n");
    let o = microforge(&out, &["--config", broken.to_str().unwrap(), "run", scn.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

fn parse_csv(text: &str) -> (String, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn sweeps_match_goldens() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["swell_curve", "transition_curve", "bilayer_ratio", "cycle_repeat"] {
        let o = microforge(dir.path(), &["sweep", kind]);
        assert_eq!(o.status.code(), Some(0), "{kind}");
        let got = std::fs::read_to_string(dir.path().join(format!("{kind}.csv"))).unwrap();
        let want = std::fs::read_to_string(repo().join(format!("crates/cli/tests/golden/{kind}.csv"))).unwrap();
        let (gh, g) = parse_csv(&got);
        let (wh, w) = parse_csv(&want);
        assert_eq!(gh, wh, "{kind}");
        assert_eq!(g.len(), w.len(), "{kind}");
        for (a, b) in g.iter().flatten().zip(w.iter().flatten()) {
            assert!((a - b).abs() <= 2e-9, "{kind}: {a} vs {b}");
        }
    }
}

#[test]
fn sweep_grid_file_and_bad_kind() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write(dir.path(), "grid.toml", "water_points = 3\n");
    let o = microforge(dir.path(), &["sweep", "swell-curve", "--grid", grid.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("swell_curve.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    let o = microforge(dir.path(), &["sweep", "nonsense"]);
    assert_eq!(o.status.code(), Some(1), "usage errors are not assertion failures");
    let bad = write(dir.path(), "bad.toml", "water_points = \"many\"\n");
    let o = microforge(dir.path(), &["sweep", "swell_curve", "--grid", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn letters_command_reports_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let wp = repo().join("scenarios/letters/square.csv");
    let o = microforge(dir.path(), &["letters", wp.to_str().unwrap(), "--base", "type2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("max cross-track"));
    assert!(dir.path().join("square_trace.csv").is_file());
    let o = microforge(dir.path(), &["letters", wp.to_str().unwrap(), "--budget", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not reached"));
}

#[test]
fn serve_reports_busy_port() {
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let scn = repo().join("scenarios/mate_type2.scn");
    let dir = tempfile::tempdir().unwrap();
    let o = microforge(dir.path(), &["serve", "--port", &port, "--scenario", scn.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("already in use"));
}
