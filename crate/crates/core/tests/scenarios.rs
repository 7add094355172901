//! Every bundled scenario runs to completion, and the headline events in
//! each happen when and where they should.

use std::path::PathBuf;

use microforge_core::{run_scenario, BodyId, MatingPhase, MicroforgeConfig, Pose, RunReport, RunStatus, Scenario};

fn library() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(name: &str) -> RunReport {
    let scenario = Scenario::load(&library().join(format!("{name}.scn"))).unwrap();
    let report = run_scenario(&scenario, MicroforgeConfig::default().engine_settings()).unwrap();
    assert_eq!(report.status, RunStatus::Completed, "{name}: {:?}", report.status);
    report
}

fn entered(report: &RunReport, effector: &str, phase: MatingPhase) -> Option<f64> {
    report.transitions.iter().find(|t| t.effector.as_str() == effector && t.to == phase).map(|t| t.time)
}

fn pose(report: &RunReport, body: &str) -> Pose {
    report.engine.world.state.body(&BodyId::new(body)).unwrap().pose
}

#[test]
fn every_bundled_scenario_completes() {
    let mut names: Vec<_> = std::fs::read_dir(library())
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "scn").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    assert_eq!(names.len(), 8);
    for n in names {
        run(&n);
    }
}

#[test]
fn both_bases_lock_within_a_minute() {
    for (name, effector) in [("mate_type1", "tool"), ("mate_type2", "gripper")] {
        let r = run(name);
        let t = entered(&r, effector, MatingPhase::Locked).unwrap_or_else(|| panic!("{name} never locked"));
        assert!(t <= 60.0, "{name} locked at {t}");
        let order: Vec<MatingPhase> = r.transitions.iter().map(|t| t.to).collect();
        assert_eq!(&order[..4], &MatingPhase::ALL[1..5]);
    }
}

#[test]
fn type1_locks_once_the_male_is_back_to_full_width() {
    let r = run("mate_type1");
    let t = entered(&r, "tool", MatingPhase::Locked).unwrap();
    let lambda = r
        .trace
        .iter()
        .filter(|row| row.body.as_str() == "base" && row.time >= t)
        .find_map(|row| row.lambda)
        .unwrap();
    assert!((lambda - 1.0).abs() < 0.02, "lambda {lambda} at lock");
}

#[test]
fn detachment_needs_the_right_conditions() {
    // without walls the shrunken male stays stuck
    let free = run("detach_type1_free");
    assert!(free.engine.world.state.lock_between(&"base".into(), &"tool".into()).is_some());
    assert!(entered(&free, "tool", MatingPhase::Detached).is_none());

    let walled = run("detach_type1_walls");
    assert!(entered(&walled, "tool", MatingPhase::Detached).is_some());

    let gripper = run("detach_type2");
    assert!(entered(&gripper, "gripper", MatingPhase::Detached).is_some());
}

#[test]
fn a_pushed_sphere_travels_and_stays_put_after_release() {
    let r = run("push_single_sphere");
    let start = &r.engine.marks["start"][&BodyId::new("bead")];
    let release = &r.engine.marks["release"][&BodyId::new("bead")];
    assert!((release.position - start.position).norm() >= 300.0);
    let end = pose(&r, "bead");
    assert!((end.position - release.position).norm() <= 200.0);
}

#[test]
fn swapping_trades_the_pusher_for_the_gripper() {
    let r = run("swap_type2");
    let locks = &r.engine.world.state;
    assert!(locks.lock_between(&"base".into(), &"gripper".into()).is_some());
    assert!(locks.lock_between(&"base".into(), &"pusher".into()).is_none());
    let released = entered(&r, "pusher", MatingPhase::Detached).unwrap();
    let relocked = entered(&r, "gripper", MatingPhase::Locked).unwrap();
    assert!(released < relocked);
}
