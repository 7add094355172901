//! The mating state machine under random observations, and the command
//! plans for swapping end effectors.

use microforge_core::mating::{swap_end_effector, Observation, PlanStep, TypeTag, WaitFor};
use microforge_core::world::MateGeometryReport;
use microforge_core::world::{BodySpec, Channel, ConstraintGap, LockSpec};
use microforge_core::{BodyKind, FsmParams, MatingFsm, MatingPhase, Pose, Vec2, World, WorldParams, WorldSpec};
use proptest::prelude::*;

fn report(can_insert: bool, inside: bool, interference: bool) -> MateGeometryReport {
    MateGeometryReport {
        clearance_x: 0.0,
        clearance_y: 0.0,
        can_insert,
        interference_locked: interference,
        axial_error: 0.0,
        lateral_error: 0.0,
        angle_error: 0.0,
        inside,
        male_width_um: 60.0,
        opening_um: 62.0,
    }
}

fn observation() -> impl Strategy<Value = Observation> {
    (0.0f64..800.0, any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>(), 0.0f64..=1.0, -5.0f64..40.0).prop_map(
        |(d, ins, inside, interf, locked, target, sep)| Observation {
            time: 0.0,
            anchor_distance: d,
            report: report(ins, inside, interf),
            locked,
            solvent_target: target,
            separation: sep,
        },
    )
}

proptest! {
    #[test]
    fn only_guarded_successor_edges_are_taken(obs in prop::collection::vec(observation(), 1..200)) {
        let p = FsmParams::default();
        let mut fsm = MatingFsm::new("b".into(), "e".into(), TypeTag::Type1, MatingPhase::Disengaged, 0.0);
        for (i, mut o) in obs.into_iter().enumerate() {
            o.time = i as f64;
            let before = fsm.state;
            let guard = fsm.guard(&o, &p);
            match fsm.advance(&o, &p) {
                Some(t) => {
                    prop_assert!(guard.is_ok());
                    prop_assert_eq!(t.from, before);
                    prop_assert_eq!(t.to, before.successor());
                    prop_assert_eq!(fsm.state, t.to);
                    prop_assert_eq!(t.time, o.time);
                }
                None => {
                    prop_assert!(guard.is_err());
                    prop_assert_eq!(fsm.state, before);
                }
            }
            // entering Locked needs a world lock; entering Detached needs none
            if fsm.state != before {
                prop_assert!(fsm.consistent_with(o.locked));
            }
        }
        let times: Vec<f64> = fsm.timestamps.iter().map(|t| t.1).collect();
        prop_assert!(times.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn requests_off_the_graph_are_refused(from in 0usize..7, to in 0usize..7, o in observation()) {
        let (from, to) = (MatingPhase::ALL[from], MatingPhase::ALL[to]);
        prop_assume!(to != from.successor());
        let p = FsmParams::default();
        let mut fsm = MatingFsm::new("b".into(), "e".into(), TypeTag::Type2, from, 0.0);
        prop_assert!(fsm.request(to, &o, &p).is_err());
        prop_assert_eq!(fsm.state, from);
    }
}

#[test]
fn the_happy_path_visits_every_state_in_order() {
    let p = FsmParams::default();
    let mut fsm = MatingFsm::new("b".into(), "e".into(), TypeTag::Type1, MatingPhase::Disengaged, 0.0);
    let base = Observation {
        time: 0.0,
        anchor_distance: 100.0,
        report: report(true, true, false),
        locked: false,
        solvent_target: 1.0,
        separation: 0.0,
    };
    let steps = [
        base,
        base,
        Observation { solvent_target: 0.4, ..base },
        Observation { solvent_target: 0.4, locked: true, ..base },
        Observation { solvent_target: 1.0, locked: true, ..base },
        Observation { solvent_target: 1.0, locked: false, separation: 20.0, ..base },
    ];
    for o in steps {
        assert!(fsm.advance(&o, &p).is_some(), "stuck in {}", fsm.state);
    }
    let visited: Vec<MatingPhase> = fsm.timestamps.iter().map(|t| t.0).collect();
    assert_eq!(visited, MatingPhase::ALL.to_vec());
}

fn pair_world(base: BodyKind, first: BodyKind, second: BodyKind, channel: Channel) -> World {
    let spec = WorldSpec {
        bodies: vec![
            BodySpec::new("base", base, Pose::new(-100.0, 0.0, 0.0)),
            BodySpec::new("first", first, Pose::default()),
            BodySpec::new("second", second, Pose::new(0.0, 300.0, 0.0)),
        ],
        locks: vec![LockSpec { base: "base".into(), effector: "first".into() }],
        channel,
        ..WorldSpec::default()
    };
    World::from_spec(&spec, WorldParams::default(), 1).unwrap()
}

#[test]
fn type2_swap_plan() {
    let w = pair_world(
        BodyKind::Type2Base,
        BodyKind::EndEffectorGripper,
        BodyKind::EndEffectorGripper,
        Channel::default(),
    );
    let p = FsmParams::default();
    let plan = swap_end_effector(&w, &"base".into(), &"first".into(), &"second".into(), &p).unwrap();
    assert_eq!(
        plan,
        vec![
            PlanStep::Solvent { target: 1.0 },
            PlanStep::Wait(WaitFor::Unlocked { effector: "first".into() }),
            PlanStep::BackOff { distance_um: 80.0 },
            PlanStep::Dock { effector: "second".into() },
            PlanStep::Solvent { target: 0.4 },
            PlanStep::Wait(WaitFor::Locked { effector: "second".into() }),
        ]
    );
    assert!(swap_end_effector(&w, &"base".into(), &"first".into(), &"first".into(), &p).unwrap().is_empty());
    assert!(swap_end_effector(&w, &"base".into(), &"second".into(), &"first".into(), &p).is_err());
}

#[test]
fn type1_swap_needs_constraint_walls() {
    let p = FsmParams::default();
    let open = pair_world(BodyKind::Type1Base, BodyKind::EndEffectorSingle, BodyKind::EndEffectorMulti, Channel::default());
    assert!(swap_end_effector(&open, &"base".into(), &"first".into(), &"second".into(), &p).is_err());
    let walled = Channel {
        enclosure: true,
        constraint_gap: Some(ConstraintGap { center: Vec2::new(300.0, 0.0), heading: 0.0 }),
        ..Channel::default()
    };
    let w = pair_world(BodyKind::Type1Base, BodyKind::EndEffectorSingle, BodyKind::EndEffectorMulti, walled);
    let plan = swap_end_effector(&w, &"base".into(), &"first".into(), &"second".into(), &p).unwrap();
    let PlanStep::Goto { target, heading } = plan[0] else { panic!("plan starts by parking in the gap") };
    // effector centred in the gap, base behind it
    let mated = w.params.mate.mated_offset();
    assert!((target.x - (300.0 - mated.position.x)).abs() < 1e-9 && (target.y + mated.position.y).abs() < 1e-9);
    assert_eq!(heading, 0.0);
    assert_eq!(plan.len(), 7);
}

fn type1_at(lambda: f64) -> MateGeometryReport {
    let params = WorldParams::default();
    let mated = params.mate.mated_offset();
    let base_pose = Pose::new(300.0, 0.0, 0.0).compose(&microforge_core::mating::inverse(&mated));
    let mut base = BodySpec::new("base", BodyKind::Type1Base, base_pose);
    base.lambda = Some(lambda);
    let spec = WorldSpec {
        bodies: vec![base, BodySpec::new("tool", BodyKind::EndEffectorSingle, Pose::new(300.0, 0.0, 0.0))],
        ..WorldSpec::default()
    };
    let w = World::from_spec(&spec, params, 1).unwrap();
    w.mate_report(&"base".into(), &"tool".into()).unwrap()
}

#[test]
fn shrunken_male_fits_and_swollen_male_locks() {
    let shrunk = type1_at(0.753);
    assert!((shrunk.male_width_um - 45.18).abs() < 1e-9);
    assert_eq!(shrunk.opening_um, 62.0);
    assert!(shrunk.can_insert && shrunk.inside && !shrunk.interference_locked);

    let swollen = type1_at(1.02);
    assert!((swollen.male_width_um - 61.2).abs() < 1e-9);
    assert!(!swollen.can_insert && swollen.interference_locked);

    // the gate opens below 58/60 and the lock engages from 60/60
    assert!(type1_at(58.0 / 60.0 - 1e-9).can_insert);
    assert!(!type1_at(58.0 / 60.0 + 1e-6).can_insert);
    assert!(!type1_at(1.0 - 1e-6).interference_locked);
    assert!(type1_at(1.0).interference_locked);
}
