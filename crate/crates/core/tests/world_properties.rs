//! Randomised checks of the rigid-body world: bodies never interpenetrate,
//! locked pairs move as one, and runs are reproducible.

use std::collections::BTreeMap;

use microforge_core::mating::inverse;
use microforge_core::world::contact::min_separation;
use microforge_core::world::{BodySpec, LockSpec};
use microforge_core::{BodyId, BodyKind, FieldCommand, Pose, World, WorldParams, WorldSpec};
use proptest::prelude::*;

/// A piecewise-constant command schedule: (gradient x, gradient y, rotation rate).
fn schedule() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -1.0f64..1.0), 4..8)
}

fn run(world: &mut World, base: &str, plan: &[(f64, f64, f64)], ticks_per_step: usize, mut check: impl FnMut(&World)) {
    for &(gx, gy, rot) in plan {
        let cmd = BTreeMap::from([(BodyId::new(base), FieldCommand { rotate_rate: rot, ..FieldCommand::gradient(gx, gy) })]);
        for _ in 0..ticks_per_step {
            world.tick(&cmd, 1e-3).unwrap();
            check(world);
        }
    }
}

fn crowd(spheres: &[(f64, f64)]) -> WorldSpec {
    let mut bodies = vec![BodySpec::new("base", BodyKind::Type2Base, Pose::default())];
    for (i, &(x, y)) in spheres.iter().enumerate() {
        bodies.push(BodySpec::new(&format!("s{i}"), BodyKind::Sphere, Pose::new(x, y, 0.0)));
    }
    WorldSpec { bodies, water_fraction: 1.0, ..WorldSpec::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bodies_never_interpenetrate(
        spheres in prop::collection::vec((-250.0f64..250.0, -250.0f64..250.0), 1..5),
        plan in schedule(),
    ) {
        let spec = crowd(&spheres);
        let mut world = match World::from_spec(&spec, WorldParams::default(), 1) {
            Ok(w) => w,
            Err(_) => return Ok(()), // overlapping start rejected
        };
        prop_assume!(min_separation(&world.state.bodies, &world.state.rigid_groups()) > 0.0);
        let mut worst = f64::INFINITY;
        run(&mut world, "base", &plan, 250, |w| {
            worst = worst.min(min_separation(&w.state.bodies, &w.state.rigid_groups()));
        });
        prop_assert!(worst >= -1e-6, "penetration {worst}");
    }

    #[test]
    fn locked_pairs_move_rigidly(plan in schedule(), phi in 0.3f64..0.5) {
        let spec = WorldSpec {
            bodies: vec![
                BodySpec::new("base", BodyKind::Type1Base, Pose::new(-100.0, 0.0, 0.0)),
                BodySpec::new("tool", BodyKind::EndEffectorSingle, Pose::default()),
            ],
            locks: vec![LockSpec { base: "base".into(), effector: "tool".into() }],
            water_fraction: phi,
            ..WorldSpec::default()
        };
        let mut world = World::from_spec(&spec, WorldParams::default(), 1).unwrap();
        let relative = world.state.locks[0].relative;
        let mut drift = 0.0f64;
        run(&mut world, "base", &plan, 250, |w| {
            let b = w.state.body(&BodyId::new("base")).unwrap().pose;
            let e = w.state.body(&BodyId::new("tool")).unwrap().pose;
            let r = inverse(&b).compose(&e);
            drift = drift
                .max((r.position.x - relative.position.x).abs())
                .max((r.position.y - relative.position.y).abs())
                .max((r.theta - relative.theta).abs());
        });
        prop_assert!(world.state.lock_between(&"base".into(), &"tool".into()).is_some());
        prop_assert!(drift < 1e-12, "drift {drift}");
    }

    #[test]
    fn identical_inputs_give_identical_states(
        spheres in prop::collection::vec((-250.0f64..250.0, -250.0f64..250.0), 1..4),
        plan in schedule(),
        seed in any::<u64>(),
    ) {
        let spec = WorldSpec { sample_moments: true, ..crowd(&spheres) };
        let Ok(mut a) = World::from_spec(&spec, WorldParams::default(), seed) else { return Ok(()) };
        let mut b = World::from_spec(&spec, WorldParams::default(), seed).unwrap();
        run(&mut a, "base", &plan, 100, |_| {});
        run(&mut b, "base", &plan, 100, |_| {});
        prop_assert_eq!(&a.state, &b.state);
        for (x, y) in a.state.bodies.iter().zip(&b.state.bodies) {
            prop_assert_eq!(x.pose.position.x.to_bits(), y.pose.position.x.to_bits());
            prop_assert_eq!(x.pose.position.y.to_bits(), y.pose.position.y.to_bits());
            prop_assert_eq!(x.pose.theta.to_bits(), y.pose.theta.to_bits());
        }
    }
}

#[test]
fn a_pushed_sphere_moves_ahead_of_the_base() {
    let spec = crowd(&[(120.0, 0.0)]);
    let mut world = World::from_spec(&spec, WorldParams::default(), 1).unwrap();
    run(&mut world, "base", &[(1.0, 0.0, 0.0)], 4000, |_| {});
    let base = world.state.body(&"base".into()).unwrap().pose.position.x;
    let sphere = world.state.body(&"s0".into()).unwrap().pose.position.x;
    assert!(sphere > base);
    assert!(sphere > 150.0, "sphere at {sphere}");
}
