//! Fixtures shared by the benchmarks.

use std::collections::BTreeMap;

use microforge_core::world::{BodySpec, LockSpec};
use microforge_core::{BodyId, BodyKind, FieldCommand, Pose, World, WorldParams, WorldSpec};

/// A locked Type 1 pusher and `spheres` beads laid out in a grid ahead of it.
pub fn crowded_world(spheres: usize) -> World {
    let mut bodies = vec![
        BodySpec::new("base", BodyKind::Type1Base, Pose::new(-200.0, 0.0, 0.0)),
        BodySpec::new("tool", BodyKind::EndEffectorMulti, Pose::new(-100.0, 0.0, 0.0)),
    ];
    let side = (spheres as f64).sqrt().ceil() as usize;
    for i in 0..spheres {
        let (r, c) = (i / side.max(1), i % side.max(1));
        let pose = Pose::new(40.0 + 45.0 * c as f64, -45.0 * (side as f64 - 1.0) / 2.0 + 45.0 * r as f64, 0.0);
        bodies.push(BodySpec::new(&format!("bead{i}"), BodyKind::Sphere, pose));
    }
    let spec = WorldSpec {
        bodies,
        locks: vec![LockSpec { base: "base".into(), effector: "tool".into() }],
        water_fraction: 1.0,
        ..WorldSpec::default()
    };
    World::from_spec(&spec, WorldParams::default(), 1).expect("fixture world is valid")
}

/// A steady push along +x for the base in [`crowded_world`].
pub fn push_command() -> BTreeMap<BodyId, FieldCommand> {
    BTreeMap::from([(BodyId::new("base"), FieldCommand::gradient(1.0, 0.0))])
}
