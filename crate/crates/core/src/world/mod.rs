//! The planar microchannel world and its fixed-step update.
//!
//! A tick runs, in order: solvent exchange, swelling kinetics of every
//! responsive part, gripper apertures, magnetic actuation of the bases,
//! contact projection, and mating/locking. Everything is deterministic; the
//! seed only enters through optional moment sampling at construction.

pub mod contact;
pub mod mate;

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bilayer::{Aperture, GripperSpec};
use crate::geometry::{Convex, Pose, Vec2};
use crate::gel::{Direction, GelError, GelModel, HydrogelParams, SwellState};
use crate::kinetics::{direction_toward, relax, KineticsParams};
use crate::magnetics::{
    magnetic_force, magnetic_torque, misalignment, step_overdamped, CoilParams, DragModel, FieldCommand,
    MagneticBase, MagneticsError,
};

pub use contact::{ContactOutcome, ContactParams};
pub use mate::{
    anchor_distance, body_separation, check_mate_geometry, detach_feasible, DetachBlock, DetachFeasibility,
    MateGeometryReport, MateParams,
};

/// Identifier of a body, unique within a world.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BodyId(pub String);

impl BodyId {
    pub fn new(s: impl Into<String>) -> Self {
        BodyId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BodyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BodyId {
    fn from(s: &str) -> Self {
        BodyId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error(transparent)]
    StepTooLarge(#[from] MagneticsError),
    #[error("command addressed to {0}, which is not a magnetic base")]
    InvalidCommand(BodyId),
    #[error("unknown body {0}")]
    UnknownBody(BodyId),
    #[error("duplicate body id {0}")]
    DuplicateId(BodyId),
    #[error("{base} cannot mate with {effector}")]
    KindMismatch { base: BodyId, effector: BodyId },
    #[error("{base} is not locked to {effector}")]
    NotMated { base: BodyId, effector: BodyId },
    #[error("no sphere in contact with the assembly of {0}")]
    NoContact(BodyId),
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error(transparent)]
    Gel(#[from] GelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    Type1Base,
    Type2Base,
    EndEffectorSingle,
    EndEffectorMulti,
    EndEffectorGripper,
    Sphere,
    Wall,
}

impl BodyKind {
    pub fn is_base(self) -> bool {
        matches!(self, BodyKind::Type1Base | BodyKind::Type2Base)
    }

    pub fn is_effector(self) -> bool {
        matches!(self, BodyKind::EndEffectorSingle | BodyKind::EndEffectorMulti | BodyKind::EndEffectorGripper)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BodyKind::Type1Base => "type1_base",
            BodyKind::Type2Base => "type2_base",
            BodyKind::EndEffectorSingle => "end_effector_single",
            BodyKind::EndEffectorMulti => "end_effector_multi",
            BodyKind::EndEffectorGripper => "end_effector_gripper",
            BodyKind::Sphere => "sphere",
            BodyKind::Wall => "wall",
        }
    }

    /// Collision shape in the body frame; `None` for walls, which must be given.
    pub fn default_shape(self, sphere_radius: f64) -> Option<Vec<Convex>> {
        Some(match self {
            BodyKind::Type1Base | BodyKind::Type2Base | BodyKind::EndEffectorGripper => {
                vec![Convex::rect(-50.0, -60.0, 50.0, 60.0)]
            }
            // flat back with a narrow pushing tip
            BodyKind::EndEffectorSingle => {
                vec![Convex::rect(-50.0, -60.0, 30.0, 60.0), Convex::rect(30.0, -10.0, 50.0, 10.0)]
            }
            // a wide pocket between two arms, as three convex pieces
            BodyKind::EndEffectorMulti => vec![
                Convex::rect(-50.0, -60.0, 20.0, 60.0),
                Convex::rect(20.0, -60.0, 50.0, -40.0),
                Convex::rect(20.0, 40.0, 50.0, 60.0),
            ],
            BodyKind::Sphere => vec![Convex::circle(sphere_radius)],
            BodyKind::Wall => return None,
        })
    }
}

/// How an effector holds the male feature of a base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Rigid female slot; a responsive male (Type 1) locks by regrowing.
    Slot,
    /// Double-bilayer jaws that clamp a rigid male (Type 2).
    Jaws,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub id: BodyId,
    pub kind: BodyKind,
    pub pose: Pose,
    pub shape: Vec<Convex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swell: Option<SwellState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnetic: Option<MagneticBase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Coupling>,
    /// Gripper opening, recomputed every tick for jaw effectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aperture: Option<Aperture>,
}

impl Body {
    pub fn lambda(&self) -> Option<f64> {
        self.swell.map(|s| s.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelBounds {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// Where an effector can be parked between two walls for assisted detachment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintGap {
    pub center: Vec2,
    /// Direction of the gap axis, radians.
    #[serde(default)]
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Channel {
    /// Inner boundary; four walls are generated outside it.
    pub bounds: Option<ChannelBounds>,
    pub wall_thickness_um: f64,
    /// A lid over the channel blocks out-of-plane motion.
    pub enclosure: bool,
    /// Channel height; informational, the dynamics are planar.
    pub height_um: f64,
    pub constraint_gap: Option<ConstraintGap>,
}

impl Default for Channel {
    fn default() -> Self {
        Self { bounds: None, wall_thickness_um: 50.0, enclosure: false, height_um: 300.0, constraint_gap: None }
    }
}

/// A rigid base/effector connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lock {
    pub base: BodyId,
    pub effector: BodyId,
    /// Effector pose in the base frame, frozen when the lock formed.
    pub relative: Pose,
}

/// The alignment-field heading held for one base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub heading: f64,
    pub grad: Vec2,
}

/// Snapshot of everything that evolves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub tick: u64,
    pub bodies: Vec<Body>,
    pub water_fraction: f64,
    pub water_fraction_target: f64,
    pub exchange_tau: f64,
    pub channel: Channel,
    pub locks: Vec<Lock>,
    /// Base/effector pairs whose male entered the slot while it fit.
    pub engaged: Vec<(BodyId, BodyId)>,
    pub fields: BTreeMap<BodyId, FieldState>,
    pub rng_seed: u64,
}

impl WorldState {
    pub fn index_of(&self, id: &BodyId) -> Option<usize> {
        self.bodies.iter().position(|b| &b.id == id)
    }

    pub fn body(&self, id: &BodyId) -> Result<&Body, WorldError> {
        self.bodies.iter().find(|b| &b.id == id).ok_or_else(|| WorldError::UnknownBody(id.clone()))
    }

    pub fn lock_between(&self, base: &BodyId, effector: &BodyId) -> Option<&Lock> {
        self.locks.iter().find(|l| &l.base == base && &l.effector == effector)
    }

    pub fn lock_of_base(&self, base: &BodyId) -> Option<&Lock> {
        self.locks.iter().find(|l| &l.base == base)
    }

    pub fn lock_of_effector(&self, effector: &BodyId) -> Option<&Lock> {
        self.locks.iter().find(|l| &l.effector == effector)
    }

    fn is_engaged(&self, base: &BodyId, effector: &BodyId) -> bool {
        self.engaged.iter().any(|(b, e)| b == base && e == effector)
    }

    /// Bodies grouped into rigid units: each lock is one group.
    pub fn rigid_groups(&self) -> Vec<Vec<usize>> {
        let mut grouped = vec![false; self.bodies.len()];
        let mut groups = Vec::new();
        for l in &self.locks {
            if let (Some(b), Some(e)) = (self.index_of(&l.base), self.index_of(&l.effector)) {
                grouped[b] = true;
                grouped[e] = true;
                groups.push(vec![b, e]);
            }
        }
        for (i, g) in grouped.iter().enumerate() {
            if !g {
                groups.push(vec![i]);
            }
        }
        groups
    }
}

/// All physical parameters of a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub gel: HydrogelParams,
    pub kinetics: KineticsParams,
    pub gripper: GripperSpec,
    pub coil: CoilParams,
    pub drag: DragModel,
    pub mate: MateParams,
    pub contact: ContactParams,
    /// Drag multiplier for a locked base/effector assembly.
    pub assembly_drag_multiplier: f64,
    /// Type 1 bases stick and drag harder at or above this water fraction.
    pub sticky_water_fraction: f64,
    pub sphere_radius_um: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            gel: HydrogelParams::default(),
            kinetics: KineticsParams::default(),
            gripper: GripperSpec::default(),
            coil: CoilParams::default(),
            drag: DragModel::default(),
            mate: MateParams::default(),
            contact: ContactParams::default(),
            assembly_drag_multiplier: 2.0,
            sticky_water_fraction: 0.95,
            sphere_radius_um: 15.0,
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<(), String> {
        self.gel.validate().map_err(|e| e.to_string())?;
        self.kinetics.validate()?;
        self.gripper.validate()?;
        self.drag.validate()?;
        self.mate.validate()?;
        if !(self.coil.coil_limit > 0.0 && self.coil.dt_max > 0.0 && self.coil.b_align >= 0.0) {
            return Err("coil limits must be positive".into());
        }
        if !(self.assembly_drag_multiplier >= 1.0) {
            return Err("assembly_drag_multiplier must be at least 1".into());
        }
        Ok(())
    }
}

/// Initial description of one body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    pub id: BodyId,
    pub kind: BodyKind,
    #[serde(default)]
    pub pose: Pose,
    /// Overrides the kind's default shape; required for walls.
    #[serde(default)]
    pub shape: Option<Vec<Convex>>,
    /// Initial swelling ratio; defaults to equilibrium in the initial solvent.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Overrides the kind's default moment.
    #[serde(default)]
    pub moment_emu: Option<f64>,
    /// Overrides the coupling for effectors.
    #[serde(default)]
    pub coupling: Option<Coupling>,
}

impl BodySpec {
    pub fn new(id: &str, kind: BodyKind, pose: Pose) -> Self {
        Self { id: id.into(), kind, pose, shape: None, lambda: None, moment_emu: None, coupling: None }
    }
}

/// A lock present from the start; the effector is placed at the mated pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockSpec {
    pub base: BodyId,
    pub effector: BodyId,
}

/// Initial world description shared by scenario files and the live service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    #[serde(default)]
    pub bodies: Vec<BodySpec>,
    #[serde(default)]
    pub locks: Vec<LockSpec>,
    #[serde(default)]
    pub channel: Channel,
    #[serde(default = "default_water")]
    pub water_fraction: f64,
    #[serde(default)]
    pub water_fraction_target: Option<f64>,
    #[serde(default = "default_exchange_tau")]
    pub exchange_tau: f64,
    /// Draw each base moment from the manufacturing spread using the seed.
    #[serde(default)]
    pub sample_moments: bool,
}

fn default_water() -> f64 {
    0.40
}

fn default_exchange_tau() -> f64 {
    2.0
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            bodies: Vec::new(),
            locks: Vec::new(),
            channel: Channel::default(),
            water_fraction: default_water(),
            water_fraction_target: None,
            exchange_tau: default_exchange_tau(),
            sample_moments: false,
        }
    }
}

/// What happened during one tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickEvents {
    pub locked: Vec<(BodyId, BodyId)>,
    pub released: Vec<(BodyId, BodyId)>,
    pub contact: ContactOutcome,
}

/// A world together with its parameters and the solved gel model.
#[derive(Debug, Clone)]
pub struct World {
    pub params: WorldParams,
    pub state: WorldState,
    gel: GelModel,
    lambda_ref: f64,
    lambda_cache: (u64, f64),
    /// (time, tick, dt) when the current tick length was first used; time
    /// is recomputed from it so long runs do not accumulate rounding.
    clock: (f64, u64, f64),
}

impl World {
    pub fn from_spec(spec: &WorldSpec, params: WorldParams, seed: u64) -> Result<Self, WorldError> {
        params.validate().map_err(WorldError::Invalid)?;
        if !(0.0..=1.0).contains(&spec.water_fraction) {
            return Err(WorldError::Invalid(format!("water_fraction {} outside [0, 1]", spec.water_fraction)));
        }
        let target = spec.water_fraction_target.unwrap_or(spec.water_fraction);
        if !(0.0..=1.0).contains(&target) {
            return Err(WorldError::Invalid(format!("water_fraction_target {target} outside [0, 1]")));
        }
        if !(spec.exchange_tau > 0.0) {
            return Err(WorldError::Invalid("exchange_tau must be positive".into()));
        }
        let gel = GelModel::new(params.gel.clone())?;
        let lambda_ref = params.gripper.left.mismatch.reference_lambda(&gel)?;
        let lambda0 = gel.lambda_eq_at(spec.water_fraction)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bodies: Vec<Body> = Vec::new();
        for b in &spec.bodies {
            if bodies.iter().any(|o| o.id == b.id) {
                return Err(WorldError::DuplicateId(b.id.clone()));
            }
            let shape = match (&b.shape, b.kind.default_shape(params.sphere_radius_um)) {
                (Some(s), _) => s.clone(),
                (None, Some(s)) => s,
                (None, None) => return Err(WorldError::Invalid(format!("wall {} needs a shape", b.id))),
            };
            if shape.is_empty() {
                return Err(WorldError::Invalid(format!("body {} has an empty shape", b.id)));
            }
            let coupling = if b.kind.is_effector() {
                Some(b.coupling.unwrap_or(if b.kind == BodyKind::EndEffectorGripper {
                    Coupling::Jaws
                } else {
                    Coupling::Slot
                }))
            } else {
                None
            };
            let responsive = b.kind == BodyKind::Type1Base || coupling == Some(Coupling::Jaws);
            let swell = responsive.then(|| {
                let l = b.lambda.unwrap_or(lambda0);
                SwellState { lambda: l, lambda_eq: lambda0, direction: direction_toward(l, lambda0, Direction::TowardEl) }
            });
            let magnetic = match b.kind {
                BodyKind::Type1Base | BodyKind::Type2Base => {
                    let mut m = match (b.moment_emu, b.kind) {
                        (Some(emu), _) => MagneticBase::from_emu(emu),
                        (None, BodyKind::Type1Base) => MagneticBase::type1(),
                        _ => MagneticBase::type2(),
                    };
                    if spec.sample_moments {
                        m = m.sampled(&mut rng);
                    }
                    Some(m)
                }
                _ => None,
            };
            bodies.push(Body {
                id: b.id.clone(),
                kind: b.kind,
                pose: b.pose,
                shape,
                swell,
                magnetic,
                coupling,
                aperture: None,
            });
        }
        if let Some(bounds) = spec.channel.bounds {
            bodies.extend(channel_walls(&bounds, spec.channel.wall_thickness_um));
        }
        let fields = bodies
            .iter()
            .filter_map(|b| {
                b.magnetic.as_ref().map(|m| {
                    (b.id.clone(), FieldState { heading: b.pose.theta + m.moment_axis, grad: Vec2::ZERO })
                })
            })
            .collect();
        let mut state = WorldState {
            time: 0.0,
            tick: 0,
            bodies,
            water_fraction: spec.water_fraction,
            water_fraction_target: target,
            exchange_tau: spec.exchange_tau,
            channel: spec.channel.clone(),
            locks: Vec::new(),
            engaged: Vec::new(),
            fields,
            rng_seed: seed,
        };
        for l in &spec.locks {
            let bi = state.index_of(&l.base).ok_or_else(|| WorldError::UnknownBody(l.base.clone()))?;
            let ei = state.index_of(&l.effector).ok_or_else(|| WorldError::UnknownBody(l.effector.clone()))?;
            let (base, eff) = (&state.bodies[bi], &state.bodies[ei]);
            if !base.kind.is_base() || !eff.coupling.map_or(false, |c| mate::compatible(base.kind, c)) {
                return Err(WorldError::KindMismatch { base: l.base.clone(), effector: l.effector.clone() });
            }
            if state.lock_of_base(&l.base).is_some() || state.lock_of_effector(&l.effector).is_some() {
                return Err(WorldError::Invalid(format!("{} or {} locked twice", l.base, l.effector)));
            }
            let relative = params.mate.mated_offset();
            state.bodies[ei].pose = state.bodies[bi].pose.compose(&relative);
            state.locks.push(Lock { base: l.base.clone(), effector: l.effector.clone(), relative });
            state.engaged.push((l.base.clone(), l.effector.clone()));
        }
        let mut world = World { params, state, gel, lambda_ref, lambda_cache: (u64::MAX, f64::NAN), clock: (0.0, 0, f64::NAN) };
        world.update_apertures();
        Ok(world)
    }

    pub fn gel(&self) -> &GelModel {
        &self.gel
    }

    /// Equilibrium swelling ratio at the current water fraction.
    pub fn lambda_eq(&mut self) -> Result<f64, WorldError> {
        let phi = self.state.water_fraction;
        if self.lambda_cache.0 != phi.to_bits() {
            self.lambda_cache = (phi.to_bits(), self.gel.lambda_eq_at(phi)?);
        }
        Ok(self.lambda_cache.1)
    }

    pub fn set_water_fraction_target(&mut self, target: f64) -> Result<(), WorldError> {
        if !(0.0..=1.0).contains(&target) {
            return Err(WorldError::Invalid(format!("water fraction target {target} outside [0, 1]")));
        }
        self.state.water_fraction_target = target;
        Ok(())
    }

    pub fn mate_report(&self, base: &BodyId, effector: &BodyId) -> Result<MateGeometryReport, WorldError> {
        check_mate_geometry(self.state.body(base)?, self.state.body(effector)?, &self.params.mate)
    }

    pub fn detach_feasible(&self, base: &BodyId, effector: &BodyId) -> Result<DetachFeasibility, WorldError> {
        detach_feasible(&self.state, self.state.body(base)?, self.state.body(effector)?, &self.params.mate)
    }

    /// Advance by `dt` seconds. Bases absent from `commands` feel no
    /// gradient and keep their alignment field.
    pub fn tick(&mut self, commands: &BTreeMap<BodyId, FieldCommand>, dt: f64) -> Result<TickEvents, WorldError> {
        if !(dt > 0.0 && dt <= self.params.coil.dt_max) {
            return Err(MagneticsError::StepTooLarge { dt, dt_max: self.params.coil.dt_max }.into());
        }
        for id in commands.keys() {
            match self.state.index_of(id) {
                Some(i) if self.state.bodies[i].magnetic.is_some() => {}
                _ => return Err(WorldError::InvalidCommand(id.clone())),
            }
        }
        // solvent exchange
        let s = &mut self.state;
        s.water_fraction = s.water_fraction_target
            + (s.water_fraction - s.water_fraction_target) * (-dt / s.exchange_tau).exp();
        // swelling
        let lambda_eq = self.lambda_eq()?;
        for b in self.state.bodies.iter_mut() {
            if let Some(sw) = b.swell {
                let dir = direction_toward(sw.lambda, lambda_eq, sw.direction);
                b.swell = Some(relax(sw, lambda_eq, dt, &self.params.kinetics, dir));
            }
        }
        self.update_apertures();
        // actuation
        let start: Vec<Pose> = self.state.bodies.iter().map(|b| b.pose).collect();
        self.actuate(commands, dt)?;
        // contacts
        let groups = self.state.rigid_groups();
        let contact = contact::resolve_groups(&mut self.state.bodies, &groups, &start, &self.params.contact);
        self.snap_locked();
        // mating
        let (locked, released) = self.update_locks();
        if self.clock.2.to_bits() != dt.to_bits() || self.clock.1 > self.state.tick {
            self.clock = (self.state.time, self.state.tick, dt);
        }
        self.state.tick += 1;
        self.state.time = self.clock.0 + (self.state.tick - self.clock.1) as f64 * dt;
        Ok(TickEvents { locked, released, contact })
    }

    fn update_apertures(&mut self) {
        let grip = &self.params.gripper;
        for b in self.state.bodies.iter_mut() {
            if b.coupling == Some(Coupling::Jaws) {
                b.aperture = b.swell.map(|s| grip.aperture_for_lambda(s.lambda, self.lambda_ref));
            }
        }
    }

    fn actuate(&mut self, commands: &BTreeMap<BodyId, FieldCommand>, dt: f64) -> Result<(), WorldError> {
        let coil = self.params.coil.clone();
        let sticky_water = self.state.water_fraction >= self.params.sticky_water_fraction;
        for i in 0..self.state.bodies.len() {
            let Some(m) = self.state.bodies[i].magnetic.clone() else { continue };
            let id = self.state.bodies[i].id.clone();
            let cmd = commands.get(&id).map(|c| c.clamped(coil.coil_limit)).unwrap_or_default();
            let field = self.state.fields.entry(id.clone()).or_insert(FieldState { heading: 0.0, grad: Vec2::ZERO });
            if let Some(h) = cmd.heading {
                field.heading = h;
            }
            field.heading += cmd.rotate_rate * dt;
            field.grad = cmd.grad();
            let heading = field.heading;
            let body = &self.state.bodies[i];
            let delta = misalignment(&m, heading, body.pose.theta);
            let force = magnetic_force(&m, &cmd, delta);
            let torque = magnetic_torque(&m, heading, body.pose.theta, coil.b_align);
            let lock = self.state.lock_of_base(&id).cloned();
            let multiplier = if lock.is_some() { self.params.assembly_drag_multiplier } else { 1.0 };
            let sticking = body.kind == BodyKind::Type1Base && sticky_water;
            let drag = self.params.drag.effective(multiplier, sticking);
            let pose = step_overdamped(&body.pose, force, torque, &drag, dt, coil.dt_max)?;
            self.state.bodies[i].pose = pose;
            if let Some(l) = lock {
                if let Some(e) = self.state.index_of(&l.effector) {
                    self.state.bodies[e].pose = pose.compose(&l.relative);
                }
            }
        }
        Ok(())
    }

    /// Re-derive each locked effector pose from its base so the relative
    /// pose never drifts.
    fn snap_locked(&mut self) {
        for l in &self.state.locks {
            if let (Some(b), Some(e)) = (self.state.index_of(&l.base), self.state.index_of(&l.effector)) {
                self.state.bodies[e].pose = self.state.bodies[b].pose.compose(&l.relative);
            }
        }
    }

    fn update_locks(&mut self) -> (Vec<(BodyId, BodyId)>, Vec<(BodyId, BodyId)>) {
        let mut released = Vec::new();
        let mut keep = Vec::new();
        for l in std::mem::take(&mut self.state.locks) {
            let (Ok(base), Ok(eff)) = (self.state.body(&l.base), self.state.body(&l.effector)) else { continue };
            if mate::release_check(&self.state, base, eff, &self.params.mate).feasible {
                released.push((l.base.clone(), l.effector.clone()));
            } else {
                keep.push(l);
            }
        }
        self.state.locks = keep;
        let mut locked = Vec::new();
        let n = self.state.bodies.len();
        for bi in 0..n {
            if !self.state.bodies[bi].kind.is_base() {
                continue;
            }
            for ei in 0..n {
                let (base, eff) = (&self.state.bodies[bi], &self.state.bodies[ei]);
                let Some(coupling) = eff.coupling else { continue };
                if !mate::compatible(base.kind, coupling) {
                    continue;
                }
                let Ok(r) = check_mate_geometry(base, eff, &self.params.mate) else { continue };
                let (bid, eid) = (base.id.clone(), eff.id.clone());
                let engaged = self.state.is_engaged(&bid, &eid);
                if r.inside && r.can_insert && !engaged {
                    self.state.engaged.push((bid.clone(), eid.clone()));
                } else if !r.inside && engaged && self.state.lock_between(&bid, &eid).is_none() {
                    self.state.engaged.retain(|(b, e)| !(b == &bid && e == &eid));
                }
                let free = self.state.lock_of_base(&bid).is_none() && self.state.lock_of_effector(&eid).is_none();
                let just_released = released.iter().any(|(b, e)| b == &bid && e == &eid);
                if free && !just_released && r.inside && r.interference_locked && self.state.is_engaged(&bid, &eid) {
                    let relative = base.pose.relative(&eff.pose);
                    self.state.locks.push(Lock { base: bid.clone(), effector: eid.clone(), relative });
                    locked.push((bid, eid));
                }
            }
        }
        (locked, released)
    }
}

fn channel_walls(b: &ChannelBounds, t: f64) -> Vec<Body> {
    let rects = [
        ("channel_wall_bottom", Convex::rect(b.x0 - t, b.y0 - t, b.x1 + t, b.y0)),
        ("channel_wall_top", Convex::rect(b.x0 - t, b.y1, b.x1 + t, b.y1 + t)),
        ("channel_wall_left", Convex::rect(b.x0 - t, b.y0, b.x0, b.y1)),
        ("channel_wall_right", Convex::rect(b.x1, b.y0, b.x1 + t, b.y1)),
    ];
    rects
        .into_iter()
        .map(|(id, r)| Body {
            id: id.into(),
            kind: BodyKind::Wall,
            pose: Pose::default(),
            shape: vec![r],
            swell: None,
            magnetic: None,
            coupling: None,
            aperture: None,
        })
        .collect()
}
