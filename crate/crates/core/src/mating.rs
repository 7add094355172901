//! Mating and detachment state machines.
//!
//! One machine tracks one base/effector pair. It observes the world (mate
//! geometry, solvent target, whether the world holds a lock) and moves at
//! most one edge per call along
//!
//! ```text
//! Disengaged → Approaching → MateReady → LockPending → Locked → DetachPending → Detached
//!                   ↑                                                              │
//!                   └──────────────────────────────────────────────────────────────┘
//! ```
//!
//! Both types share the graph; only the world-side lock and release rules
//! differ (see [`crate::world::mate`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Vec2};
use crate::world::{
    anchor_distance, body_separation, check_mate_geometry, BodyId, BodyKind, MateGeometryReport, World, WorldError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatingPhase {
    Disengaged,
    Approaching,
    MateReady,
    LockPending,
    Locked,
    DetachPending,
    Detached,
}

impl MatingPhase {
    pub const ALL: [MatingPhase; 7] = [
        MatingPhase::Disengaged,
        MatingPhase::Approaching,
        MatingPhase::MateReady,
        MatingPhase::LockPending,
        MatingPhase::Locked,
        MatingPhase::DetachPending,
        MatingPhase::Detached,
    ];

    /// The only state reachable in one step.
    pub fn successor(self) -> MatingPhase {
        use MatingPhase::*;
        match self {
            Disengaged | Detached => Approaching,
            Approaching => MateReady,
            MateReady => LockPending,
            LockPending => Locked,
            Locked => DetachPending,
            DetachPending => Detached,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MatingPhase::Disengaged => "Disengaged",
            MatingPhase::Approaching => "Approaching",
            MatingPhase::MateReady => "MateReady",
            MatingPhase::LockPending => "LockPending",
            MatingPhase::Locked => "Locked",
            MatingPhase::DetachPending => "DetachPending",
            MatingPhase::Detached => "Detached",
        }
    }
}

impl fmt::Display for MatingPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatingPhase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        MatingPhase::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| format!("unknown mating state {s}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeTag {
    Type1,
    Type2,
}

impl TypeTag {
    pub fn of(kind: BodyKind) -> Option<TypeTag> {
        match kind {
            BodyKind::Type1Base => Some(TypeTag::Type1),
            BodyKind::Type2Base => Some(TypeTag::Type2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatingError {
    #[error("illegal transition {from} -> {to}: {reason}")]
    IllegalTransition { from: MatingPhase, to: MatingPhase, reason: String },
    #[error("no constraint walls with enclosure available for a Type 1 detachment")]
    MissingConstraintWalls,
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Everything the guards look at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub anchor_distance: f64,
    pub report: MateGeometryReport,
    /// The world holds a lock between this base and effector.
    pub locked: bool,
    pub solvent_target: f64,
    /// Smallest gap between the base and effector bodies.
    pub separation: f64,
}

/// Thresholds used by the guards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsmParams {
    pub approach_distance_um: f64,
    /// Solvent target that triggers locking.
    pub lock_target: f64,
    pub lock_target_tol: f64,
    /// Solvent target at or above which detachment starts.
    pub detach_target: f64,
    pub detach_separation_um: f64,
}

impl Default for FsmParams {
    fn default() -> Self {
        Self {
            approach_distance_um: 400.0,
            lock_target: 0.40,
            lock_target_tol: 0.1,
            detach_target: 0.9,
            detach_separation_um: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub time: f64,
    pub base: BodyId,
    pub effector: BodyId,
    pub from: MatingPhase,
    pub to: MatingPhase,
    pub can_insert: bool,
    pub interference_locked: bool,
    pub locked: bool,
    pub solvent_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatingFsm {
    pub base: BodyId,
    pub effector: BodyId,
    pub type_tag: TypeTag,
    pub state: MatingPhase,
    /// Time each state was entered, in order.
    pub timestamps: Vec<(MatingPhase, f64)>,
    last_distance: Option<f64>,
}

impl MatingFsm {
    pub fn new(base: BodyId, effector: BodyId, type_tag: TypeTag, state: MatingPhase, time: f64) -> Self {
        Self { base, effector, type_tag, state, timestamps: vec![(state, time)], last_distance: None }
    }

    /// A machine for a pair in `world`, starting Locked when the world
    /// already holds the lock.
    pub fn for_pair(world: &World, base: &BodyId, effector: &BodyId) -> Result<Self, MatingError> {
        let b = world.state.body(base)?;
        world.state.body(effector)?;
        let tag = TypeTag::of(b.kind)
            .ok_or_else(|| WorldError::KindMismatch { base: base.clone(), effector: effector.clone() })?;
        world.mate_report(base, effector)?;
        let state = if world.state.lock_between(base, effector).is_some() {
            MatingPhase::Locked
        } else {
            MatingPhase::Disengaged
        };
        Ok(Self::new(base.clone(), effector.clone(), tag, state, world.state.time))
    }

    /// Whether the guard of the edge leaving the current state holds.
    pub fn guard(&self, obs: &Observation, p: &FsmParams) -> Result<(), String> {
        use MatingPhase::*;
        let ok = |c: bool, why: &str| if c { Ok(()) } else { Err(why.to_string()) };
        match self.state {
            Disengaged => ok(obs.anchor_distance <= p.approach_distance_um, "base not within approach distance"),
            Detached => ok(
                obs.anchor_distance <= p.approach_distance_um
                    && self.last_distance.map_or(false, |d| obs.anchor_distance < d),
                "base not closing in after detachment",
            ),
            Approaching => ok(obs.report.can_insert && obs.report.inside, "male does not fit or is not in the slot"),
            MateReady => ok(
                (obs.solvent_target - p.lock_target).abs() <= p.lock_target_tol,
                "solvent target is not the locking composition",
            ),
            LockPending => ok(obs.locked, "no lock between base and effector yet"),
            Locked => ok(
                obs.solvent_target >= p.detach_target || !obs.locked,
                "solvent target is not the detaching composition",
            ),
            DetachPending => ok(
                !obs.locked && obs.separation > p.detach_separation_um,
                "pair still held or not yet separated",
            ),
        }
    }

    /// Take the outgoing edge if its guard holds.
    pub fn advance(&mut self, obs: &Observation, p: &FsmParams) -> Option<Transition> {
        let t = if self.guard(obs, p).is_ok() { Some(self.enter(self.state.successor(), obs)) } else { None };
        self.last_distance = Some(obs.anchor_distance);
        t
    }

    /// Force a specific transition; fails unless it is the legal next edge
    /// and its guard holds.
    pub fn request(&mut self, to: MatingPhase, obs: &Observation, p: &FsmParams) -> Result<Transition, MatingError> {
        let from = self.state;
        if to != from.successor() {
            return Err(MatingError::IllegalTransition { from, to, reason: "not an edge of the mating graph".into() });
        }
        self.guard(obs, p).map_err(|reason| MatingError::IllegalTransition { from, to, reason })?;
        self.last_distance = Some(obs.anchor_distance);
        Ok(self.enter(to, obs))
    }

    fn enter(&mut self, to: MatingPhase, obs: &Observation) -> Transition {
        let from = self.state;
        self.state = to;
        self.timestamps.push((to, obs.time));
        Transition {
            time: obs.time,
            base: self.base.clone(),
            effector: self.effector.clone(),
            from,
            to,
            can_insert: obs.report.can_insert,
            interference_locked: obs.report.interference_locked,
            locked: obs.locked,
            solvent_target: obs.solvent_target,
        }
    }

    /// The machine agrees with the world: Locked only with a world lock,
    /// Detached only without one.
    pub fn consistent_with(&self, world_locked: bool) -> bool {
        match self.state {
            MatingPhase::Locked => world_locked,
            MatingPhase::Detached => !world_locked,
            _ => true,
        }
    }
}

pub fn observe(world: &World, base: &BodyId, effector: &BodyId) -> Result<Observation, WorldError> {
    let b = world.state.body(base)?;
    let e = world.state.body(effector)?;
    Ok(Observation {
        time: world.state.time,
        anchor_distance: anchor_distance(b, e, &world.params.mate),
        report: check_mate_geometry(b, e, &world.params.mate)?,
        locked: world.state.lock_between(base, effector).is_some(),
        solvent_target: world.state.water_fraction_target,
        separation: body_separation(b, e),
    })
}

/// Conditions a plan can wait on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "until", rename_all = "snake_case")]
pub enum WaitFor {
    Locked { effector: BodyId },
    Unlocked { effector: BodyId },
}

/// One step of a scripted command plan for a base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum PlanStep {
    /// Change the channel solvent target.
    Solvent { target: f64 },
    Wait(WaitFor),
    /// Reverse along the current heading by this distance, µm.
    BackOff { distance_um: f64 },
    /// Drive the base centre to a point with a fixed heading.
    Goto { target: Vec2, heading: f64 },
    /// Line up behind an effector and push in until the male is in the slot.
    Dock { effector: BodyId },
}

/// Standoff behind an effector before the final push, µm.
pub const DOCK_STANDOFF_UM: f64 = 60.0;
/// Reverse distance after a release, µm.
pub const BACKOFF_UM: f64 = 80.0;

/// The plan that moves `base` from `from` to `to`. Swapping to the current
/// effector is the empty plan.
pub fn swap_end_effector(
    world: &World,
    base: &BodyId,
    from: &BodyId,
    to: &BodyId,
    p: &FsmParams,
) -> Result<Vec<PlanStep>, MatingError> {
    let b = world.state.body(base)?;
    world.state.body(from)?;
    world.state.body(to)?;
    if world.state.lock_between(base, from).is_none() {
        return Err(WorldError::NotMated { base: base.clone(), effector: from.clone() }.into());
    }
    if from == to {
        return Ok(Vec::new());
    }
    // both effectors must fit this base
    world.mate_report(base, to)?;
    let mut plan = Vec::new();
    if b.kind == BodyKind::Type1Base {
        let gap = match (world.state.channel.constraint_gap, world.state.channel.enclosure) {
            (Some(g), true) => g,
            _ => return Err(MatingError::MissingConstraintWalls),
        };
        // park the effector in the gap, base behind it along the gap axis
        let park = Pose::new(gap.center.x, gap.center.y, gap.heading).compose(&inverse(&world.params.mate.mated_offset()));
        plan.push(PlanStep::Goto { target: park.position, heading: gap.heading });
    }
    plan.push(PlanStep::Solvent { target: 1.0 });
    plan.push(PlanStep::Wait(WaitFor::Unlocked { effector: from.clone() }));
    plan.push(PlanStep::BackOff { distance_um: BACKOFF_UM });
    plan.push(PlanStep::Dock { effector: to.clone() });
    plan.push(PlanStep::Solvent { target: p.lock_target });
    plan.push(PlanStep::Wait(WaitFor::Locked { effector: to.clone() }));
    Ok(plan)
}

/// Inverse of a rigid transform.
pub fn inverse(p: &Pose) -> Pose {
    let q = Vec2::ZERO - p.position.rotated(-p.theta);
    Pose { position: q, theta: -p.theta }
}
