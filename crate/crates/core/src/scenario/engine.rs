//! Deterministic scenario execution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::trace::TraceRow;
use super::{Action, ManeuverSpec, Predicate, Scenario, ScenarioError};
use crate::control::{FollowerParams, Maneuver, ReleaseParams, Status};
use crate::geometry::{separation, Pose};
use crate::magnetics::FieldCommand;
use crate::mating::{observe, swap_end_effector, FsmParams, MatingFsm, MatingPhase, Transition};
use crate::world::{BodyId, BodyKind, TickEvents, World, WorldError, WorldParams};

/// Controller and protocol settings an engine runs with.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EngineSettings {
    pub world: WorldParams,
    pub fsm: FsmParams,
    pub follower: FollowerParams,
    pub release: ReleaseParams,
}

/// A maneuver that finished or was replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverRecord {
    pub base: BodyId,
    pub name: String,
    pub started: f64,
    pub ended: f64,
    /// "done", "cancelled" or "replaced".
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    AssertionFailed { time: f64, predicate: Predicate, detail: String },
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub status: RunStatus,
    pub trace: Vec<TraceRow>,
    pub transitions: Vec<Transition>,
    pub maneuvers: Vec<ManeuverRecord>,
    pub engine: Engine,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Completed => 0,
            RunStatus::AssertionFailed { .. } => 2,
        }
    }
}

/// A world together with the pair state machines, held coil commands and
/// running maneuvers. Advanced one fixed tick at a time.
#[derive(Debug, Clone)]
pub struct Engine {
    pub world: World,
    pub fsms: Vec<MatingFsm>,
    pub held: BTreeMap<BodyId, FieldCommand>,
    pub maneuvers: BTreeMap<BodyId, (Maneuver, f64)>,
    pub marks: BTreeMap<String, BTreeMap<BodyId, Pose>>,
    pub transitions: Vec<Transition>,
    pub maneuver_log: Vec<ManeuverRecord>,
    pub dt: f64,
    pub settings: EngineSettings,
}

impl Engine {
    pub fn new(
        world: World,
        pairs: &[(BodyId, BodyId)],
        dt: f64,
        settings: EngineSettings,
    ) -> Result<Self, ScenarioError> {
        if !(dt > 0.0 && dt <= world.params.coil.dt_max) {
            return Err(WorldError::from(crate::magnetics::MagneticsError::StepTooLarge {
                dt,
                dt_max: world.params.coil.dt_max,
            })
            .into());
        }
        let fsms = pairs
            .iter()
            .map(|(b, e)| MatingFsm::for_pair(&world, b, e))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            world,
            fsms,
            held: BTreeMap::new(),
            maneuvers: BTreeMap::new(),
            marks: BTreeMap::new(),
            transitions: Vec::new(),
            maneuver_log: Vec::new(),
            dt,
            settings,
        })
    }

    pub fn from_scenario(scenario: &Scenario, settings: EngineSettings) -> Result<Self, ScenarioError> {
        let world = World::from_spec(&scenario.world, settings.world.clone(), scenario.metadata.seed)?;
        let pairs: Vec<_> = scenario.pairs.iter().map(|p| (p.base.clone(), p.effector.clone())).collect();
        Self::new(world, &pairs, scenario.metadata.dt, settings)
    }

    pub fn time(&self) -> f64 {
        self.world.state.time
    }

    pub fn fsm(&self, base: &BodyId, effector: &BodyId) -> Option<&MatingFsm> {
        self.fsms.iter().find(|f| &f.base == base && &f.effector == effector)
    }

    /// Mating state shown next to a body: that of the first tracked pair it
    /// belongs to.
    pub fn phase_of(&self, body: &BodyId) -> Option<MatingPhase> {
        self.fsms.iter().find(|f| &f.base == body || &f.effector == body).map(|f| f.state)
    }

    /// Apply a script action. Assertion failures come back as `Err(detail)`
    /// inside `Ok`.
    pub fn apply(&mut self, action: &Action) -> Result<Result<(), String>, ScenarioError> {
        match action {
            Action::SetSolventTarget { target } => self.world.set_water_fraction_target(*target)?,
            Action::Field { base, command } => {
                self.require_magnetic(base)?;
                self.end_maneuver(base, "cancelled");
                self.held.insert(base.clone(), *command);
            }
            Action::Maneuver { base, maneuver } => {
                self.require_magnetic(base)?;
                let m = match maneuver {
                    ManeuverSpec::Stop => {
                        self.end_maneuver(base, "cancelled");
                        self.held.remove(base);
                        return Ok(Ok(()));
                    }
                    ManeuverSpec::Release => Maneuver::release(),
                    ManeuverSpec::Goto { target, heading } => Maneuver::goto(*target, *heading),
                    ManeuverSpec::Dock { effector } => Maneuver::dock(effector.clone()),
                    ManeuverSpec::Follow { waypoints } => Maneuver::follow(waypoints, self.settings.follower.max_step_um),
                    ManeuverSpec::Swap { to } => {
                        let from = self
                            .world
                            .state
                            .lock_of_base(base)
                            .map(|l| l.effector.clone())
                            .ok_or_else(|| WorldError::NotMated { base: base.clone(), effector: to.clone() })?;
                        Maneuver::plan(swap_end_effector(&self.world, base, &from, to, &self.settings.fsm)?)
                    }
                };
                self.start_maneuver(base, m);
            }
            Action::Mark { name } => {
                let poses = self.world.state.bodies.iter().map(|b| (b.id.clone(), b.pose)).collect();
                self.marks.insert(name.clone(), poses);
            }
            Action::Assert { predicate } => return self.evaluate(predicate),
        }
        Ok(Ok(()))
    }

    /// Run a maneuver on `base`, replacing any held command or earlier maneuver.
    pub fn start_maneuver(&mut self, base: &BodyId, m: Maneuver) {
        self.end_maneuver(base, "replaced");
        self.held.remove(base);
        self.maneuvers.insert(base.clone(), (m, self.time()));
    }

    fn end_maneuver(&mut self, base: &BodyId, outcome: &str) {
        if let Some((m, started)) = self.maneuvers.remove(base) {
            self.maneuver_log.push(ManeuverRecord {
                base: base.clone(),
                name: m.name().into(),
                started,
                ended: self.time(),
                outcome: outcome.into(),
            });
        }
    }

    fn require_magnetic(&self, id: &BodyId) -> Result<(), WorldError> {
        match self.world.state.body(id)?.magnetic {
            Some(_) => Ok(()),
            None => Err(WorldError::InvalidCommand(id.clone())),
        }
    }

    /// Advance one tick: maneuvers produce commands, the world steps and
    /// every pair machine takes whatever edge its guard allows.
    pub fn step(&mut self) -> Result<TickEvents, ScenarioError> {
        let mut commands = self.held.clone();
        let bases: Vec<BodyId> = self.maneuvers.keys().cloned().collect();
        for base in bases {
            let (mut m, started) = self.maneuvers.remove(&base).expect("key listed above");
            let s = &self.settings;
            match m.step(&mut self.world, &base, self.dt, &s.follower, &s.release) {
                Status::Running(c) => {
                    commands.insert(base.clone(), c);
                    self.maneuvers.insert(base, (m, started));
                }
                Status::Done => self.maneuver_log.push(ManeuverRecord {
                    base: base.clone(),
                    name: m.name().into(),
                    started,
                    ended: self.time(),
                    outcome: "done".into(),
                }),
                Status::Failed(error) => return Err(ScenarioError::Maneuver { time: self.time(), error }),
            }
        }
        let events = self.world.tick(&commands, self.dt)?;
        // a fixed heading is set once; after that the field keeps it
        for c in self.held.values_mut() {
            c.heading = None;
        }
        for f in &mut self.fsms {
            let obs = observe(&self.world, &f.base, &f.effector)?;
            if let Some(t) = f.advance(&obs, &self.settings.fsm) {
                self.transitions.push(t);
            }
        }
        Ok(events)
    }

    pub fn evaluate(&self, p: &Predicate) -> Result<Result<(), String>, ScenarioError> {
        let st = &self.world.state;
        let check = |ok: bool, detail: String| Ok(if ok { Ok(()) } else { Err(detail) });
        let mark_pose = |mark: &str, id: &BodyId| -> Result<Pose, ScenarioError> {
            self.marks
                .get(mark)
                .and_then(|m| m.get(id))
                .copied()
                .ok_or_else(|| ScenarioError::Schema(format!("mark '{mark}' was not set before it was used")))
        };
        match p {
            Predicate::FsmState { base, effector, state } => {
                let f = self
                    .fsm(base, effector)
                    .ok_or_else(|| ScenarioError::Schema(format!("pair ({base}, {effector}) is not tracked")))?;
                check(f.state == *state, format!("state is {}, expected {state}", f.state))
            }
            Predicate::Locked { base, effector, value } => {
                let locked = st.lock_between(base, effector).is_some();
                check(locked == *value, format!("locked = {locked}, expected {value}"))
            }
            Predicate::MovedAtLeast { body, mark, distance } => {
                let d = st.body(body)?.pose.position.distance(mark_pose(mark, body)?.position);
                check(d >= *distance, format!("{body} moved {d:.3} µm since '{mark}', expected ≥ {distance}"))
            }
            Predicate::MovedAtMost { body, mark, distance } => {
                let d = st.body(body)?.pose.position.distance(mark_pose(mark, body)?.position);
                check(d <= *distance, format!("{body} moved {d:.3} µm since '{mark}', expected ≤ {distance}"))
            }
            Predicate::NearMark { body, mark, of, distance } => {
                let d = st.body(body)?.pose.position.distance(mark_pose(mark, of)?.position);
                check(d <= *distance, format!("{body} is {d:.3} µm from {of} at '{mark}', expected ≤ {distance}"))
            }
            Predicate::WaterFraction { min, max } => {
                let w = st.water_fraction;
                check(
                    min.map_or(true, |m| w >= m) && max.map_or(true, |m| w <= m),
                    format!("water fraction {w:.6} outside [{min:?}, {max:?}]"),
                )
            }
            Predicate::InContact { a, b, value, tol } => {
                let d = body_gap(self, a, b)?;
                let touching = d <= *tol;
                check(touching == *value, format!("gap between {a} and {b} is {d:.4} µm"))
            }
            Predicate::DetachFeasible { base, effector, value } => {
                let r = self.world.detach_feasible(base, effector)?;
                check(r.feasible == *value, format!("detach feasible = {}, reason {:?}", r.feasible, r.reason))
            }
        }
    }

    /// One trace row per non-wall body.
    pub fn trace_rows(&self) -> Vec<TraceRow> {
        let st = &self.world.state;
        st.bodies
            .iter()
            .filter(|b| b.kind != BodyKind::Wall)
            .map(|b| TraceRow {
                time: st.time,
                body: b.id.clone(),
                x: b.pose.position.x,
                y: b.pose.position.y,
                theta: b.pose.theta,
                lambda: b.lambda(),
                water_fraction: st.water_fraction,
                mate_state: self.phase_of(&b.id),
            })
            .collect()
    }
}

fn body_gap(engine: &Engine, a: &BodyId, b: &BodyId) -> Result<f64, WorldError> {
    let st = &engine.world.state;
    let (ba, bb) = (st.body(a)?, st.body(b)?);
    let mut best = f64::INFINITY;
    for ca in &ba.shape {
        for cb in &bb.shape {
            best = best.min(separation(&ca.placed(&ba.pose), &cb.placed(&bb.pose)).distance);
        }
    }
    Ok(best)
}

/// Execute a scenario to completion or to its first failed assertion.
///
/// Actions scheduled for tick `k = round(t / dt)` run before that tick;
/// actions at the final time run after the last tick. Trace rows are taken
/// at the start and then every `trace_interval`.
pub fn run_scenario(scenario: &Scenario, settings: EngineSettings) -> Result<RunReport, ScenarioError> {
    scenario.validate()?;
    let mut engine = Engine::from_scenario(scenario, settings)?;
    let total = scenario.total_ticks();
    let stride = ((scenario.metadata.trace_interval / scenario.metadata.dt).round() as u64).max(1);
    let mut trace = engine.trace_rows();
    let mut next = 0usize;
    let mut status = RunStatus::Completed;
    'outer: for tick in 0..=total {
        while next < scenario.script.len() && scenario.tick_of(scenario.script[next].t) <= tick {
            let action = &scenario.script[next].action;
            next += 1;
            if let Err(detail) = engine.apply(action)? {
                let Action::Assert { predicate } = action else { unreachable!("only asserts fail softly") };
                status = RunStatus::AssertionFailed { time: engine.time(), predicate: predicate.clone(), detail };
                break 'outer;
            }
        }
        if tick == total {
            break;
        }
        engine.step()?;
        if (tick + 1) % stride == 0 {
            trace.extend(engine.trace_rows());
        }
    }
    Ok(RunReport {
        status,
        trace,
        transitions: engine.transitions.clone(),
        maneuvers: engine.maneuver_log.clone(),
        engine,
    })
}
