//! A live simulation driven by operator commands. Network-free: the server
//! owns one session on its simulation thread and feeds it decoded commands.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::protocol::{
    BodyTelemetry, DetachReason, OperatorCommand, PairTelemetry, Scene, SceneBody, TelemetryFrame,
};
use crate::magnetics::FieldCommand;
use crate::mating::observe;
use crate::scenario::{Action, Engine, EngineSettings, Metadata, Scenario, ScenarioError, ScriptEntry};
use crate::world::mate::wall_contacts;
use crate::world::{BodyId, BodyKind, WorldError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleopParams {
    pub telemetry_hz: f64,
    /// Largest field rotation rate an operator may command, rad/s.
    pub max_rotate_rate: f64,
}

impl Default for TeleopParams {
    fn default() -> Self {
        Self { telemetry_hz: 30.0, max_rotate_rate: 3.0 }
    }
}

/// Where `load_scenario` looks for `<name>.scn`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioLibrary {
    pub dir: Option<PathBuf>,
}

impl ScenarioLibrary {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()) }
    }

    pub fn load(&self, name: &str) -> Result<Scenario, SessionError> {
        let safe = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        let dir = self.dir.as_ref().filter(|_| safe).ok_or_else(|| SessionError::UnknownScenario(name.into()))?;
        let path = dir.join(format!("{name}.scn"));
        if !path.is_file() {
            return Err(SessionError::UnknownScenario(name.into()));
        }
        Ok(Scenario::load(&path)?)
    }

    pub fn names(&self) -> Vec<String> {
        let Some(dir) = &self.dir else { return Vec::new() };
        let mut out: Vec<String> = std::fs::read_dir(dir)
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| {
                let p = e.path();
                (p.extension()? == "scn").then(|| p.file_stem()?.to_str().map(str::to_string)).flatten()
            })
            .collect();
        out.sort();
        out
    }
}

/// What applying a command produced.
#[derive(Debug, Clone, PartialEq)]
pub enum CommandOutcome {
    Applied,
    /// The world was rebuilt; clients need a fresh scene.
    SceneChanged,
    Detach { feasible: bool, reason: Option<DetachReason> },
}

#[derive(Debug, Clone)]
pub struct SimSession {
    scenario: Scenario,
    settings: EngineSettings,
    params: TeleopParams,
    library: ScenarioLibrary,
    engine: Engine,
    seed: u64,
    paused: bool,
    next_script: usize,
    pending_solvent: Option<f64>,
    pending_joystick: BTreeMap<BodyId, FieldCommand>,
    log: Vec<ScriptEntry>,
    assertion_failures: Vec<String>,
    reported_transitions: usize,
}

impl SimSession {
    pub fn new(
        scenario: Scenario,
        settings: EngineSettings,
        params: TeleopParams,
        library: ScenarioLibrary,
    ) -> Result<Self, SessionError> {
        scenario.validate()?;
        let seed = scenario.metadata.seed;
        let engine = Engine::from_scenario(&scenario, settings.clone())?;
        Ok(Self {
            scenario,
            settings,
            params,
            library,
            engine,
            seed,
            paused: false,
            next_script: 0,
            pending_solvent: None,
            pending_joystick: BTreeMap::new(),
            log: Vec::new(),
            assertion_failures: Vec::new(),
            reported_transitions: 0,
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn dt(&self) -> f64 {
        self.engine.dt
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn params(&self) -> &TeleopParams {
        &self.params
    }

    pub fn scenario_name(&self) -> &str {
        &self.scenario.metadata.name
    }

    /// Failed scripted assertions so far; a live session keeps running.
    pub fn assertion_failures(&self) -> &[String] {
        &self.assertion_failures
    }

    fn rebuild(&mut self, scenario: Scenario, seed: u64) -> Result<(), SessionError> {
        let mut s = scenario;
        s.metadata.seed = seed;
        let engine = Engine::from_scenario(&s, self.settings.clone())?;
        self.scenario = s;
        self.engine = engine;
        self.seed = seed;
        self.next_script = 0;
        self.pending_solvent = None;
        self.pending_joystick.clear();
        self.log.clear();
        self.assertion_failures.clear();
        self.reported_transitions = 0;
        Ok(())
    }

    fn default_base(&self) -> Option<BodyId> {
        self.engine.world.state.bodies.iter().find(|b| b.kind.is_base()).map(|b| b.id.clone())
    }

    /// Apply an operator command. World-changing commands take effect at the
    /// start of the next tick; within a tick the last command wins.
    pub fn handle(&mut self, cmd: &OperatorCommand) -> Result<CommandOutcome, SessionError> {
        let invalid = |m: String| Err(SessionError::InvalidCommand(m));
        match cmd {
            OperatorCommand::Joystick { grad_x, grad_y, rotate_rate, base } => {
                if !(grad_x.is_finite() && grad_y.is_finite() && rotate_rate.is_finite()) {
                    return invalid("joystick values must be finite".into());
                }
                let Some(id) = base.clone().or_else(|| self.default_base()) else {
                    return invalid("the world has no base to drive".into());
                };
                match self.engine.world.state.body(&id) {
                    Ok(b) if b.magnetic.is_some() => {}
                    _ => return invalid(format!("'{id}' is not a base")),
                }
                let limit = self.engine.world.params.coil.coil_limit;
                let r = self.params.max_rotate_rate;
                let c = FieldCommand {
                    rotate_rate: rotate_rate.clamp(-r, r),
                    ..FieldCommand::gradient(*grad_x, *grad_y).clamped(limit)
                };
                self.pending_joystick.insert(id, c);
                Ok(CommandOutcome::Applied)
            }
            OperatorCommand::SolventTarget { water_fraction } => {
                if !(0.0..=1.0).contains(water_fraction) {
                    return invalid(format!("water fraction {water_fraction} outside [0, 1]"));
                }
                self.pending_solvent = Some(*water_fraction);
                Ok(CommandOutcome::Applied)
            }
            OperatorCommand::LoadScenario { name } => {
                let s = self.library.load(name)?;
                let seed = s.metadata.seed;
                self.rebuild(s, seed)?;
                Ok(CommandOutcome::SceneChanged)
            }
            OperatorCommand::Pause { paused } => {
                self.paused = *paused;
                Ok(CommandOutcome::Applied)
            }
            OperatorCommand::Reset { seed } => {
                let seed = seed.unwrap_or(self.seed);
                self.rebuild(self.scenario.clone(), seed)?;
                Ok(CommandOutcome::SceneChanged)
            }
            OperatorCommand::Detach { base, effector } => match self.engine.world.detach_feasible(base, effector) {
                Ok(f) => Ok(CommandOutcome::Detach { feasible: f.feasible, reason: f.reason.map(Into::into) }),
                Err(WorldError::NotMated { .. }) => {
                    Ok(CommandOutcome::Detach { feasible: false, reason: Some(DetachReason::NotMated) })
                }
                Err(e) => invalid(e.to_string()),
            },
        }
    }

    fn apply_logged(&mut self, action: Action) -> Result<(), SessionError> {
        let t = self.engine.world.state.tick as f64 * self.engine.dt;
        if let Err(detail) = self.engine.apply(&action)? {
            self.assertion_failures.push(format!("t = {t}: {detail}"));
        }
        self.log.push(ScriptEntry { t, action });
        Ok(())
    }

    /// Advance one tick unless paused. Returns whether time moved.
    pub fn tick(&mut self) -> Result<bool, SessionError> {
        if self.paused {
            return Ok(false);
        }
        let tick = self.engine.world.state.tick;
        while let Some(e) = self.scenario.script.get(self.next_script) {
            if self.scenario.tick_of(e.t) > tick {
                break;
            }
            let action = e.action.clone();
            self.next_script += 1;
            self.apply_logged(action)?;
        }
        if let Some(target) = self.pending_solvent.take() {
            self.apply_logged(Action::SetSolventTarget { target })?;
        }
        for (base, command) in std::mem::take(&mut self.pending_joystick) {
            self.apply_logged(Action::Field { base, command })?;
        }
        self.engine.step()?;
        Ok(true)
    }

    /// The session so far as a scenario: same world and seed, with every
    /// applied action at the tick it took effect.
    pub fn replay_log(&self) -> Scenario {
        let ticks = self.engine.world.state.tick;
        let m = &self.scenario.metadata;
        Scenario {
            schema_version: self.scenario.schema_version,
            metadata: Metadata {
                name: format!("{}_replay", m.name),
                description: format!("recorded live session on '{}'", m.name),
                seed: self.seed,
                duration: ticks as f64 * self.engine.dt,
                dt: self.engine.dt,
                trace_interval: m.trace_interval,
            },
            world: self.scenario.world.clone(),
            pairs: self.scenario.pairs.clone(),
            script: self.log.clone(),
        }
    }

    pub fn scene(&self) -> Scene {
        let st = &self.engine.world.state;
        Scene {
            scenario: self.scenario.metadata.name.clone(),
            seed: self.seed,
            dt: self.engine.dt,
            channel: st.channel.clone(),
            bodies: st
                .bodies
                .iter()
                .map(|b| SceneBody { id: b.id.clone(), kind: b.kind, shape: b.shape.clone() })
                .collect(),
        }
    }

    /// Snapshot for clients; includes transitions not yet reported.
    pub fn telemetry(&mut self, tick_rate_actual: f64) -> TelemetryFrame {
        let e = &self.engine;
        let st = &e.world.state;
        let bodies = st
            .bodies
            .iter()
            .filter(|b| b.kind != BodyKind::Wall)
            .map(|b| BodyTelemetry {
                id: b.id.clone(),
                kind: b.kind,
                x: b.pose.position.x,
                y: b.pose.position.y,
                theta: b.pose.theta,
                lambda: b.lambda(),
                aperture_um: b.aperture.map(|a| a.aperture_um),
                jaw_state: b.aperture.map(|a| a.state),
            })
            .collect();
        let mating_states = e
            .fsms
            .iter()
            .filter_map(|f| {
                let obs = observe(&e.world, &f.base, &f.effector).ok()?;
                let eff = st.body(&f.effector).ok()?;
                let walls = wall_contacts(eff, &st.bodies, e.world.params.mate.wall_contact_tol_um);
                Some(PairTelemetry {
                    base: f.base.clone(),
                    effector: f.effector.clone(),
                    state: f.state,
                    locked: obs.locked,
                    can_insert: obs.report.can_insert,
                    interference_locked: obs.report.interference_locked,
                    inside: obs.report.inside,
                    walls_constrain: walls.constrains_rotation() && st.channel.enclosure,
                })
            })
            .collect();
        let transitions = e.transitions[self.reported_transitions.min(e.transitions.len())..].to_vec();
        self.reported_transitions = e.transitions.len();
        TelemetryFrame {
            time: st.time,
            tick: st.tick,
            paused: self.paused,
            bodies,
            water_fraction: st.water_fraction,
            water_fraction_target: st.water_fraction_target,
            mating_states,
            transitions,
            tick_rate_actual,
        }
    }
}
