//! Scenario documents: an initial world, the mating pairs to track and a
//! timed script of actions. Stored as TOML (`.scn`).

mod engine;
mod trace;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ManeuverError;
use crate::geometry::Vec2;
use crate::magnetics::FieldCommand;
use crate::mating::{MatingError, MatingPhase};
use crate::world::{BodyId, WorldError, WorldSpec};

pub use engine::{run_scenario, Engine, EngineSettings, ManeuverRecord, RunReport, RunStatus};
pub use trace::{write_trace_csv, write_transitions_csv, TraceRow, TRACE_HEADER, TRANSITIONS_HEADER};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Mating(#[from] MatingError),
    #[error("maneuver failed at t = {time} s: {error}")]
    Maneuver { time: f64, error: ManeuverError },
    #[error("{0}")]
    Io(String),
}

impl ScenarioError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Schema(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    /// Simulated length, s.
    #[serde(default)]
    pub duration: f64,
    /// Fixed tick, s.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Spacing of trace rows, s.
    #[serde(default = "default_trace_interval")]
    pub trace_interval: f64,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_trace_interval() -> f64 {
    0.01
}

/// A base/effector pair whose mating state machine is tracked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub base: BodyId,
    pub effector: BodyId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManeuverSpec {
    /// Back away while turning so held spheres stay behind.
    Release,
    Goto {
        target: Vec2,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        heading: Option<f64>,
    },
    Dock { effector: BodyId },
    /// Exchange the locked effector for another one.
    Swap { to: BodyId },
    Follow { waypoints: Vec<Vec2> },
    /// Cancel the running maneuver.
    Stop,
}

fn yes() -> bool {
    true
}

fn contact_tol() -> f64 {
    0.5
}

/// Checks evaluated against the world when their time comes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "predicate", rename_all = "snake_case")]
pub enum Predicate {
    FsmState { base: BodyId, effector: BodyId, state: MatingPhase },
    Locked {
        base: BodyId,
        effector: BodyId,
        #[serde(default = "yes")]
        value: bool,
    },
    /// Displacement of `body` since `mark` is at least `distance` µm.
    MovedAtLeast { body: BodyId, mark: String, distance: f64 },
    MovedAtMost { body: BodyId, mark: String, distance: f64 },
    /// `body` is within `distance` µm of where `of` was at `mark`.
    NearMark { body: BodyId, mark: String, of: BodyId, distance: f64 },
    WaterFraction {
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
    InContact {
        a: BodyId,
        b: BodyId,
        #[serde(default = "yes")]
        value: bool,
        #[serde(default = "contact_tol")]
        tol: f64,
    },
    DetachFeasible {
        base: BodyId,
        effector: BodyId,
        #[serde(default = "yes")]
        value: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    SetSolventTarget { target: f64 },
    /// Hold a coil command for `base` until replaced.
    Field {
        base: BodyId,
        #[serde(flatten)]
        command: FieldCommand,
    },
    Maneuver {
        base: BodyId,
        #[serde(flatten)]
        maneuver: ManeuverSpec,
    },
    /// Remember every body pose under `name`.
    Mark { name: String },
    Assert {
        #[serde(flatten)]
        predicate: Predicate,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub t: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub metadata: Metadata,
    #[serde(default)]
    pub world: WorldSpec,
    #[serde(default)]
    pub pairs: Vec<PairSpec>,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            ScenarioError::Schema(m) => ScenarioError::Schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Schema(e.to_string()))
    }

    /// Structural checks that do not need a built world.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |m: String| Err(ScenarioError::Schema(m));
        if self.schema_version != SCHEMA_VERSION {
            return err(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        let m = &self.metadata;
        if !(m.dt > 0.0) {
            return err("metadata.dt must be positive".into());
        }
        if !(m.duration >= 0.0 && m.duration.is_finite()) {
            return err("metadata.duration must be non-negative".into());
        }
        if !(m.trace_interval >= m.dt) {
            return err("metadata.trace_interval must be at least dt".into());
        }
        let known = |id: &BodyId| self.world.bodies.iter().any(|b| &b.id == id);
        let check = |id: &BodyId, field: &str, i: usize| -> Result<(), ScenarioError> {
            if known(id) {
                Ok(())
            } else {
                Err(ScenarioError::Schema(format!("script[{i}].{field}: unknown body '{id}'")))
            }
        };
        for (i, p) in self.pairs.iter().enumerate() {
            if !known(&p.base) || !known(&p.effector) {
                return err(format!("pairs[{i}]: unknown body in ({}, {})", p.base, p.effector));
            }
        }
        let mut last = f64::NEG_INFINITY;
        for (i, e) in self.script.iter().enumerate() {
            if !(e.t >= last) {
                return err(format!("script[{i}].t: times must be non-decreasing ({} after {last})", e.t));
            }
            if e.t > m.duration + 0.5 * m.dt {
                return err(format!("script[{i}].t: {} is after the end of the scenario", e.t));
            }
            last = e.t;
            match &e.action {
                Action::SetSolventTarget { target } if !(0.0..=1.0).contains(target) => {
                    return err(format!("script[{i}].target: {target} outside [0, 1]"));
                }
                Action::Field { base, .. } => check(base, "base", i)?,
                Action::Maneuver { base, maneuver } => {
                    check(base, "base", i)?;
                    match maneuver {
                        ManeuverSpec::Dock { effector } => check(effector, "effector", i)?,
                        ManeuverSpec::Swap { to } => check(to, "to", i)?,
                        _ => {}
                    }
                }
                Action::Assert { predicate } => match predicate {
                    Predicate::FsmState { base, effector, .. } => {
                        if !self.pairs.iter().any(|p| &p.base == base && &p.effector == effector) {
                            return err(format!("script[{i}]: fsm_state needs a declared pair ({base}, {effector})"));
                        }
                    }
                    Predicate::Locked { base, effector, .. } | Predicate::DetachFeasible { base, effector, .. } => {
                        check(base, "base", i)?;
                        check(effector, "effector", i)?;
                    }
                    Predicate::MovedAtLeast { body, .. } | Predicate::MovedAtMost { body, .. } => {
                        check(body, "body", i)?
                    }
                    Predicate::NearMark { body, of, .. } => {
                        check(body, "body", i)?;
                        check(of, "of", i)?;
                    }
                    Predicate::InContact { a, b, .. } => {
                        check(a, "a", i)?;
                        check(b, "b", i)?;
                    }
                    Predicate::WaterFraction { .. } => {}
                },
                _ => {}
            }
        }
        Ok(())
    }

    /// Tick index at which a script time applies.
    pub fn tick_of(&self, t: f64) -> u64 {
        (t / self.metadata.dt).round() as u64
    }

    pub fn total_ticks(&self) -> u64 {
        self.tick_of(self.metadata.duration)
    }
}
