//! Simulation core for hydrogel modular microrobots: gel swelling and its
//! kinetics, bilayer bending, magnetic actuation, a 2-D rigid-body world
//! with base/end-effector mating, the mating state machine, maneuver
//! controllers, scripted scenarios, sweeps and the live-session protocol.

pub mod bilayer;
pub mod config;
pub mod control;
pub mod gel;
pub mod geometry;
pub mod kinetics;
pub mod letters;
pub mod magnetics;
pub mod mating;
pub mod roots;
pub mod scenario;
pub mod sweep;
pub mod teleop;
pub mod world;

pub use bilayer::{BilayerSpec, GripperSpec, JawState};
pub use config::{MicroforgeConfig, CONFIG_ENV};
pub use control::{FollowerParams, Maneuver, ReleaseParams};
pub use gel::{GelModel, HydrogelParams, SwellState};
pub use geometry::{Convex, Pose, Vec2};
pub use kinetics::KineticsParams;
pub use magnetics::{CoilParams, DragModel, FieldCommand, MagneticBase};
pub use mating::{FsmParams, MatingFsm, MatingPhase, Transition};
pub use scenario::{run_scenario, Engine, EngineSettings, RunReport, RunStatus, Scenario, ScenarioError};
pub use world::{BodyId, BodyKind, World, WorldError, WorldParams, WorldSpec};
