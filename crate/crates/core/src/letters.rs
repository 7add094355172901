//! Waypoint following: drive a lone base along a polyline (letters, squares)
//! with the axis-decomposed proportional follower and measure how far it
//! strays from the drawn path.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{decompose_path, FollowerParams, Maneuver, ManeuverError, ReleaseParams, Status};
use crate::geometry::{Pose, Vec2};
use crate::scenario::TraceRow;
use crate::world::{BodyId, BodyKind, BodySpec, World, WorldError, WorldParams, WorldSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LetterError {
    #[error("waypoint {index} ({x}, {y}) not reached within {budget_s} s")]
    UnreachableWaypoint { index: usize, x: f64, y: f64, budget_s: f64 },
    #[error("base kind must be type1_base or type2_base")]
    NotABase,
    #[error("invalid waypoint file: {0}")]
    Parse(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LetterParams {
    pub dt: f64,
    /// Simulated time allowed before the run counts as stalled, s.
    pub budget_s: f64,
    /// Spacing of trace rows, s.
    pub trace_interval: f64,
    /// Water fraction; `None` picks the operating point of the base type.
    pub water_fraction: Option<f64>,
}

impl Default for LetterParams {
    fn default() -> Self {
        Self { dt: 1e-3, budget_s: 900.0, trace_interval: 0.1, water_fraction: None }
    }
}

/// Usual operating water fraction: Type 1 slides freely at 40 % water and
/// sticks in pure water; Type 2 is driven in water.
pub fn operating_water_fraction(kind: BodyKind) -> f64 {
    match kind {
        BodyKind::Type1Base => 0.40,
        _ => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LetterReport {
    pub trace: Vec<TraceRow>,
    /// Largest distance between the base centre and the drawn polyline, µm.
    pub max_cross_track_um: f64,
    pub completion_s: f64,
    pub waypoints_followed: usize,
}

/// Read `x,y` rows (µm); a header line and `#` comments are skipped.
pub fn parse_waypoints<R: BufRead>(r: R) -> Result<Vec<Vec2>, LetterError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| LetterError::Parse(e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = t.split(',').map(str::trim).collect();
        let nums: Result<Vec<f64>, _> = cells.iter().map(|c| c.parse::<f64>()).collect();
        match nums {
            Ok(v) if v.len() == 2 && v.iter().all(|x| x.is_finite()) => out.push(Vec2::new(v[0], v[1])),
            Ok(_) => return Err(LetterError::Parse(format!("line {}: expected two numbers", i + 1))),
            Err(_) if out.is_empty() && i == 0 => continue,
            Err(_) => return Err(LetterError::Parse(format!("line {}: '{t}' is not a number pair", i + 1))),
        }
    }
    Ok(out)
}

/// Shortest distance from `p` to the polyline.
pub fn cross_track_error(p: Vec2, path: &[Vec2]) -> f64 {
    match path {
        [] => 0.0,
        [only] => p.distance(*only),
        _ => path
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let d = b - a;
                let len2 = d.dot(d);
                let t = if len2 == 0.0 { 0.0 } else { ((p - a).dot(d) / len2).clamp(0.0, 1.0) };
                p.distance(a + d * t)
            })
            .fold(f64::INFINITY, f64::min),
    }
}

/// Drive a base of `kind` along `path`, starting on the first waypoint.
pub fn draw_letters(
    path: &[Vec2],
    kind: BodyKind,
    world_params: &WorldParams,
    follower: &FollowerParams,
    p: &LetterParams,
) -> Result<LetterReport, LetterError> {
    if !kind.is_base() {
        return Err(LetterError::NotABase);
    }
    let empty = LetterReport { trace: Vec::new(), max_cross_track_um: 0.0, completion_s: 0.0, waypoints_followed: 0 };
    let Some(&start) = path.first() else { return Ok(empty) };
    let id = BodyId::new("base");
    let phi = p.water_fraction.unwrap_or_else(|| operating_water_fraction(kind));
    let spec = WorldSpec {
        bodies: vec![BodySpec::new("base", kind, Pose::new(start.x, start.y, 0.0))],
        water_fraction: phi,
        ..WorldSpec::default()
    };
    let mut world = World::from_spec(&spec, world_params.clone(), 0)?;
    let steps = decompose_path(path, follower.max_step_um);
    let mut m = Maneuver::follow(path, follower.max_step_um);
    let stride = ((p.trace_interval / p.dt).round() as u64).max(1);
    let budget = (p.budget_s / p.dt).round() as u64;
    let release = ReleaseParams::default();
    let mut trace = vec![row(&world, &id)];
    let mut worst = 0.0f64;
    let mut commands = BTreeMap::new();
    for tick in 0..=budget {
        match m.step(&mut world, &id, p.dt, follower, &release) {
            Status::Done => {
                return Ok(LetterReport {
                    trace,
                    max_cross_track_um: worst,
                    completion_s: world.state.time,
                    waypoints_followed: steps.len(),
                })
            }
            Status::Failed(ManeuverError::World(e)) => return Err(e.into()),
            Status::Running(c) => {
                if tick == budget {
                    break;
                }
                commands.insert(id.clone(), c);
            }
        }
        world.tick(&commands, p.dt)?;
        let pos = world.state.body(&id)?.pose.position;
        worst = worst.max(cross_track_error(pos, path));
        if (tick + 1) % stride == 0 {
            trace.push(row(&world, &id));
        }
    }
    let index = match &m {
        Maneuver::Follow { next, .. } => *next,
        _ => 0,
    };
    let w = steps.get(index).copied().unwrap_or(start);
    Err(LetterError::UnreachableWaypoint { index, x: w.x, y: w.y, budget_s: p.budget_s })
}

fn row(world: &World, id: &BodyId) -> TraceRow {
    let b = world.state.body(id).expect("base exists");
    TraceRow {
        time: world.state.time,
        body: id.clone(),
        x: b.pose.position.x,
        y: b.pose.position.y,
        theta: b.pose.theta,
        lambda: b.lambda(),
        water_fraction: world.state.water_fraction,
        mate_state: None,
    }
}
