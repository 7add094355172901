//! Closed-loop command generators for a single base: go-to, docking,
//! reversing, the sphere-release motion, waypoint following and plan
//! execution. Each maneuver is polled once per tick and returns the field
//! command for that tick.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Pose, Vec2};
use crate::magnetics::FieldCommand;
use crate::mating::{inverse, PlanStep, WaitFor, DOCK_STANDOFF_UM};
use crate::world::{body_separation, check_mate_geometry, BodyId, BodyKind, World, WorldError};

/// Gains and tolerances of the proportional position controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FollowerParams {
    /// Gradient per micrometre of position error while following waypoints, T/m per µm.
    pub gain: f64,
    /// Gain used by go-to, docking and backing-off moves, T/m per µm.
    pub maneuver_gain: f64,
    /// Docking pushes toward a point this far past the mated pose so the
    /// command does not fade before the male is seated, µm.
    pub dock_overdrive_um: f64,
    /// Per-axis arrival tolerance, µm.
    pub axis_tol_um: f64,
    /// Diagonal segments are cut into axis-aligned steps no longer than this, µm.
    pub max_step_um: f64,
    /// Heading tolerance for arrival, degrees.
    pub heading_tol_deg: f64,
}

impl Default for FollowerParams {
    fn default() -> Self {
        Self { gain: 0.01, maneuver_gain: 0.05, dock_overdrive_um: 20.0, axis_tol_um: 3.0, max_step_um: 20.0, heading_tol_deg: 2.0 }
    }
}

/// Timing of the sphere-release motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReleaseParams {
    pub duration_s: f64,
    /// Backward gradient as a fraction of the coil limit.
    pub backward_fraction: f64,
    pub rotate_rate: f64,
    /// A sphere closer than this to the assembly counts as held, µm.
    pub contact_tol_um: f64,
}

impl Default for ReleaseParams {
    fn default() -> Self {
        Self { duration_s: 1.5, backward_fraction: 0.5, rotate_rate: 0.6, contact_tol_um: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManeuverError {
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Running(FieldCommand),
    Done,
    Failed(ManeuverError),
}

/// Proportional gradient toward `target`, saturated per axis.
pub fn p_command(pos: Vec2, target: Vec2, gain: f64, limit: f64) -> FieldCommand {
    let e = target - pos;
    FieldCommand::gradient((gain * e.x).clamp(-limit, limit), (gain * e.y).clamp(-limit, limit))
}

fn arrived(pos: Vec2, target: Vec2, tol: f64) -> bool {
    (target.x - pos.x).abs() <= tol && (target.y - pos.y).abs() <= tol
}

fn base_pose(world: &World, base: &BodyId) -> Result<Pose, WorldError> {
    Ok(world.state.body(base)?.pose)
}

/// Expand a polyline so every segment is axis-aligned: diagonal segments
/// become staircases of x-then-y moves no longer than `max_step`.
pub fn decompose_path(points: &[Vec2], max_step: f64) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::new();
    let Some(&first) = points.first() else { return out };
    out.push(first);
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d = b - a;
        if d.x == 0.0 || d.y == 0.0 {
            out.push(b);
            continue;
        }
        let n = (d.norm() / max_step).ceil().max(1.0) as usize;
        for k in 1..=n {
            let prev = a + d * ((k - 1) as f64 / n as f64);
            let next = if k == n { b } else { a + d * (k as f64 / n as f64) };
            out.push(Vec2::new(next.x, prev.y));
            out.push(next);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Maneuver {
    Goto { target: Vec2, heading: Option<f64> },
    BackOff { distance_um: f64, start: Option<Pose> },
    Dock { effector: BodyId, staged: bool },
    Release { elapsed: f64, heading: Option<f64> },
    Follow { waypoints: Vec<Vec2>, next: usize },
    Wait(WaitFor),
    Plan { steps: Vec<PlanStep>, index: usize, current: Option<Box<Maneuver>> },
}

impl Maneuver {
    pub fn goto(target: Vec2, heading: Option<f64>) -> Self {
        Maneuver::Goto { target, heading }
    }

    pub fn release() -> Self {
        Maneuver::Release { elapsed: 0.0, heading: None }
    }

    pub fn dock(effector: BodyId) -> Self {
        Maneuver::Dock { effector, staged: false }
    }

    pub fn follow(path: &[Vec2], max_step: f64) -> Self {
        Maneuver::Follow { waypoints: decompose_path(path, max_step), next: 0 }
    }

    pub fn plan(steps: Vec<PlanStep>) -> Self {
        Maneuver::Plan { steps, index: 0, current: None }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Maneuver::Goto { .. } => "goto",
            Maneuver::BackOff { .. } => "back_off",
            Maneuver::Dock { .. } => "dock",
            Maneuver::Release { .. } => "release",
            Maneuver::Follow { .. } => "follow",
            Maneuver::Wait(_) => "wait",
            Maneuver::Plan { .. } => "plan",
        }
    }

    /// Command for the coming tick of length `dt`.
    pub fn step(
        &mut self,
        world: &mut World,
        base: &BodyId,
        dt: f64,
        follower: &FollowerParams,
        release: &ReleaseParams,
    ) -> Status {
        match self.step_inner(world, base, dt, follower, release) {
            Ok(s) => s,
            Err(e) => Status::Failed(e.into()),
        }
    }

    fn step_inner(
        &mut self,
        world: &mut World,
        base: &BodyId,
        dt: f64,
        fp: &FollowerParams,
        rp: &ReleaseParams,
    ) -> Result<Status, WorldError> {
        let limit = world.params.coil.coil_limit;
        let pose = base_pose(world, base)?;
        match self {
            Maneuver::Goto { target, heading } => {
                let heading_ok = heading
                    .map_or(true, |h| wrap_angle(h - pose.theta).abs() <= fp.heading_tol_deg.to_radians());
                if arrived(pose.position, *target, fp.axis_tol_um) && heading_ok {
                    return Ok(Status::Done);
                }
                let mut c = p_command(pose.position, *target, fp.maneuver_gain, limit);
                c.heading = *heading;
                Ok(Status::Running(c))
            }
            Maneuver::BackOff { distance_um, start } => {
                let s = *start.get_or_insert(pose);
                if pose.position.distance(s.position) >= *distance_um {
                    return Ok(Status::Done);
                }
                Ok(Status::Running(FieldCommand {
                    heading: Some(s.theta),
                    ..FieldCommand::gradient(-0.5 * limit * s.theta.cos(), -0.5 * limit * s.theta.sin())
                }))
            }
            Maneuver::Dock { effector, staged } => {
                let eff = world.state.body(effector)?;
                let mated = eff.pose.compose(&inverse(&world.params.mate.mated_offset()));
                if !*staged {
                    let pre = mated.compose(&Pose::new(-DOCK_STANDOFF_UM, 0.0, 0.0));
                    let heading_ok = wrap_angle(pre.theta - pose.theta).abs() <= fp.heading_tol_deg.to_radians();
                    if arrived(pose.position, pre.position, fp.axis_tol_um) && heading_ok {
                        *staged = true;
                    } else {
                        let mut c = p_command(pose.position, pre.position, fp.maneuver_gain, limit);
                        c.heading = Some(pre.theta);
                        return Ok(Status::Running(c));
                    }
                }
                let r = check_mate_geometry(world.state.body(base)?, eff, &world.params.mate)?;
                if r.inside {
                    return Ok(Status::Done);
                }
                let goal = mated.compose(&Pose::new(fp.dock_overdrive_um, 0.0, 0.0));
                let mut c = p_command(pose.position, goal.position, fp.maneuver_gain, limit);
                c.heading = Some(mated.theta);
                Ok(Status::Running(c))
            }
            Maneuver::Release { elapsed, heading } => {
                if heading.is_none() {
                    if !holds_sphere(world, base, rp.contact_tol_um)? {
                        return Err(WorldError::NoContact(base.clone()));
                    }
                    *heading = Some(pose.theta);
                }
                if *elapsed >= rp.duration_s - 1e-12 {
                    return Ok(Status::Done);
                }
                *elapsed += dt;
                let h = heading.unwrap_or(pose.theta);
                let g = rp.backward_fraction * limit;
                Ok(Status::Running(FieldCommand {
                    rotate_rate: rp.rotate_rate,
                    ..FieldCommand::gradient(-g * h.cos(), -g * h.sin())
                }))
            }
            Maneuver::Follow { waypoints, next } => {
                while *next < waypoints.len() && arrived(pose.position, waypoints[*next], fp.axis_tol_um) {
                    *next += 1;
                }
                if *next >= waypoints.len() {
                    return Ok(Status::Done);
                }
                Ok(Status::Running(p_command(pose.position, waypoints[*next], fp.gain, limit)))
            }
            Maneuver::Wait(w) => {
                let done = match w {
                    WaitFor::Locked { effector } => world.state.lock_between(base, effector).is_some(),
                    WaitFor::Unlocked { effector } => world.state.lock_between(base, effector).is_none(),
                };
                Ok(if done { Status::Done } else { Status::Running(FieldCommand::default()) })
            }
            Maneuver::Plan { steps, index, current } => loop {
                if current.is_none() {
                    let Some(step) = steps.get(*index) else { return Ok(Status::Done) };
                    *index += 1;
                    match step {
                        PlanStep::Solvent { target } => {
                            world.set_water_fraction_target(*target)?;
                            continue;
                        }
                        PlanStep::Wait(w) => *current = Some(Box::new(Maneuver::Wait(w.clone()))),
                        PlanStep::BackOff { distance_um } => {
                            *current = Some(Box::new(Maneuver::BackOff { distance_um: *distance_um, start: None }))
                        }
                        PlanStep::Goto { target, heading } => {
                            *current = Some(Box::new(Maneuver::goto(*target, Some(*heading))))
                        }
                        PlanStep::Dock { effector } => *current = Some(Box::new(Maneuver::dock(effector.clone()))),
                    }
                }
                let m = current.as_mut().expect("step set above");
                match m.step(world, base, dt, fp, rp) {
                    Status::Done => *current = None,
                    Status::Failed(ManeuverError::World(e)) => return Err(e),
                    running => return Ok(running),
                }
            },
        }
    }
}

/// Whether a sphere touches the base or the effector locked to it.
pub fn holds_sphere(world: &World, base: &BodyId, tol: f64) -> Result<bool, WorldError> {
    let mut parts = vec![world.state.body(base)?];
    if let Some(l) = world.state.lock_of_base(base) {
        parts.push(world.state.body(&l.effector)?);
    }
    Ok(world
        .state
        .bodies
        .iter()
        .filter(|b| b.kind == BodyKind::Sphere)
        .any(|s| parts.iter().any(|p| body_separation(p, s) <= tol)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staircase_keeps_axis_segments() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0), Vec2::new(130.0, 40.0)];
        let out = decompose_path(&pts, 20.0);
        assert_eq!(out[1], Vec2::new(100.0, 0.0));
        assert_eq!(*out.last().unwrap(), Vec2::new(130.0, 40.0));
        for w in out.windows(2) {
            let d = w[1] - w[0];
            assert!(d.x == 0.0 || d.y == 0.0, "{:?}", w);
        }
        // the diagonal is cut into short steps; the straight run is kept whole
        for w in out[1..].windows(2) {
            assert!((w[1] - w[0]).norm() <= 20.0 + 1e-9);
        }
    }

    #[test]
    fn empty_and_single_point_paths() {
        assert!(decompose_path(&[], 20.0).is_empty());
        assert_eq!(decompose_path(&[Vec2::new(1.0, 2.0)], 20.0).len(), 1);
    }

    #[test]
    fn proportional_command_saturates() {
        let c = p_command(Vec2::ZERO, Vec2::new(1000.0, -50.0), 0.01, 2.0);
        assert_eq!((c.grad_x, c.grad_y), (2.0, -0.5));
    }
}
