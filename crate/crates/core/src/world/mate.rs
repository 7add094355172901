//! Male/female mating geometry and detachment feasibility.

use serde::{Deserialize, Serialize};

use super::{Body, BodyKind, Coupling, WorldError, WorldState};
use crate::bilayer::JawState;
use crate::geometry::{separation, wrap_angle, Pose, Vec2};

/// Dimensions and tolerances of the base/effector connection, µm unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MateParams {
    /// Designed width of the male feature across the slot.
    pub male_width_um: f64,
    /// Designed depth of the male feature along the insertion axis.
    pub male_depth_um: f64,
    /// Centre of the male feature in the base frame.
    pub male_anchor: Vec2,
    pub slot_width_um: f64,
    pub slot_depth_um: f64,
    /// Centre of the slot in the effector frame.
    pub slot_anchor: Vec2,
    /// The male fits when it is at least this much narrower than the opening.
    pub insert_clearance_um: f64,
    /// The male is held when it is less than this much narrower than the opening.
    pub lock_interference_um: f64,
    pub lateral_tol_um: f64,
    pub axial_tol_um: f64,
    pub angle_tol_deg: f64,
    /// Approach radius between the male and slot anchors.
    pub approach_distance_um: f64,
    /// A Type 1 male must shrink below this swelling ratio to leave the slot.
    pub detach_lambda: f64,
    /// Walls closer than this count as touching the effector.
    pub wall_contact_tol_um: f64,
    /// Gap between base and effector that counts as separated.
    pub detach_separation_um: f64,
}

impl Default for MateParams {
    fn default() -> Self {
        Self {
            male_width_um: 60.0,
            male_depth_um: 40.0,
            male_anchor: Vec2::new(70.0, 0.0),
            slot_width_um: 62.0,
            slot_depth_um: 42.0,
            slot_anchor: Vec2::new(-30.0, 0.0),
            insert_clearance_um: 4.0,
            lock_interference_um: 2.0,
            lateral_tol_um: 5.0,
            axial_tol_um: 5.0,
            angle_tol_deg: 5.0,
            approach_distance_um: 400.0,
            detach_lambda: 0.80,
            wall_contact_tol_um: 2.0,
            detach_separation_um: 10.0,
        }
    }
}

impl MateParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lock_interference_um < self.insert_clearance_um) {
            return Err("lock_interference must be smaller than insert_clearance".into());
        }
        if !(self.male_width_um > 0.0 && self.slot_width_um > 0.0) {
            return Err("male and slot widths must be positive".into());
        }
        if !(self.lateral_tol_um >= 0.0 && self.axial_tol_um >= 0.0 && self.angle_tol_deg >= 0.0) {
            return Err("mate tolerances must be non-negative".into());
        }
        Ok(())
    }

    /// Effector pose relative to the base when fully mated.
    pub fn mated_offset(&self) -> Pose {
        let d = self.male_anchor - self.slot_anchor;
        Pose::new(d.x, d.y, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MateGeometryReport {
    /// Opening minus male width across the slot.
    pub clearance_x: f64,
    /// Slot depth minus male depth along the insertion axis.
    pub clearance_y: f64,
    pub can_insert: bool,
    pub interference_locked: bool,
    /// Male anchor relative to the slot anchor, effector frame.
    pub axial_error: f64,
    pub lateral_error: f64,
    /// Base heading minus effector heading, radians.
    pub angle_error: f64,
    /// The male sits in the slot within the positional gate.
    pub inside: bool,
    pub male_width_um: f64,
    pub opening_um: f64,
}

/// Whether a base kind couples to an effector with `coupling`.
pub fn compatible(base: BodyKind, coupling: Coupling) -> bool {
    matches!((base, coupling), (BodyKind::Type1Base, Coupling::Slot) | (BodyKind::Type2Base, Coupling::Jaws))
}

/// Current width of the male feature.
pub fn male_width(base: &Body, params: &MateParams) -> f64 {
    match (base.kind, base.swell) {
        (BodyKind::Type1Base, Some(s)) => params.male_width_um * s.lambda,
        _ => params.male_width_um,
    }
}

/// Current width of the female opening.
pub fn opening_width(effector: &Body, params: &MateParams) -> f64 {
    match (effector.coupling, effector.aperture) {
        (Some(Coupling::Jaws), Some(a)) => a.aperture_um,
        _ => params.slot_width_um,
    }
}

pub fn check_mate_geometry(base: &Body, effector: &Body, params: &MateParams) -> Result<MateGeometryReport, WorldError> {
    let coupling = effector.coupling.ok_or_else(|| kind_mismatch(base, effector))?;
    if !compatible(base.kind, coupling) {
        return Err(kind_mismatch(base, effector));
    }
    let male = male_width(base, params);
    let opening = opening_width(effector, params);
    let male_depth = match (base.kind, base.swell) {
        (BodyKind::Type1Base, Some(s)) => params.male_depth_um * s.lambda,
        _ => params.male_depth_um,
    };
    let offset = effector.pose.inverse_transform(base.pose.transform(params.male_anchor)) - params.slot_anchor;
    let angle_error = wrap_angle(base.pose.theta - effector.pose.theta);
    let aligned = offset.y.abs() <= params.lateral_tol_um && angle_error.abs() <= params.angle_tol_deg.to_radians();
    Ok(MateGeometryReport {
        clearance_x: opening - male,
        clearance_y: params.slot_depth_um - male_depth,
        can_insert: male <= opening - params.insert_clearance_um && aligned,
        interference_locked: male >= opening - params.lock_interference_um,
        axial_error: offset.x,
        lateral_error: offset.y,
        angle_error,
        inside: aligned && offset.x.abs() <= params.axial_tol_um,
        male_width_um: male,
        opening_um: opening,
    })
}

fn kind_mismatch(base: &Body, effector: &Body) -> WorldError {
    WorldError::KindMismatch { base: base.id.clone(), effector: effector.id.clone() }
}

/// Why a mated pair cannot separate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetachBlock {
    /// The gripper jaws are not open.
    JawsNotOpen,
    /// The shrunken male is held by surface tension and adhesion.
    SurfaceTensionAdhesion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetachFeasibility {
    pub feasible: bool,
    pub reason: Option<DetachBlock>,
}

/// Which sides of `effector` touch walls, in its own frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WallContacts {
    pub left: bool,
    pub right: bool,
    pub front: bool,
    pub back: bool,
}

impl WallContacts {
    /// Rotation is blocked when walls touch two opposite sides.
    pub fn constrains_rotation(&self) -> bool {
        (self.left && self.right) || (self.front && self.back)
    }
}

pub fn wall_contacts(effector: &Body, bodies: &[Body], tol: f64) -> WallContacts {
    let mut c = WallContacts::default();
    let mine: Vec<_> = effector.shape.iter().map(|p| p.placed(&effector.pose)).collect();
    for wall in bodies.iter().filter(|b| b.kind == BodyKind::Wall) {
        for wp in wall.shape.iter().map(|p| p.placed(&wall.pose)) {
            for ep in &mine {
                let s = separation(ep, &wp);
                if s.distance > tol {
                    continue;
                }
                let n = s.normal.rotated(-effector.pose.theta);
                if n.y > 0.7 {
                    c.left = true;
                } else if n.y < -0.7 {
                    c.right = true;
                } else if n.x > 0.7 {
                    c.front = true;
                } else if n.x < -0.7 {
                    c.back = true;
                }
            }
        }
    }
    c
}

/// Whether a locked pair can come apart in the current world.
pub fn detach_feasible(
    world: &WorldState,
    base: &Body,
    effector: &Body,
    params: &MateParams,
) -> Result<DetachFeasibility, WorldError> {
    if world.lock_between(&base.id, &effector.id).is_none() {
        return Err(WorldError::NotMated { base: base.id.clone(), effector: effector.id.clone() });
    }
    Ok(release_check(world, base, effector, params))
}

pub(crate) fn release_check(world: &WorldState, base: &Body, effector: &Body, params: &MateParams) -> DetachFeasibility {
    let ok = DetachFeasibility { feasible: true, reason: None };
    match base.kind {
        BodyKind::Type2Base => match effector.aperture.map(|a| a.state) {
            Some(JawState::Open) => ok,
            _ => DetachFeasibility { feasible: false, reason: Some(DetachBlock::JawsNotOpen) },
        },
        _ => {
            let shrunk = base.swell.map_or(false, |s| s.lambda <= params.detach_lambda);
            let walls = wall_contacts(effector, &world.bodies, params.wall_contact_tol_um).constrains_rotation();
            if shrunk && walls && world.channel.enclosure {
                ok
            } else {
                DetachFeasibility { feasible: false, reason: Some(DetachBlock::SurfaceTensionAdhesion) }
            }
        }
    }
}

/// Smallest gap between any pieces of two bodies; negative when they overlap.
pub fn body_separation(a: &Body, b: &Body) -> f64 {
    let pa: Vec<_> = a.shape.iter().map(|p| p.placed(&a.pose)).collect();
    let mut best = f64::INFINITY;
    for q in b.shape.iter().map(|p| p.placed(&b.pose)) {
        for p in &pa {
            best = best.min(separation(p, &q).distance);
        }
    }
    best
}

/// Distance between the male anchor of `base` and the slot anchor of `effector`.
pub fn anchor_distance(base: &Body, effector: &Body, params: &MateParams) -> f64 {
    base.pose.transform(params.male_anchor).distance(effector.pose.transform(params.slot_anchor))
}
