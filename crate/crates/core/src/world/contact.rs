//! Iterative minimum-translation projection between rigid groups.
//!
//! Bodies that are locked together form one group and move as a unit. Each
//! overlap is removed by translating the more mobile group along the contact
//! normal: walls never move, driven assemblies yield only to walls and to
//! each other, and passive bodies (spheres, loose effectors) are pushed.
//! A passive body pushed by something immovable becomes immovable for the
//! rest of the pass, so a sphere trapped against a wall pushes the robot back.

use serde::{Deserialize, Serialize};

use super::{Body, BodyKind};
use crate::geometry::{separation, Aabb, Placed, Pose, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    pub max_iterations: usize,
    /// Residual penetration accepted as contact, µm.
    pub tolerance_um: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { max_iterations: 50, tolerance_um: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactOutcome {
    pub iterations: usize,
    /// Largest penetration left after the last pass.
    pub residual_um: f64,
    /// The overlap could not be removed and every pose was restored.
    pub reverted: bool,
}

const IMMOVABLE: u8 = 0;
const DRIVEN: u8 = 1;
const PASSIVE: u8 = 2;

struct Piece {
    group: usize,
    placed: Placed,
    aabb: Aabb,
}

/// Remove every overlap between `groups` of `bodies`. Each group is a set of
/// body indices that move rigidly together; bodies not in any group are
/// ignored. On failure the poses in `restore` are written back.
pub fn resolve_groups(
    bodies: &mut [Body],
    groups: &[Vec<usize>],
    restore: &[Pose],
    params: &ContactParams,
) -> ContactOutcome {
    let mut mobility: Vec<u8> = groups.iter().map(|g| group_mobility(bodies, g)).collect();
    let mut pieces: Vec<Piece> = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        for &bi in g {
            let b = &bodies[bi];
            for convex in &b.shape {
                let placed = convex.placed(&b.pose);
                let aabb = placed.aabb();
                pieces.push(Piece { group: gi, placed, aabb });
            }
        }
    }
    let mut shift = vec![Vec2::ZERO; groups.len()];
    let mut outcome = ContactOutcome::default();
    for iter in 0..params.max_iterations {
        outcome.iterations = iter + 1;
        let mut worst = 0.0f64;
        for i in 0..pieces.len() {
            for j in (i + 1)..pieces.len() {
                let (gi, gj) = (pieces[i].group, pieces[j].group);
                if gi == gj || (mobility[gi] == IMMOVABLE && mobility[gj] == IMMOVABLE) {
                    continue;
                }
                if !pieces[i].aabb.overlaps(&pieces[j].aabb, 0.0) {
                    continue;
                }
                let s = separation(&pieces[i].placed, &pieces[j].placed);
                let depth = -s.distance;
                if depth <= params.tolerance_um {
                    continue;
                }
                worst = worst.max(depth);
                let (mi, mj) = (mobility[gi], mobility[gj]);
                let push = s.normal * depth;
                let (di, dj) = if mi == mj {
                    (-(push * 0.5), push * 0.5)
                } else if mj > mi {
                    (Vec2::ZERO, push)
                } else {
                    (-push, Vec2::ZERO)
                };
                if mj > mi && mj == PASSIVE && mi == IMMOVABLE {
                    mobility[gj] = IMMOVABLE;
                }
                if mi > mj && mi == PASSIVE && mj == IMMOVABLE {
                    mobility[gi] = IMMOVABLE;
                }
                for (g, d) in [(gi, di), (gj, dj)] {
                    if d != Vec2::ZERO {
                        shift[g] += d;
                        for p in pieces.iter_mut().filter(|p| p.group == g) {
                            p.placed.translate(d);
                            p.aabb = p.placed.aabb();
                        }
                    }
                }
            }
        }
        outcome.residual_um = worst;
        if worst == 0.0 {
            break;
        }
    }
    if outcome.residual_um > 0.0 {
        // the last pass still moved something; measure what is left
        outcome.residual_um = max_penetration(&pieces, params.tolerance_um);
    }
    if outcome.residual_um > params.tolerance_um {
        for (b, p) in bodies.iter_mut().zip(restore) {
            b.pose = *p;
        }
        outcome.reverted = true;
        return outcome;
    }
    for (g, d) in groups.iter().zip(&shift) {
        if *d != Vec2::ZERO {
            for &bi in g {
                bodies[bi].pose.position += *d;
            }
        }
    }
    outcome
}

fn max_penetration(pieces: &[Piece], tol: f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..pieces.len() {
        for j in (i + 1)..pieces.len() {
            if pieces[i].group == pieces[j].group || !pieces[i].aabb.overlaps(&pieces[j].aabb, 0.0) {
                continue;
            }
            let d = -separation(&pieces[i].placed, &pieces[j].placed).distance;
            if d > tol {
                worst = worst.max(d);
            }
        }
    }
    worst
}

fn group_mobility(bodies: &[Body], group: &[usize]) -> u8 {
    if group.iter().any(|&i| bodies[i].kind == BodyKind::Wall) {
        IMMOVABLE
    } else if group.iter().any(|&i| bodies[i].kind.is_base()) {
        DRIVEN
    } else {
        PASSIVE
    }
}

/// Smallest signed gap over every pair of bodies that do not share a group.
pub fn min_separation(bodies: &[Body], groups: &[Vec<usize>]) -> f64 {
    let mut owner = vec![usize::MAX; bodies.len()];
    for (gi, g) in groups.iter().enumerate() {
        for &bi in g {
            owner[bi] = gi;
        }
    }
    let placed: Vec<Vec<Placed>> =
        bodies.iter().map(|b| b.shape.iter().map(|c| c.placed(&b.pose)).collect()).collect();
    let mut best = f64::INFINITY;
    for i in 0..bodies.len() {
        for j in (i + 1)..bodies.len() {
            if owner[i] == owner[j] && owner[i] != usize::MAX {
                continue;
            }
            if bodies[i].kind == BodyKind::Wall && bodies[j].kind == BodyKind::Wall {
                continue;
            }
            for a in &placed[i] {
                for b in &placed[j] {
                    best = best.min(separation(a, b).distance);
                }
            }
        }
    }
    best
}
