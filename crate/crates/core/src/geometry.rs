//! Planar geometry: vectors, poses and convex shape collision.
//!
//! All lengths are micrometres. Collision uses the separating axis test for
//! penetration and exact feature distance for separated shapes.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, s)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Vec2::new(1.0, 0.0)
        }
    }

    /// Left-hand perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotated(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Rigid planar pose: position in µm and heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose {
    pub position: Vec2,
    pub theta: f64,
}

impl From<[f64; 3]> for Pose {
    fn from(v: [f64; 3]) -> Self {
        Pose::new(v[0], v[1], v[2])
    }
}

impl From<Pose> for [f64; 3] {
    fn from(p: Pose) -> Self {
        [p.position.x, p.position.y, p.theta]
    }
}

impl Pose {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { position: Vec2::new(x, y), theta }
    }

    /// Body-frame point to world frame.
    pub fn transform(&self, local: Vec2) -> Vec2 {
        self.position + local.rotated(self.theta)
    }

    /// World-frame point to body frame.
    pub fn inverse_transform(&self, world: Vec2) -> Vec2 {
        (world - self.position).rotated(-self.theta)
    }

    /// `self ∘ rel`: the pose `rel` expressed in this pose's frame.
    pub fn compose(&self, rel: &Pose) -> Pose {
        Pose { position: self.transform(rel.position), theta: self.theta + rel.theta }
    }

    /// The pose of `other` relative to `self`.
    pub fn relative(&self, other: &Pose) -> Pose {
        Pose { position: self.inverse_transform(other.position), theta: other.theta - self.theta }
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }
}

/// Wrap an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    if a > -std::f64::consts::PI && a <= std::f64::consts::PI {
        return a;
    }
    let tau = std::f64::consts::TAU;
    let mut w = a.rem_euclid(tau);
    if w > std::f64::consts::PI {
        w -= tau;
    }
    w
}

/// One convex piece of a body, in body-frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Convex {
    /// Counter-clockwise vertices.
    Polygon { vertices: Vec<Vec2> },
    Circle { center: Vec2, radius: f64 },
}

impl Convex {
    /// Axis-aligned rectangle spanning `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Convex::Polygon {
            vertices: vec![Vec2::new(x0, y0), Vec2::new(x1, y0), Vec2::new(x1, y1), Vec2::new(x0, y1)],
        }
    }

    pub fn circle(radius: f64) -> Self {
        Convex::Circle { center: Vec2::ZERO, radius }
    }

    pub fn placed(&self, pose: &Pose) -> Placed {
        match self {
            Convex::Polygon { vertices } => {
                Placed::Polygon(vertices.iter().map(|v| pose.transform(*v)).collect())
            }
            Convex::Circle { center, radius } => Placed::Circle(pose.transform(*center), *radius),
        }
    }
}

/// A convex piece in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Placed {
    Polygon(Vec<Vec2>),
    Circle(Vec2, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn overlaps(&self, o: &Aabb, margin: f64) -> bool {
        self.min.x - margin <= o.max.x
            && o.min.x - margin <= self.max.x
            && self.min.y - margin <= o.max.y
            && o.min.y - margin <= self.max.y
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: Vec2::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: Vec2::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }
}

impl Placed {
    pub fn aabb(&self) -> Aabb {
        match self {
            Placed::Polygon(vs) => {
                let mut min = vs[0];
                let mut max = vs[0];
                for v in &vs[1..] {
                    min.x = min.x.min(v.x);
                    min.y = min.y.min(v.y);
                    max.x = max.x.max(v.x);
                    max.y = max.y.max(v.y);
                }
                Aabb { min, max }
            }
            Placed::Circle(c, r) => Aabb { min: *c - Vec2::new(*r, *r), max: *c + Vec2::new(*r, *r) },
        }
    }

    pub fn translate(&mut self, d: Vec2) {
        match self {
            Placed::Polygon(vs) => vs.iter_mut().for_each(|v| *v += d),
            Placed::Circle(c, _) => *c += d,
        }
    }
}

/// Signed separation between two convex pieces.
///
/// `distance` is positive when the pieces are apart and equals minus the
/// penetration depth when they overlap. `normal` is a unit vector pointing
/// from `a` towards `b`: translating `b` by `-distance * normal` (for an
/// overlap) separates the pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub distance: f64,
    pub normal: Vec2,
}

pub fn separation(a: &Placed, b: &Placed) -> Separation {
    match (a, b) {
        (Placed::Circle(ca, ra), Placed::Circle(cb, rb)) => {
            let d = *cb - *ca;
            Separation { distance: d.norm() - ra - rb, normal: d.normalized() }
        }
        (Placed::Polygon(pa), Placed::Circle(c, r)) => polygon_circle(pa, *c, *r),
        (Placed::Circle(c, r), Placed::Polygon(pb)) => {
            let s = polygon_circle(pb, *c, *r);
            Separation { distance: s.distance, normal: -s.normal }
        }
        (Placed::Polygon(pa), Placed::Polygon(pb)) => polygon_polygon(pa, pb),
    }
}

fn edges(poly: &[Vec2]) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
    (0..poly.len()).map(move |i| (poly[i], poly[(i + 1) % poly.len()]))
}

fn project(poly: &[Vec2], axis: Vec2) -> (f64, f64) {
    poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let p = v.dot(axis);
        (lo.min(p), hi.max(p))
    })
}

fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

fn point_in_polygon(poly: &[Vec2], p: Vec2) -> bool {
    edges(poly).all(|(a, b)| (b - a).cross(p - a) >= 0.0)
}

fn polygon_polygon(pa: &[Vec2], pb: &[Vec2]) -> Separation {
    // Largest separation over all edge normals of both polygons.
    let mut best = Separation { distance: f64::NEG_INFINITY, normal: Vec2::new(1.0, 0.0) };
    for (poly, flip) in [(pa, false), (pb, true)] {
        for (a, b) in edges(poly) {
            let mut axis = (b - a).perp().normalized();
            // outward normal of a CCW polygon is -perp
            axis = -axis;
            let (amin, amax) = project(pa, axis);
            let (bmin, bmax) = project(pb, axis);
            let (sep, n) = if !flip {
                (bmin - amax, axis)
            } else {
                (amin - bmax, -axis)
            };
            if sep > best.distance {
                best = Separation { distance: sep, normal: n };
            }
        }
    }
    if best.distance < 0.0 {
        return best;
    }
    // Separated: exact distance is the closest vertex/edge feature pair.
    let mut dist = f64::INFINITY;
    let mut normal = best.normal;
    for &v in pa {
        for (a, b) in edges(pb) {
            let q = closest_on_segment(v, a, b);
            let d = q.distance(v);
            if d < dist {
                dist = d;
                normal = (q - v).normalized();
            }
        }
    }
    for &v in pb {
        for (a, b) in edges(pa) {
            let q = closest_on_segment(v, a, b);
            let d = q.distance(v);
            if d < dist {
                dist = d;
                normal = (v - q).normalized();
            }
        }
    }
    if dist == 0.0 {
        normal = best.normal;
    }
    Separation { distance: dist, normal }
}

fn polygon_circle(poly: &[Vec2], c: Vec2, r: f64) -> Separation {
    let mut closest = poly[0];
    let mut best = f64::INFINITY;
    for (a, b) in edges(poly) {
        let q = closest_on_segment(c, a, b);
        let d = q.distance(c);
        if d < best {
            best = d;
            closest = q;
        }
    }
    if point_in_polygon(poly, c) {
        // Centre inside: push out through the nearest edge.
        let n = if best > 0.0 { (closest - c).normalized() } else { Vec2::new(1.0, 0.0) };
        return Separation { distance: -(best + r), normal: n };
    }
    Separation { distance: best - r, normal: (c - closest).normalized() }
}
