//! 2D vector algebra, permitted-velocity half-planes and velocity-obstacle
//! cones (truncated and infinite) in velocity space.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A 2D vector. Units are meters or meters per second depending on context.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, rhs: Vec2) -> f64 {
        self.x * rhs.x + self.y * rhs.y
    }

    /// 2D cross product (z component of the 3D cross product).
    pub fn cross(self, rhs: Vec2) -> f64 {
        self.x * rhs.y - self.y * rhs.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        if n > 0.0 {
            Some(self / n)
        } else {
            None
        }
    }

    /// Counterclockwise rotation by 90 degrees.
    pub fn perp_ccw(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Clockwise rotation by 90 degrees.
    pub fn perp_cw(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    pub fn from_angle(theta: f64) -> Vec2 {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotated(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Scales the vector down if its norm exceeds `cap`.
    pub fn clamp_norm(self, cap: f64) -> Vec2 {
        let n = self.norm();
        if n > cap && n > 0.0 {
            self * (cap / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A permitted-velocity constraint in velocity space: the half-plane through
/// `point` whose boundary runs along `direction` (unit length). A velocity is
/// permitted when it lies on the side reached by rotating `direction`
/// counterclockwise by 90 degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlane {
    pub point: Vec2,
    pub direction: Vec2,
}

impl HalfPlane {
    /// Builds the half-plane through `point` permitting velocities on the
    /// `normal` side: { v : (v - point) . normal >= 0 }.
    pub fn from_point_normal(point: Vec2, normal: Vec2) -> HalfPlane {
        let n = normal
            .normalized()
            .expect("half-plane normal must be nonzero");
        HalfPlane {
            point,
            direction: n.perp_cw(),
        }
    }

    /// Unit normal pointing into the permitted side.
    pub fn normal(&self) -> Vec2 {
        self.direction.perp_ccw()
    }
}

/// Signed violation of a half-plane constraint at velocity `v`: the
/// determinant of the 2x2 matrix [[v - p, d]]. Nonpositive iff `v` is
/// permitted.
pub fn halfplane_violation(v: Vec2, hp: &HalfPlane) -> f64 {
    (v - hp.point).cross(hp.direction)
}

/// A velocity-obstacle cone of one disc robot against another, possibly
/// truncated at a finite horizon. The cone lives in the velocity space of
/// the avoiding robot, translated by `apex_offset` (the other robot's
/// optimization velocity).
#[derive(Clone, Copy, Debug)]
pub struct VoCone {
    pub apex_offset: Vec2,
    /// Other center minus own center, meters.
    pub rel_position: Vec2,
    pub combined_radius: f64,
    /// Seconds; `f64::INFINITY` for the untruncated cone.
    pub horizon: f64,
}

impl VoCone {
    fn capsule(&self) -> Capsule {
        Capsule {
            e0: self.rel_position,
            e1: self.rel_position,
            radius: self.combined_radius,
        }
    }

    /// Membership test for an absolute velocity of the avoiding robot.
    pub fn contains_infinite(&self, v: Vec2) -> bool {
        in_vo_infinite(v - self.apex_offset, self)
    }
}

/// A line segment inflated by a radius, in relative-position space. Used to
/// represent both disc obstacles (degenerate segment) and wall segments.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Capsule {
    pub e0: Vec2,
    pub e1: Vec2,
    pub radius: f64,
}

impl Capsule {
    fn scaled(&self, inv: f64) -> Capsule {
        Capsule {
            e0: self.e0 * inv,
            e1: self.e1 * inv,
            radius: self.radius * inv,
        }
    }

    pub(crate) fn distance_to_origin(&self) -> f64 {
        closest_point_on_segment(Vec2::ZERO, self.e0, self.e1).norm()
    }

    /// Closest point on the capsule surface from `q`, with the outward
    /// surface normal at that point.
    fn surface_point(&self, q: Vec2) -> (Vec2, Vec2) {
        let axis = closest_point_on_segment(q, self.e0, self.e1);
        let n = match (q - axis).normalized() {
            Some(n) => n,
            // q on the axis: push toward the origin, or along a fixed
            // perpendicular if that is degenerate too.
            None => (-axis)
                .normalized()
                .map(|d| {
                    let ax = self.e1 - self.e0;
                    if ax.norm_sq() > 0.0 && ax.dot(d).abs() > 0.999 * ax.norm() {
                        ax.perp_ccw().normalized().unwrap()
                    } else {
                        d
                    }
                })
                .unwrap_or(Vec2::new(1.0, 0.0)),
        };
        (axis + n * self.radius, n)
    }
}

pub(crate) fn closest_point_on_segment(q: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return a;
    }
    let t = ((q - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}

/// First positive distance at which the ray from the origin along unit `dir`
/// enters the solid capsule, if any.
fn ray_capsule_entry(dir: Vec2, c: &Capsule) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t >= 0.0 && best.map_or(true, |b| t < b) {
            best = Some(t);
        }
    };
    for center in [c.e0, c.e1] {
        // |t dir - center|^2 = r^2
        let b = dir.dot(center);
        let disc = b * b - (center.norm_sq() - c.radius * c.radius);
        if disc >= 0.0 {
            let s = disc.sqrt();
            consider(b - s);
            consider(b + s);
        }
    }
    let ax = c.e1 - c.e0;
    if let Some(axn) = ax.normalized() {
        for side in [axn.perp_ccw(), axn.perp_cw()] {
            let p0 = c.e0 + side * c.radius;
            let p1 = c.e1 + side * c.radius;
            // t dir = p0 + s (p1 - p0), 0 <= s <= 1
            let e = p1 - p0;
            let denom = dir.cross(e);
            if denom.abs() > 1e-15 {
                let t = p0.cross(e) / denom;
                let s = p0.cross(dir) / denom;
                if (-1e-12..=1.0 + 1e-12).contains(&s) {
                    consider(t);
                }
            }
        }
    }
    best
}

/// Membership in the capsule velocity obstacle: collision occurs within
/// `horizon` seconds under constant relative velocity `rel_v`.
pub(crate) fn capsule_vo_contains(rel_v: Vec2, c: &Capsule, horizon: f64) -> bool {
    if c.distance_to_origin() <= c.radius {
        return true;
    }
    let speed = rel_v.norm();
    if speed == 0.0 {
        return false;
    }
    let dir = rel_v / speed;
    match ray_capsule_entry(dir, c) {
        Some(t) => {
            if horizon.is_finite() {
                t <= horizon * speed
            } else {
                true
            }
        }
        None => false,
    }
}

/// True iff the ray from the origin along `rel_v` intersects the disc at
/// `cone.rel_position` with radius `cone.combined_radius`, i.e. collision
/// occurs at some future time under constant relative velocity. Already
/// overlapping discs report `true`.
pub fn in_vo_infinite(rel_v: Vec2, cone: &VoCone) -> bool {
    capsule_vo_contains(rel_v, &cone.capsule(), f64::INFINITY)
}

/// Finite-horizon membership for a truncated cone; used by boundary tests.
pub fn in_vo_truncated(rel_v: Vec2, cone: &VoCone) -> bool {
    capsule_vo_contains(rel_v, &cone.capsule(), cone.horizon)
}

/// Candidate closest point on the truncated-cone boundary with its outward
/// normal.
#[derive(Clone, Copy)]
struct BoundaryPoint {
    point: Vec2,
    normal: Vec2,
}

/// Closest escape from the truncated velocity obstacle of `cone`: returns
/// `(u, n)` where `rel_v + u` is the closest point on the boundary of the
/// truncated cone and `n` is the outward unit normal there. When the discs
/// already overlap, the escape is built from the one-time-step cutoff disc
/// so that the robots push apart within `dt`.
pub fn closest_escape(rel_v: Vec2, cone: &VoCone, dt: f64) -> (Vec2, Vec2) {
    capsule_escape(rel_v, &cone.capsule(), cone.horizon, dt)
}

/// Closest escape for a general capsule velocity obstacle truncated at
/// `tau`. Shared by the disc robot-robot case and segment obstacles.
pub(crate) fn capsule_escape(rel_v: Vec2, c: &Capsule, tau: f64, dt: f64) -> (Vec2, Vec2) {
    debug_assert!(tau.is_finite() && tau > 0.0);
    if c.distance_to_origin() < c.radius {
        // Penetration: escape through the time-step cutoff capsule.
        let cut = c.scaled(1.0 / dt);
        let (p, n) = cut.surface_point(rel_v);
        return (p - rel_v, n);
    }

    let mut best: Option<(f64, BoundaryPoint)> = None;
    let mut consider = |bp: BoundaryPoint| {
        let d = (bp.point - rel_v).norm_sq();
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, bp));
        }
    };

    let cut = c.scaled(1.0 / tau);

    // Supporting tangent legs from the origin, one per side.
    let legs = supporting_tangents(c);
    for leg in &legs {
        let start = leg.dir * (leg.tangent_len / tau);
        let t = ((rel_v - start).dot(leg.dir)).max(0.0);
        consider(BoundaryPoint {
            point: start + leg.dir * t,
            normal: leg.outward,
        });
        // The tangency point itself anchors the junction between leg and arc.
        consider(BoundaryPoint {
            point: start,
            normal: leg.outward,
        });
    }

    let visible = |p: Vec2| -> bool {
        let n = p.norm();
        if n == 0.0 {
            return false;
        }
        match ray_capsule_entry(p / n, &cut) {
            Some(t) => t >= n - 1e-9 * n.max(1.0),
            None => true,
        }
    };

    // Front arcs of the cutoff circles.
    for center in [cut.e0, cut.e1] {
        let radial = match (rel_v - center).normalized() {
            Some(r) => r,
            None => (-center).normalized().unwrap_or(Vec2::new(1.0, 0.0)),
        };
        let p = center + radial * cut.radius;
        if visible(p) {
            consider(BoundaryPoint {
                point: p,
                normal: radial,
            });
        }
    }

    // Front edge of the cutoff capsule, when the segment is nondegenerate.
    let ax = cut.e1 - cut.e0;
    if let Some(axn) = ax.normalized() {
        let side = axn.perp_ccw();
        // Edge normal on the origin side of the axis.
        let m = if side.dot(-cut.e0) >= 0.0 {
            side
        } else {
            -side
        };
        let p0 = cut.e0 + m * cut.radius;
        let p1 = cut.e1 + m * cut.radius;
        let q = closest_point_on_segment(rel_v, p0, p1);
        if visible(q) {
            consider(BoundaryPoint {
                point: q,
                normal: m,
            });
        }
        for junction in [p0, p1] {
            if visible(junction) {
                consider(BoundaryPoint {
                    point: junction,
                    normal: m,
                });
            }
        }
    }

    let (_, bp) = best.expect("truncated cone boundary always has candidates");
    (bp.point - rel_v, bp.normal)
}

struct TangentLeg {
    dir: Vec2,
    /// Distance from the origin to the tangency point with the unscaled body.
    tangent_len: f64,
    /// Outward normal of the velocity obstacle along this leg.
    outward: Vec2,
}

/// The two tangent rays from the origin supporting the capsule, labeled by
/// the side the rotation takes: +1 rotates the center direction
/// counterclockwise (body on the right of the ray), -1 the mirror image.
fn supporting_tangents(c: &Capsule) -> Vec<TangentLeg> {
    let mut legs = Vec::with_capacity(2);
    for s in [1.0f64, -1.0] {
        let mut chosen: Option<TangentLeg> = None;
        for (center, other) in [(c.e0, c.e1), (c.e1, c.e0)] {
            let dist_sq = center.norm_sq();
            let leg_sq = dist_sq - c.radius * c.radius;
            if leg_sq <= 0.0 {
                continue;
            }
            let leg = leg_sq.sqrt();
            let dir = Vec2::new(
                center.x * leg - s * center.y * c.radius,
                s * center.x * c.radius + center.y * leg,
            ) / dist_sq;
            // Supports the capsule iff the other circle stays on the body
            // side of the tangent line.
            let side = dir.cross(other);
            let supports = if s > 0.0 {
                side <= -c.radius + 1e-9
            } else {
                side >= c.radius - 1e-9
            };
            if supports {
                let outward = if s > 0.0 {
                    dir.perp_ccw()
                } else {
                    dir.perp_cw()
                };
                chosen = Some(TangentLeg {
                    dir,
                    tangent_len: leg,
                    outward,
                });
                break;
            }
        }
        if let Some(l) = chosen {
            legs.push(l);
        }
    }
    legs
}
