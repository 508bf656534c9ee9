//! Reciprocal permitted half-planes for robot pairs and full-responsibility
//! half-planes against static line-segment obstacles.

use serde::{Deserialize, Serialize};

use crate::error::McError;
use crate::geometry::{capsule_escape, closest_escape, Capsule, HalfPlane, Vec2, VoCone};
use crate::simulator::RobotState;

/// A static wall segment in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSegment {
    pub a: Vec2,
    pub b: Vec2,
}

impl ObstacleSegment {
    pub fn new(a: Vec2, b: Vec2) -> ObstacleSegment {
        ObstacleSegment { a, b }
    }
}

/// Horizon and control period shared by all plane constructions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrcaParams {
    /// Collision-avoidance horizon tau, seconds.
    pub tau: f64,
    /// Control period, seconds. Used as the escape horizon when a pair is
    /// already in penetration.
    pub dt: f64,
    /// Extra pair-radius inflation for robot-robot planes, meters. Planning
    /// against bare effective radii leaves zero clearance on a sanctioned
    /// tangent pass, which sensing noise and the bounded wheel acceleration
    /// then turn into contact; the margin buys back that headroom.
    pub margin: f64,
}

impl Default for OrcaParams {
    fn default() -> OrcaParams {
        OrcaParams {
            tau: 17.0,
            dt: 0.25,
            margin: 0.0,
        }
    }
}

/// The velocity obstacle of `me` against `other`, both using their current
/// effective velocities as optimization velocities.
pub fn pair_vo(me: &RobotState, other: &RobotState, horizon: f64) -> Result<VoCone, McError> {
    let rel = other.effective_center() - me.effective_center();
    if rel.norm_sq() < 1e-18 {
        return Err(McError::CoincidentCenters(me.id, other.id));
    }
    Ok(VoCone {
        apex_offset: other.effective_velocity,
        rel_position: rel,
        combined_radius: me.params.effective_radius() + other.params.effective_radius(),
        horizon,
    })
}

/// Builds the reciprocal permitted half-plane of `me` against `other`: the
/// plane passes through `v_me + u/2`, where `u` is the smallest change of the
/// relative velocity that escapes the pair's velocity obstacle truncated at
/// `tau`. Velocities on the `+n` side are permitted.
pub fn orca_robot_halfplane(
    me: &RobotState,
    other: &RobotState,
    params: &OrcaParams,
) -> Result<HalfPlane, McError> {
    let mut cone = pair_vo(me, other, params.tau)?;
    cone.combined_radius += params.margin;
    let rel_v = me.effective_velocity - other.effective_velocity;
    let (u, n) = closest_escape(rel_v, &cone, params.dt);
    Ok(HalfPlane::from_point_normal(
        me.effective_velocity + u * 0.5,
        n,
    ))
}

/// Builds the permitted half-plane of `me` against a wall segment. The robot
/// takes the full escape vector `u` since the wall cannot move.
pub fn orca_obstacle_halfplanes(
    me: &RobotState,
    seg: &ObstacleSegment,
    params: &OrcaParams,
) -> Result<Vec<HalfPlane>, McError> {
    let c = me.effective_center();
    let capsule = Capsule {
        e0: seg.a - c,
        e1: seg.b - c,
        radius: me.params.effective_radius(),
    };
    if capsule.distance_to_origin() < 1e-9 {
        return Err(McError::RobotOnSegment);
    }
    let (u, n) = capsule_escape(me.effective_velocity, &capsule, params.tau, params.dt);
    Ok(vec![HalfPlane::from_point_normal(
        me.effective_velocity + u,
        n,
    )])
}
