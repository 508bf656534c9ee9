//! Masked velocities, masked velocity obstacles (MVO), and MCCA half-planes:
//! the deadlock-avoidance layer on top of the reciprocal planes.
//!
//! A head robot picks a masked velocity that approaches its preferred
//! velocity while respecting only the static obstacles. Normal robots must
//! additionally keep their masked velocities out of the MVOs of every other
//! robot, taking the full escape vector themselves so the head never has to
//! adapt. The masked velocity is an intention that is broadcast, not driven.

use serde::{Deserialize, Serialize};

use crate::error::McError;
use crate::geometry::{closest_escape, HalfPlane, Vec2, VoCone};
use crate::orca::{orca_obstacle_halfplanes, ObstacleSegment, OrcaParams};
use crate::qp::{build_holonomic, solve};
use crate::simulator::RobotState;

/// A broadcast velocity intention. Unlike the executed velocity it is not
/// limited by the speed disc; the simulator caps it at a large box only to
/// keep degenerate plane sets from producing unbounded numbers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskedVelocity {
    pub v: Vec2,
}

impl MaskedVelocity {
    pub fn new(v: Vec2) -> MaskedVelocity {
        MaskedVelocity { v }
    }
}

/// Objective weights for the velocity programs. `alpha1` pulls toward the
/// preferred velocity, `alpha2`/`alpha3`/`alpha4` penalize violations of
/// obstacle, robot, and MCCA planes, and `alpha5` penalizes the angular
/// slack. Obstacle and robot planes must dominate the MCCA planes, which in
/// turn dominate the preference term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MccaWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
}

impl Default for MccaWeights {
    fn default() -> MccaWeights {
        MccaWeights {
            alpha1: 1e-2,
            alpha2: 1e4,
            alpha3: 1e2,
            alpha4: 1.0,
            alpha5: 2e4,
        }
    }
}

impl MccaWeights {
    /// Checks the ordering alpha2, alpha3 >> alpha4 >> alpha1 (ratio at
    /// least 10 at each step). `alpha5 = 0` is allowed and disables the
    /// angular constraint.
    pub fn validate(&self) -> Result<(), McError> {
        let ordered = self.alpha1 > 0.0
            && self.alpha4 >= 10.0 * self.alpha1
            && self.alpha3 >= 10.0 * self.alpha4
            && self.alpha2 >= 10.0 * self.alpha4
            && self.alpha5 >= 0.0;
        if ordered {
            Ok(())
        } else {
            Err(McError::InvalidWeights(
                "need alpha2, alpha3 >= 10 alpha4 >= 100 alpha1 > 0 and alpha5 >= 0".into(),
            ))
        }
    }
}

/// Solves the head robot's masked velocity: the closest point to `v_pref`
/// that respects the obstacle planes. Other robots do not appear, which is
/// what lets a head drive into a crowd and force it to part.
pub fn masked_velocity_head(
    me: &RobotState,
    v_pref: Vec2,
    obstacles: &[ObstacleSegment],
    params: &OrcaParams,
    weights: &MccaWeights,
    mask_cap: f64,
) -> Result<MaskedVelocity, McError> {
    let mut planes = Vec::new();
    for seg in obstacles {
        planes.extend(orca_obstacle_halfplanes(me, seg, params)?);
    }
    let p = build_holonomic(v_pref, &planes, &[], &[], weights, mask_cap);
    let s = solve(&p)?;
    Ok(MaskedVelocity::new(Vec2::new(s.x[0], s.x[1])))
}

/// The masked velocity obstacle of `me` against `other`: the pair's velocity
/// obstacle with the other's broadcast masked velocity as its apex offset.
pub fn mvo(
    me: &RobotState,
    other: &RobotState,
    other_masked: MaskedVelocity,
    horizon: f64,
) -> Result<VoCone, McError> {
    let rel = other.effective_center() - me.effective_center();
    if rel.norm_sq() < 1e-18 {
        return Err(McError::CoincidentCenters(me.id, other.id));
    }
    Ok(VoCone {
        apex_offset: other_masked.v,
        rel_position: rel,
        combined_radius: me.params.effective_radius() + other.params.effective_radius(),
        horizon,
    })
}

/// Builds the MCCA half-plane of a normal robot `me` against `other`. The
/// plane passes through `v_me + u` with the full escape vector: the normal
/// robot adapts alone instead of splitting the correction with the other.
pub fn mcca_halfplane(
    me: &RobotState,
    other: &RobotState,
    other_masked: MaskedVelocity,
    params: &OrcaParams,
) -> Result<HalfPlane, McError> {
    let cone = mvo(me, other, other_masked, params.tau)?;
    let rel_v = me.effective_velocity - other_masked.v;
    let (u, n) = closest_escape(rel_v, &cone, params.dt);
    Ok(HalfPlane::from_point_normal(me.effective_velocity + u, n))
}

/// Solves a normal robot's masked velocity: closest point to `v_pref` that
/// respects the obstacle planes and the MCCA planes against every other
/// robot's broadcast masked velocity.
pub fn masked_velocity_normal(
    me: &RobotState,
    v_pref: Vec2,
    others: &[(&RobotState, MaskedVelocity)],
    obstacles: &[ObstacleSegment],
    params: &OrcaParams,
    weights: &MccaWeights,
    mask_cap: f64,
) -> Result<MaskedVelocity, McError> {
    let mut obstacle_planes = Vec::new();
    for seg in obstacles {
        obstacle_planes.extend(orca_obstacle_halfplanes(me, seg, params)?);
    }
    let mut mcca_planes = Vec::with_capacity(others.len());
    for (other, masked) in others {
        mcca_planes.push(mcca_halfplane(me, other, *masked, params)?);
    }
    let p = build_holonomic(
        v_pref,
        &obstacle_planes,
        &[],
        &mcca_planes,
        weights,
        mask_cap,
    );
    let s = solve(&p)?;
    Ok(MaskedVelocity::new(Vec2::new(s.x[0], s.x[1])))
}
