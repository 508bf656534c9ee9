//! Differential-drive model: effective center, forward kinematics and exact
//! arc integration of the pose.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

/// Physical parameters of a differential-drive robot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffDriveParams {
    /// Powered wheel radius, meters. Wheel speeds are linear velocities, so
    /// this does not enter the kinematic map; carried for completeness.
    pub wheel_radius_m: f64,
    /// Distance between the two powered wheels, meters.
    pub axle_length_m: f64,
    /// Offset from the axle center to the effective center, meters.
    pub offset_m: f64,
    /// Bounding circle radius of the body, meters.
    pub body_radius_m: f64,
    /// Maximum wheel linear velocity, m/s.
    pub v_max: f64,
    /// Maximum wheel linear acceleration, m/s^2.
    pub a_max: f64,
}

impl DiffDriveParams {
    /// Radius of the disc centered at the effective center that covers the
    /// body: R + D.
    pub fn effective_radius(&self) -> f64 {
        self.body_radius_m + self.offset_m
    }
}

impl Default for DiffDriveParams {
    fn default() -> Self {
        DiffDriveParams {
            wheel_radius_m: 0.1,
            axle_length_m: 0.6,
            offset_m: 0.015,
            body_radius_m: 0.485,
            v_max: 2.0,
            a_max: 2.0,
        }
    }
}

/// Axle-center position and heading. The heading points from the axle
/// center toward the effective center and is kept in (-pi, pi].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub axle_center: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Pose {
        Pose {
            axle_center: Vec2::new(x, y),
            heading: normalize_angle(heading),
        }
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(std::f64::consts::TAU);
    if r > std::f64::consts::PI {
        r -= std::f64::consts::TAU;
    }
    r
}

/// Position of the effective center: the axle center advanced by the offset
/// along the heading.
pub fn effective_center(pose: &Pose, params: &DiffDriveParams) -> Vec2 {
    pose.axle_center + Vec2::from_angle(pose.heading) * params.offset_m
}

/// Direct kinematics: velocity of the effective center and angular velocity
/// from the wheel speeds at heading `theta`.
pub fn forward_kinematics(
    v_l: f64,
    v_r: f64,
    theta: f64,
    params: &DiffDriveParams,
) -> (f64, f64, f64) {
    let (s, c) = theta.sin_cos();
    let d_over_l = params.offset_m / params.axle_length_m;
    let v_x = (c / 2.0 + d_over_l * s) * v_l + (c / 2.0 - d_over_l * s) * v_r;
    let v_y = (s / 2.0 - d_over_l * c) * v_l + (s / 2.0 + d_over_l * c) * v_r;
    let omega = (v_r - v_l) / params.axle_length_m;
    (v_x, v_y, omega)
}

/// Advances the pose by `dt` seconds under constant wheel speeds, following
/// the exact circular arc about the instantaneous center of rotation.
pub fn integrate(pose: &Pose, v_l: f64, v_r: f64, dt: f64, params: &DiffDriveParams) -> Pose {
    debug_assert!(dt > 0.0);
    let omega = (v_r - v_l) / params.axle_length_m;
    let v = 0.5 * (v_l + v_r);
    let dir = Vec2::from_angle(pose.heading);
    if omega.abs() < 1e-12 {
        return Pose {
            axle_center: pose.axle_center + dir * (v * dt),
            heading: pose.heading,
        };
    }
    // ICR sits at distance v/omega to the left of the heading.
    let icr = pose.axle_center + dir.perp_ccw() * (v / omega);
    let turned = (pose.axle_center - icr).rotated(omega * dt);
    Pose {
        axle_center: icr + turned,
        heading: normalize_angle(pose.heading + omega * dt),
    }
}
