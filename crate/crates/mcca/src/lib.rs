//! Decentralized collision-free and deadlock-free velocity planning for
//! differential-drive robots.
//!
//! Each robot plans over permitted-velocity half-planes with a small convex
//! quadratic program. On top of the reciprocal avoidance layer, robots
//! broadcast a masked velocity (their deadlock-free intention) and take
//! priorities (head or normal) so that blocked formations untangle without
//! central coordination.

pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod mcca;
pub mod orca;
pub mod priority;
pub mod qp;
pub mod scenario;
pub mod simulator;
pub mod trace;

pub use error::{McError, QpError};
pub use geometry::{halfplane_violation, HalfPlane, Vec2, VoCone};
pub use kinematics::{DiffDriveParams, Pose};
pub use mcca::{MaskedVelocity, MccaWeights};
pub use orca::{ObstacleSegment, OrcaParams};
pub use priority::PriorityState;
pub use simulator::{Metrics, RobotState, SimConfig, WorldState};
