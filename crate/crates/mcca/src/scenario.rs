//! Scenario descriptions: start poses, waypoint schedules, obstacle walls
//! and configuration overrides, serializable to JSON, plus the built-in
//! scenario set.

use serde::{Deserialize, Serialize};

use crate::error::McError;
use crate::geometry::{closest_point_on_segment, Vec2};
use crate::kinematics::{DiffDriveParams, Pose};
use crate::orca::ObstacleSegment;
use crate::simulator::{RobotState, SimConfig, Waypoints, WorldState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub start_x_m: f64,
    pub start_y_m: f64,
    pub start_heading_rad: f64,
    /// Goal points visited in order; with `cycle` the list repeats forever.
    pub waypoints_m: Vec<[f64; 2]>,
    #[serde(default)]
    pub cycle: bool,
    #[serde(default)]
    pub params: Option<DiffDriveParams>,
    /// Initial commanded wheel speeds (left, right); zero when omitted.
    #[serde(default)]
    pub start_wheel_speeds_mps: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub obstacle_segments_m: Vec<ObstacleSegment>,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub config: SimConfig,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<ScenarioSpec, McError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String, McError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rejects initially overlapping robots and goals inside obstacle walls.
    pub fn validate(&self) -> Result<(), McError> {
        let defaults = DiffDriveParams::default();
        let states: Vec<(Vec2, f64)> = self
            .robots
            .iter()
            .map(|r| {
                let p = r.params.unwrap_or(defaults);
                let pose = Pose::new(r.start_x_m, r.start_y_m, r.start_heading_rad);
                (
                    crate::kinematics::effective_center(&pose, &p),
                    p.effective_radius(),
                )
            })
            .collect();
        for i in 0..states.len() {
            for j in (i + 1)..states.len() {
                let d = (states[i].0 - states[j].0).norm();
                if d <= states[i].1 + states[j].1 {
                    return Err(McError::InvalidScenario(format!(
                        "robots {i} and {j} start overlapping (distance {d:.3} m)"
                    )));
                }
            }
        }
        for (i, r) in self.robots.iter().enumerate() {
            if r.waypoints_m.is_empty() {
                return Err(McError::InvalidScenario(format!(
                    "robot {i} has no waypoints"
                )));
            }
            let radius = r.params.unwrap_or(defaults).effective_radius();
            for wp in &r.waypoints_m {
                let g = Vec2::new(wp[0], wp[1]);
                for seg in &self.obstacle_segments_m {
                    let d = (g - closest_point_on_segment(g, seg.a, seg.b)).norm();
                    if d <= radius {
                        return Err(McError::InvalidScenario(format!(
                            "goal ({}, {}) of robot {i} is within {d:.3} m of a wall",
                            wp[0], wp[1]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Instantiates the world, applying `seed`/`max_ticks` style overrides
    /// beforehand via the embedded config.
    pub fn build(&self) -> Result<WorldState, McError> {
        self.validate()?;
        let defaults = DiffDriveParams::default();
        let mut robots = Vec::with_capacity(self.robots.len());
        let mut waypoints = Vec::with_capacity(self.robots.len());
        for (i, r) in self.robots.iter().enumerate() {
            let params = r.params.unwrap_or(defaults);
            let points: Vec<Vec2> = r
                .waypoints_m
                .iter()
                .map(|w| Vec2::new(w[0], w[1]))
                .collect();
            let goal = points[0];
            robots.push(RobotState::new(
                i as u32,
                Pose::new(r.start_x_m, r.start_y_m, r.start_heading_rad),
                r.start_wheel_speeds_mps.unwrap_or((0.0, 0.0)),
                goal,
                params,
            ));
            waypoints.push(Waypoints {
                points,
                cycle: r.cycle,
                index: 0,
            });
        }
        WorldState::new(
            robots,
            waypoints,
            self.obstacle_segments_m.clone(),
            self.config,
        )
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &[
            "scenario1",
            "scenario2",
            "scenario3",
            "scenario4",
            "scenario5",
            "scenario6",
            "scenario7",
        ]
    }

    pub fn builtin(name: &str) -> Option<ScenarioSpec> {
        match name {
            "scenario1" => Some(one_lane_passage()),
            "scenario2" => Some(two_lane_passage()),
            "scenario3" => Some(crossing()),
            "scenario4" => Some(circle_exchange()),
            "scenario5" => Some(congested_arena()),
            "scenario6" => Some(open_field()),
            "scenario7" => Some(low_acceleration_turnaround()),
            _ => None,
        }
    }
}

fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> ObstacleSegment {
    ObstacleSegment::new(Vec2::new(ax, ay), Vec2::new(bx, by))
}

fn robot(x: f64, y: f64, heading: f64, waypoints: &[[f64; 2]]) -> RobotSpec {
    RobotSpec {
        start_x_m: x,
        start_y_m: y,
        start_heading_rad: heading,
        waypoints_m: waypoints.to_vec(),
        cycle: false,
        params: None,
        start_wheel_speeds_mps: None,
    }
}

const PI: f64 = std::f64::consts::PI;

/// Two groups of five meeting at a passage only one robot wide (1.2 m for
/// 1.0 m effective discs). The groups queue on the centerline; the far sides
/// are open so yielding robots can wait next to the entrance.
fn one_lane_passage() -> ScenarioSpec {
    let mut robots = Vec::new();
    for k in 0..5 {
        let x = 4.0 + 2.2 * k as f64;
        // Position exchange along the lane: the queue leader (closest to
        // the passage) takes the farthest mirrored goal, so nobody has to
        // overtake and parked finishers end up behind still-moving ones.
        // The generous start spacing staggers arrivals at the entrance so
        // waiting robots keep inching forward instead of standing still.
        let gx = 12.8 - 2.2 * k as f64;
        robots.push(robot(-x, 0.0, 0.0, &[[gx, 0.0]]));
        robots.push(robot(x, 0.0, PI, &[[-gx, 0.0]]));
    }
    ScenarioSpec {
        name: "scenario1".into(),
        obstacle_segments_m: vec![seg(-2.0, 0.6, 2.0, 0.6), seg(-2.0, -0.6, 2.0, -0.6)],
        robots,
        config: SimConfig {
            max_ticks: 1200,
            ..SimConfig::default()
        },
    }
}

/// Two groups of eight meeting in a passage two robots wide (2.4 m).
fn two_lane_passage() -> ScenarioSpec {
    let mut robots = Vec::new();
    for k in 0..8 {
        let x = 4.0 + 1.6 * (k / 2) as f64;
        let y = if k % 2 == 0 { 0.55 } else { -0.55 };
        let gy = -5.25 + 1.5 * k as f64;
        robots.push(robot(-x, y, 0.0, &[[7.0, gy]]));
        robots.push(robot(x, -y, PI, &[[-7.0, gy]]));
    }
    ScenarioSpec {
        name: "scenario2".into(),
        obstacle_segments_m: vec![seg(-2.0, 1.2, 2.0, 1.2), seg(-2.0, -1.2, 2.0, -1.2)],
        robots,
        config: SimConfig {
            max_ticks: 1200,
            ..SimConfig::default()
        },
    }
}

/// Two files of robots crossing at a right angle in an open square.
fn crossing() -> ScenarioSpec {
    let mut robots = Vec::new();
    for k in 0..6 {
        // Full-width lanes: each file occupies six parallel lanes wide
        // enough for a robot, so the two files interleave as a grid at the
        // junction instead of two diagonal columns fighting over one spot.
        let off = 6.0 + 1.6 * k as f64;
        let lane = -4.0 + 1.6 * k as f64;
        robots.push(robot(-off, lane, 0.0, &[[8.0, lane]]));
        robots.push(robot(lane, -off, PI / 2.0, &[[lane, 8.0]]));
    }
    ScenarioSpec {
        name: "scenario3".into(),
        obstacle_segments_m: vec![],
        robots,
        config: SimConfig {
            max_ticks: 1200,
            ..SimConfig::default()
        },
    }
}

/// Twelve robots on a circle exchanging places with their antipodes.
fn circle_exchange() -> ScenarioSpec {
    let n = 12;
    let r = 6.0;
    let mut robots = Vec::new();
    for k in 0..n {
        let a = 2.0 * PI * k as f64 / n as f64;
        let p = Vec2::from_angle(a) * r;
        robots.push(robot(p.x, p.y, a + PI, &[[-p.x, -p.y]]));
    }
    ScenarioSpec {
        name: "scenario4".into(),
        obstacle_segments_m: vec![],
        robots,
        config: SimConfig {
            max_ticks: 1200,
            ..SimConfig::default()
        },
    }
}

/// Forty robots in a walled arena shuttling between perimeter points for
/// the whole run (cycling waypoints, so the run always lasts `max_ticks`).
fn congested_arena() -> ScenarioSpec {
    let n = 40;
    let r = 12.0;
    let half = 13.5;
    // Dense traffic amplifies one-period control lag, so the arena runs at
    // a reduced top speed.
    let params = DiffDriveParams {
        v_max: 1.2,
        ..DiffDriveParams::default()
    };
    let mut robots = Vec::new();
    for k in 0..n {
        // Closed equilateral triangle tour on the perimeter. Every leg
        // advances the same way around the circle, so cross traffic never
        // flows head-on against returning robots, and because 40 is not
        // divisible by 3 no two robots ever target the same vertex.
        let pt =
            |i: f64| Vec2::from_angle(2.0 * PI * (k as f64 + i * n as f64 / 3.0) / n as f64) * r;
        let (p, q, s) = (pt(0.0), pt(1.0), pt(2.0));
        let mut spec = robot(
            p.x,
            p.y,
            (q - p).angle(),
            &[[q.x, q.y], [s.x, s.y], [p.x, p.y]],
        );
        spec.cycle = true;
        spec.params = Some(params);
        robots.push(spec);
    }
    ScenarioSpec {
        name: "scenario5".into(),
        obstacle_segments_m: vec![
            seg(-half, -half, half, -half),
            seg(half, -half, half, half),
            seg(half, half, -half, half),
            seg(-half, half, -half, -half),
        ],
        robots,
        config: SimConfig {
            max_ticks: 2400,
            // Vertices sit inside the traffic stream; a generous arrival
            // radius keeps robots from hovering at a contested point.
            goal_tolerance_m: 0.4,
            // At the default 17 s horizon nearly every robot in the arena
            // constrains every other and yielding turns into minute-long
            // standstills. Eight seconds still covers two braking distances
            // at this speed while keeping avoidance local.
            tau_s: 8.0,
            ..SimConfig::default()
        },
    }
}

/// Twenty robots with scattered starts and goals in open space.
fn open_field() -> ScenarioSpec {
    let mut robots = Vec::new();
    let n = 20;
    for k in 0..n {
        let a = 2.0 * PI * k as f64 / n as f64;
        let r = 7.0 + 1.5 * ((k % 3) as f64);
        let p = Vec2::from_angle(a) * r;
        let b = 2.0 * PI * ((k + 7) % n) as f64 / n as f64;
        let q = Vec2::from_angle(b) * (7.0 + 1.5 * (((k + 1) % 3) as f64));
        robots.push(robot(p.x, p.y, (q - p).angle(), &[[q.x, q.y]]));
    }
    ScenarioSpec {
        name: "scenario6".into(),
        obstacle_segments_m: vec![],
        robots,
        config: SimConfig {
            max_ticks: 1200,
            ..SimConfig::default()
        },
    }
}

/// One robot with the wheel acceleration cut to 0.2 m/s^2, its goal
/// directly behind and an initial spin it can barely brake: the setup
/// where heading control matters. With the angular constraint the robot
/// settles and drives off; without it the spin feeds itself and the robot
/// circles indefinitely.
fn low_acceleration_turnaround() -> ScenarioSpec {
    let params = DiffDriveParams {
        a_max: 0.2,
        ..DiffDriveParams::default()
    };
    let mut spec = robot(0.0, 0.0, 0.0, &[[-6.0, 0.0], [6.0, 0.0]]);
    spec.params = Some(params);
    spec.start_wheel_speeds_mps = Some((-0.3, 0.3));
    ScenarioSpec {
        name: "scenario7".into(),
        obstacle_segments_m: vec![],
        robots: vec![spec],
        config: SimConfig {
            max_ticks: 1600,
            ..SimConfig::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for name in ScenarioSpec::builtin_names() {
            let s = ScenarioSpec::builtin(name).unwrap();
            s.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn json_round_trip() {
        for name in ScenarioSpec::builtin_names() {
            let s = ScenarioSpec::builtin(name).unwrap();
            let text = s.to_json().unwrap();
            let back = ScenarioSpec::from_json(&text).unwrap();
            assert_eq!(s.name, back.name);
            assert_eq!(s.robots, back.robots);
            assert_eq!(s.obstacle_segments_m, back.obstacle_segments_m);
            let again = back.to_json().unwrap();
            assert_eq!(text, again);
        }
    }

    #[test]
    fn unknown_builtin_is_none() {
        assert!(ScenarioSpec::builtin("scenario99").is_none());
    }

    #[test]
    fn overlapping_starts_rejected() {
        let mut s = ScenarioSpec::builtin("scenario4").unwrap();
        s.robots[1].start_x_m = s.robots[0].start_x_m;
        s.robots[1].start_y_m = s.robots[0].start_y_m;
        assert!(s.validate().is_err());
    }

    #[test]
    fn goal_inside_wall_rejected() {
        let mut s = ScenarioSpec::builtin("scenario1").unwrap();
        s.robots[0].waypoints_m = vec![[0.0, 0.6]];
        assert!(s.validate().is_err());
    }

    #[test]
    fn empty_scenario_runs_clean() {
        let s = ScenarioSpec {
            name: "empty".into(),
            obstacle_segments_m: vec![],
            robots: vec![],
            config: SimConfig::default(),
        };
        let mut w = s.build().unwrap();
        let out = w.run().unwrap();
        assert!(out.metrics.collision_events.is_empty());
        assert_eq!(out.log.lines().count(), 1, "header only");
    }
}
