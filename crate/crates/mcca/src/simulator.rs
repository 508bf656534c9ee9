//! The synchronous broadcast world: per-tick sensing with noise, priority
//! update, plane construction, masked-velocity and control programs,
//! actuation and metrics.
//!
//! All robots within one tick compute from the previous tick's broadcast
//! snapshot, so iteration order cannot influence the result and runs are
//! reproducible bit for bit.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::McError;
use crate::geometry::{HalfPlane, Vec2};
use crate::kinematics::{effective_center, forward_kinematics, integrate, DiffDriveParams, Pose};
use crate::mcca::{
    masked_velocity_head, masked_velocity_normal, mcca_halfplane, MaskedVelocity, MccaWeights,
};
use crate::orca::{orca_obstacle_halfplanes, orca_robot_halfplane, ObstacleSegment, OrcaParams};
use crate::priority::{conflicts_with_head, update_priority, PriorityState};
use crate::qp::{angular_constraint, build_diffdrive, build_holonomic, solve};

/// Everything one robot broadcasts, plus its physical parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobotState {
    pub id: u32,
    pub pose: Pose,
    /// Commanded wheel linear speeds (left, right), m/s.
    pub wheel_speeds: (f64, f64),
    /// Velocity of the effective center, consistent with the wheel speeds
    /// and heading.
    pub effective_velocity: Vec2,
    pub masked_velocity: MaskedVelocity,
    pub priority: PriorityState,
    /// Current goal point, meters.
    pub goal: Vec2,
    pub params: DiffDriveParams,
}

impl RobotState {
    pub fn new(
        id: u32,
        pose: Pose,
        wheel_speeds: (f64, f64),
        goal: Vec2,
        params: DiffDriveParams,
    ) -> RobotState {
        let (vx, vy, _) = forward_kinematics(wheel_speeds.0, wheel_speeds.1, pose.heading, &params);
        RobotState {
            id,
            pose,
            wheel_speeds,
            effective_velocity: Vec2::new(vx, vy),
            masked_velocity: MaskedVelocity::default(),
            priority: PriorityState::default(),
            goal,
            params,
        }
    }

    pub fn effective_center(&self) -> Vec2 {
        effective_center(&self.pose, &self.params)
    }

    fn angular_velocity(&self) -> f64 {
        (self.wheel_speeds.1 - self.wheel_speeds.0) / self.params.axle_length_m
    }
}

/// Simulation-wide parameters. Defaults follow the reference setup: 0.25 s
/// control period, 17 s horizon, 9 for the angular split, 30 tabu ticks, and
/// uniform sensing noise of 1 cm and 1 degree.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt_s: f64,
    pub tau_s: f64,
    pub weights: MccaWeights,
    pub mu: f64,
    pub eta: u32,
    pub noise_pos_amp_m: f64,
    pub noise_ang_amp_rad: f64,
    pub rng_seed: u64,
    pub goal_tolerance_m: f64,
    pub max_ticks: u64,
    /// Masked velocities are boxed to `mask_cap_factor * v_max`.
    pub mask_cap_factor: f64,
    pub deadlock_window_s: f64,
    pub deadlock_eps_m: f64,
    /// Pair-radius inflation for robot-robot avoidance planes, meters.
    /// Covers broadcast pose noise plus the velocity the wheel-acceleration
    /// box cannot shed within one control period; without it a sanctioned
    /// tangent pass plans zero physical clearance.
    pub plan_margin_m: f64,
    /// Evaluate the control program's kinematic rows at the half-period
    /// heading `theta + omega dt/2` instead of the current heading. The
    /// executed step sweeps the heading, so the midpoint matches the chord
    /// the robot actually drives and suppresses reorientation error.
    pub plan_midpoint_heading: bool,
}

impl Default for SimConfig {
    fn default() -> SimConfig {
        SimConfig {
            dt_s: 0.25,
            tau_s: 17.0,
            weights: MccaWeights::default(),
            mu: 9.0,
            eta: 30,
            noise_pos_amp_m: 0.01,
            noise_ang_amp_rad: 1.0_f64.to_radians(),
            rng_seed: 7,
            goal_tolerance_m: 0.1,
            max_ticks: 4800,
            mask_cap_factor: 4.0,
            deadlock_window_s: 60.0,
            deadlock_eps_m: 0.2,
            plan_margin_m: 0.10,
            plan_midpoint_heading: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub tick: u64,
    pub a: u32,
    pub b: u32,
    pub depth_m: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DeadlockFlag {
    pub tick: u64,
    pub robot: u32,
}

/// Run statistics. Clearances use the physical body circles (radius R
/// around the axle center), not the inflated effective discs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub collision_events: Vec<CollisionEvent>,
    pub min_pairwise_clearance_m: f64,
    pub deadlock_flags: Vec<DeadlockFlag>,
    pub goal_completion_ticks: Vec<Option<u64>>,
    /// Wall-clock cost of each tick's planning, milliseconds.
    pub solve_times_ms: Vec<f64>,
    /// Ticks where two surviving heads were in masked-velocity conflict.
    pub head_conflict_violations: u64,
    pub ticks: u64,
}

impl Metrics {
    fn new(n: usize) -> Metrics {
        Metrics {
            collision_events: Vec::new(),
            min_pairwise_clearance_m: f64::INFINITY,
            deadlock_flags: Vec::new(),
            goal_completion_ticks: vec![None; n],
            solve_times_ms: Vec::new(),
            head_conflict_violations: 0,
            ticks: 0,
        }
    }
}

/// A robot's goal schedule. With `cycle` the list repeats, producing round
/// trips; otherwise the robot parks at the last point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Waypoints {
    pub points: Vec<Vec2>,
    pub cycle: bool,
    #[serde(default)]
    pub index: usize,
}

impl Waypoints {
    pub fn one(goal: Vec2) -> Waypoints {
        Waypoints {
            points: vec![goal],
            cycle: false,
            index: 0,
        }
    }

    pub fn current(&self) -> Vec2 {
        let i = self.index.min(self.points.len() - 1);
        self.points[i]
    }

    pub fn done(&self) -> bool {
        !self.cycle && self.index >= self.points.len()
    }

    fn advance(&mut self) {
        self.index += 1;
        if self.cycle {
            self.index %= self.points.len();
        }
    }
}

/// Goal-directed preferred velocity: straight at the goal, capped at v_max,
/// zero inside the arrival tolerance.
pub fn preferred_velocity(r: &RobotState, goal: Vec2, tolerance: f64) -> Vec2 {
    let d = goal - r.effective_center();
    if d.norm() <= tolerance {
        Vec2::ZERO
    } else {
        d.clamp_norm(r.params.v_max)
    }
}

struct Decision {
    wheels: (f64, f64),
    priority: PriorityState,
    masked: MaskedVelocity,
    candidate: MaskedVelocity,
}

pub struct WorldState {
    pub robots: Vec<RobotState>,
    pub waypoints: Vec<Waypoints>,
    pub obstacles: Vec<ObstacleSegment>,
    pub config: SimConfig,
    pub tick: u64,
    pub metrics: Metrics,
    rngs: Vec<ChaCha8Rng>,
    /// Recent effective-center positions per robot, for deadlock detection.
    history: Vec<VecDeque<Vec2>>,
}

pub struct RunOutput {
    pub log: String,
    pub metrics: Metrics,
}

impl WorldState {
    pub fn new(
        robots: Vec<RobotState>,
        waypoints: Vec<Waypoints>,
        obstacles: Vec<ObstacleSegment>,
        config: SimConfig,
    ) -> Result<WorldState, McError> {
        if robots.len() != waypoints.len() {
            return Err(McError::InvalidScenario(
                "one waypoint list per robot required".into(),
            ));
        }
        if waypoints.iter().any(|w| w.points.is_empty()) {
            return Err(McError::InvalidScenario("empty waypoint list".into()));
        }
        config.weights.validate()?;
        let n = robots.len();
        let rngs = robots
            .iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
                rng.set_stream(u64::from(r.id) + 1);
                rng
            })
            .collect();
        Ok(WorldState {
            metrics: Metrics::new(n),
            history: vec![VecDeque::new(); n],
            rngs,
            robots,
            waypoints,
            obstacles,
            config,
            tick: 0,
        })
    }

    pub fn all_done(&self) -> bool {
        self.waypoints.iter().all(|w| w.done())
    }

    fn noise(rng: &mut ChaCha8Rng, amp: f64) -> f64 {
        if amp > 0.0 {
            rng.gen_range(-amp..=amp)
        } else {
            0.0
        }
    }

    /// The broadcast snapshot for this tick: every robot's state with its
    /// own noisy pose reading substituted in.
    fn broadcast_snapshot(&mut self) -> Vec<RobotState> {
        let cfg = self.config;
        let mut snapshot = self.robots.clone();
        for (r, rng) in snapshot.iter_mut().zip(&mut self.rngs) {
            let dx = Self::noise(rng, cfg.noise_pos_amp_m);
            let dy = Self::noise(rng, cfg.noise_pos_amp_m);
            let da = Self::noise(rng, cfg.noise_ang_amp_rad);
            r.pose = Pose::new(
                r.pose.axle_center.x + dx,
                r.pose.axle_center.y + dy,
                r.pose.heading + da,
            );
            let (vx, vy, _) = forward_kinematics(
                r.wheel_speeds.0,
                r.wheel_speeds.1,
                r.pose.heading,
                &r.params,
            );
            r.effective_velocity = Vec2::new(vx, vy);
        }
        snapshot
    }

    fn plan_robot(
        &self,
        snapshot: &[RobotState],
        i: usize,
        heads: &[&RobotState],
    ) -> Result<Decision, McError> {
        let cfg = &self.config;
        let me = &snapshot[i];
        let goal = self.waypoints[i].current();
        let v_pref = preferred_velocity(me, goal, cfg.goal_tolerance_m);
        let mask_cap = cfg.mask_cap_factor * me.params.v_max;
        let orca_p = OrcaParams {
            tau: cfg.tau_s,
            dt: cfg.dt_s,
            margin: cfg.plan_margin_m,
        };

        let candidate =
            masked_velocity_head(me, v_pref, &self.obstacles, &orca_p, &cfg.weights, mask_cap)?;
        let at_goal = (goal - me.effective_center()).norm() <= cfg.goal_tolerance_m;
        let priority = update_priority(me, candidate, at_goal, heads, cfg.eta);

        let others: Vec<(&RobotState, MaskedVelocity)> = snapshot
            .iter()
            .filter(|o| o.id != me.id)
            .map(|o| (o, o.masked_velocity))
            .collect();
        let masked = if priority.is_head {
            candidate
        } else {
            masked_velocity_normal(
                me,
                v_pref,
                &others,
                &self.obstacles,
                &orca_p,
                &cfg.weights,
                mask_cap,
            )?
        };

        let mut obstacle_planes: Vec<HalfPlane> = Vec::new();
        for seg in &self.obstacles {
            obstacle_planes.extend(orca_obstacle_halfplanes(me, seg, &orca_p)?);
        }
        let mut robot_planes = Vec::with_capacity(2 * others.len());
        let mut mcca_planes = Vec::new();
        for (other, other_masked) in &others {
            robot_planes.push(orca_robot_halfplane(me, other, &orca_p)?);
            // Braking envelope: cap the approach speed toward the neighbor
            // at half of what an a_max deceleration chain can shed before
            // the gap closes (v^2 <= a_max * gap / 2 per robot). Two
            // mutually approaching robots riding the cap then stop with
            // half the gap still unspent, leaving reserve for the soft
            // constraints and the one-period control lag.
            let rel = other.effective_center() - me.effective_center();
            let dist = rel.norm();
            if dist > 1e-9 {
                let r_sum = me.params.effective_radius()
                    + other.params.effective_radius()
                    + cfg.plan_margin_m;
                let gap = (dist - r_sum).max(0.0);
                let cap = (0.5 * me.params.a_max * gap).sqrt();
                let toward = rel / dist;
                robot_planes.push(HalfPlane::from_point_normal(toward * cap, -toward));
            }
            if !priority.is_head {
                mcca_planes.push(mcca_halfplane(me, other, *other_masked, &orca_p)?);
            }
        }

        // Best holonomic velocity over the full plane set, inside the speed
        // box: this fixes the heading target for the angular constraint.
        let hol = build_holonomic(
            v_pref,
            &obstacle_planes,
            &robot_planes,
            &mcca_planes,
            &cfg.weights,
            me.params.v_max,
        );
        let hs = solve(&hol)?;
        let v_h_opt = Vec2::new(hs.x[0], hs.x[1]);

        let omega = me.angular_velocity();
        let omega_sign = if omega.abs() < 1e-12 {
            0.0
        } else {
            omega.signum()
        };
        let angular = angular_constraint(
            omega_sign,
            me.pose.heading,
            v_h_opt,
            cfg.mu,
            me.params.a_max,
            me.params.axle_length_m,
        );

        // Plan the control step against the midpoint heading: with the
        // current omega held over half a period the step-average velocity
        // direction is theta + omega*dt/2, and evaluating plane rows at the
        // initial heading misrepresents the swept chord badly when the
        // robot is reorienting fast.
        let mut plan_me = me.clone();
        if cfg.plan_midpoint_heading {
            plan_me.pose.heading += omega * 0.5 * cfg.dt_s;
        }
        let (qp, layout) = build_diffdrive(
            &plan_me,
            &me.params,
            v_pref,
            &obstacle_planes,
            &robot_planes,
            &mcca_planes,
            &cfg.weights,
            cfg.dt_s,
            angular,
        );
        let sol = solve(&qp)?;
        Ok(Decision {
            wheels: (sol.x[layout.v_l], sol.x[layout.v_r]),
            priority,
            masked,
            candidate,
        })
    }

    /// One synchronous control cycle.
    pub fn step(&mut self) -> Result<(), McError> {
        let started = Instant::now();
        let snapshot = self.broadcast_snapshot();
        let heads: Vec<&RobotState> = snapshot.iter().filter(|r| r.priority.is_head).collect();

        let mut decisions = Vec::with_capacity(snapshot.len());
        for i in 0..snapshot.len() {
            match self.plan_robot(&snapshot, i, &heads) {
                Ok(d) => decisions.push(d),
                Err(e) => {
                    return Err(McError::TickAborted {
                        tick: self.tick,
                        robot: snapshot[i].id,
                        source: Box::new(e),
                        snapshot: format!("{:?}", snapshot[i]),
                    })
                }
            }
        }
        self.metrics
            .solve_times_ms
            .push(started.elapsed().as_secs_f64() * 1e3);

        // No-conflicting-heads check on the decision snapshot: a robot that
        // stayed head despite a snapshot head of strictly larger importance
        // must not have been in conflict with it.
        for (i, di) in decisions.iter().enumerate() {
            if !di.priority.is_head {
                continue;
            }
            for j in 0..decisions.len() {
                if i == j || !decisions[j].priority.is_head {
                    continue;
                }
                let sj = &snapshot[j];
                if sj.priority.is_head
                    && snapshot[i].priority.importance < sj.priority.importance
                    && conflicts_with_head(&snapshot[i], di.candidate, sj)
                {
                    self.metrics.head_conflict_violations += 1;
                }
            }
        }

        // Commit phase: actuate on the true poses, then collision sampling
        // along the executed arcs at 10 ms resolution.
        let old_poses: Vec<Pose> = self.robots.iter().map(|r| r.pose).collect();
        for (r, d) in self.robots.iter_mut().zip(&decisions) {
            r.pose = integrate(&r.pose, d.wheels.0, d.wheels.1, self.config.dt_s, &r.params);
            r.wheel_speeds = d.wheels;
            let (vx, vy, _) = forward_kinematics(d.wheels.0, d.wheels.1, r.pose.heading, &r.params);
            r.effective_velocity = Vec2::new(vx, vy);
            r.masked_velocity = d.masked;
            r.priority = d.priority;
        }
        self.sample_collisions(&old_poses, &decisions);

        self.tick += 1;
        self.metrics.ticks = self.tick;

        // Waypoint bookkeeping and deadlock detection on true poses.
        let window = (self.config.deadlock_window_s / self.config.dt_s).round() as usize;
        for i in 0..self.robots.len() {
            let center = self.robots[i].effective_center();
            let wp = &mut self.waypoints[i];
            if !wp.done() && (wp.current() - center).norm() <= self.config.goal_tolerance_m {
                wp.advance();
                if wp.done() && self.metrics.goal_completion_ticks[i].is_none() {
                    self.metrics.goal_completion_ticks[i] = Some(self.tick);
                }
            }
            self.robots[i].goal = wp.current();

            let hist = &mut self.history[i];
            hist.push_back(center);
            if hist.len() > window + 1 {
                hist.pop_front();
            }
            if hist.len() == window + 1 && !wp.done() {
                let moved = (center - hist[0]).norm();
                let to_goal = (wp.current() - center).norm();
                if moved < self.config.deadlock_eps_m && to_goal > self.config.goal_tolerance_m {
                    self.metrics.deadlock_flags.push(DeadlockFlag {
                        tick: self.tick,
                        robot: self.robots[i].id,
                    });
                }
            }
        }
        Ok(())
    }

    /// Pairwise clearance of the physical body circles sampled every 10 ms
    /// along the tick's motion arcs.
    fn sample_collisions(&mut self, old_poses: &[Pose], decisions: &[Decision]) {
        let n = self.robots.len();
        if n < 2 {
            return;
        }
        let dt = self.config.dt_s;
        let substeps = (dt / 0.01).round().max(1.0) as usize;
        let mut colliding = vec![false; n * n];
        for s in 1..=substeps {
            let t = dt * s as f64 / substeps as f64;
            let centers: Vec<Vec2> = (0..n)
                .map(|i| {
                    integrate(
                        &old_poses[i],
                        decisions[i].wheels.0,
                        decisions[i].wheels.1,
                        t,
                        &self.robots[i].params,
                    )
                    .axle_center
                })
                .collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    let rr =
                        self.robots[i].params.body_radius_m + self.robots[j].params.body_radius_m;
                    let d = (centers[i] - centers[j]).norm();
                    let clearance = d - rr;
                    if clearance < self.metrics.min_pairwise_clearance_m {
                        self.metrics.min_pairwise_clearance_m = clearance;
                    }
                    if clearance < 0.0 && !colliding[i * n + j] {
                        colliding[i * n + j] = true;
                        self.metrics.collision_events.push(CollisionEvent {
                            tick: self.tick,
                            a: self.robots[i].id,
                            b: self.robots[j].id,
                            depth_m: -clearance,
                        });
                    }
                }
            }
        }
    }

    fn append_log(&self, out: &mut String) {
        for r in &self.robots {
            let m = r.masked_velocity.v;
            writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}",
                self.tick,
                r.id,
                r.pose.axle_center.x,
                r.pose.axle_center.y,
                r.pose.heading,
                r.wheel_speeds.0,
                r.wheel_speeds.1,
                r.effective_velocity.x,
                r.effective_velocity.y,
                m.x,
                m.y,
                r.priority.label(),
                r.priority.importance,
                r.priority.tabu_remaining,
            )
            .expect("writing to a String cannot fail");
        }
    }

    /// Runs until every robot has exhausted its waypoint schedule or
    /// `max_ticks` elapse. Returns the trajectory log and the metrics.
    pub fn run(&mut self) -> Result<RunOutput, McError> {
        let mut log = String::new();
        log.push_str("tick\tid\tx\ty\ttheta\tv_l\tv_r\tv_x\tv_y\tmask_x\tmask_y\tpriority\tS\tT\n");
        self.append_log(&mut log);
        while self.tick < self.config.max_ticks && !self.all_done() {
            self.step()?;
            self.append_log(&mut log);
        }
        Ok(RunOutput {
            log,
            metrics: self.metrics.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn free_robot(id: u32, x: f64, y: f64, heading: f64, goal: Vec2) -> RobotState {
        RobotState::new(
            id,
            Pose::new(x, y, heading),
            (0.0, 0.0),
            goal,
            DiffDriveParams::default(),
        )
    }

    fn quiet_config() -> SimConfig {
        SimConfig {
            noise_pos_amp_m: 0.0,
            noise_ang_amp_rad: 0.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn preferred_velocity_examples() {
        let r = free_robot(0, 0.0, 0.0, 0.0, Vec2::ZERO);
        let c = r.effective_center();
        let far = preferred_velocity(&r, c + Vec2::new(10.0, 0.0), 0.1);
        assert_relative_eq!(far.norm(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(far.y, 0.0, epsilon = 1e-12);
        let near = preferred_velocity(&r, c + Vec2::new(0.3, 0.0), 0.1);
        assert_relative_eq!(near.x, 0.3, epsilon = 1e-12);
        let at = preferred_velocity(&r, c + Vec2::new(0.05, 0.0), 0.1);
        assert_eq!(at, Vec2::ZERO);
    }

    #[test]
    fn single_robot_accelerates_within_limits() {
        let goal = Vec2::new(10.0, 0.0);
        let mut w = WorldState::new(
            vec![free_robot(0, 0.0, 0.0, 0.0, goal)],
            vec![Waypoints::one(goal)],
            vec![],
            quiet_config(),
        )
        .unwrap();
        w.step().unwrap();
        let r = &w.robots[0];
        let dv = r.params.a_max * w.config.dt_s;
        assert!(r.wheel_speeds.0.abs() <= dv + 1e-9);
        assert!(r.wheel_speeds.1.abs() <= dv + 1e-9);
        // Goal dead ahead: drive straight.
        assert!(r.wheel_speeds.0 > 0.1);
        assert_relative_eq!(r.wheel_speeds.0, r.wheel_speeds.1, epsilon = 1e-6);
    }

    #[test]
    fn single_robot_reaches_goal() {
        let goal = Vec2::new(6.0, 2.0);
        let mut w = WorldState::new(
            vec![free_robot(0, 0.0, 0.0, 0.0, goal)],
            vec![Waypoints::one(goal)],
            vec![],
            SimConfig {
                max_ticks: 400,
                ..quiet_config()
            },
        )
        .unwrap();
        let out = w.run().unwrap();
        assert!(w.all_done(), "robot should reach its goal");
        assert!(out.metrics.collision_events.is_empty());
        assert!(out.metrics.deadlock_flags.is_empty());
    }

    #[test]
    fn distant_robots_behave_as_if_alone() {
        let ga = Vec2::new(5.0, 0.0);
        let gb = Vec2::new(1005.0, 0.0);
        let mk = |seed| {
            let mut cfg = quiet_config();
            cfg.rng_seed = seed;
            cfg
        };
        let mut together = WorldState::new(
            vec![
                free_robot(0, 0.0, 0.0, 0.0, ga),
                free_robot(1, 1000.0, 0.0, 0.0, gb),
            ],
            vec![Waypoints::one(ga), Waypoints::one(gb)],
            vec![],
            mk(7),
        )
        .unwrap();
        let mut alone = WorldState::new(
            vec![free_robot(0, 0.0, 0.0, 0.0, ga)],
            vec![Waypoints::one(ga)],
            vec![],
            mk(7),
        )
        .unwrap();
        // No plane against the 1000 m neighbor ever binds, but its slack
        // column changes floating-point summation order inside the QP by
        // about one ulp per tick, and the heading chatter of the final
        // parking maneuver amplifies that exponentially. So: tight match
        // during cruise, loose match after arrival.
        for _ in 0..10 {
            together.step().unwrap();
            alone.step().unwrap();
        }
        {
            let a = &together.robots[0];
            let b = &alone.robots[0];
            assert_relative_eq!(a.pose.axle_center.x, b.pose.axle_center.x, epsilon = 1e-8);
            assert_relative_eq!(a.pose.axle_center.y, b.pose.axle_center.y, epsilon = 1e-8);
        }
        for _ in 10..40 {
            together.step().unwrap();
            alone.step().unwrap();
        }
        let a = &together.robots[0];
        let b = &alone.robots[0];
        assert!((a.pose.axle_center - b.pose.axle_center).norm() < 1e-2);
        assert!((a.pose.axle_center - ga).norm() < 0.2);
        assert!((b.pose.axle_center - ga).norm() < 0.2);
    }

    #[test]
    fn velocity_consistency_and_speed_bounds() {
        let goal = Vec2::new(4.0, 3.0);
        let mut w = WorldState::new(
            vec![
                free_robot(0, 0.0, 0.0, 0.0, goal),
                free_robot(1, 4.0, 0.0, 3.0, Vec2::new(0.0, 3.0)),
            ],
            vec![Waypoints::one(goal), Waypoints::one(Vec2::new(0.0, 3.0))],
            vec![],
            SimConfig::default(),
        )
        .unwrap();
        let mut last_wheels = vec![w.robots[0].wheel_speeds, w.robots[1].wheel_speeds];
        for _ in 0..60 {
            w.step().unwrap();
            for (i, r) in w.robots.iter().enumerate() {
                let (vx, vy, _) = forward_kinematics(
                    r.wheel_speeds.0,
                    r.wheel_speeds.1,
                    r.pose.heading,
                    &r.params,
                );
                assert_relative_eq!(r.effective_velocity.x, vx, epsilon = 1e-9);
                assert_relative_eq!(r.effective_velocity.y, vy, epsilon = 1e-9);
                let dv = r.params.a_max * w.config.dt_s + 1e-9;
                assert!(r.wheel_speeds.0.abs() <= r.params.v_max + 1e-9);
                assert!(r.wheel_speeds.1.abs() <= r.params.v_max + 1e-9);
                assert!((r.wheel_speeds.0 - last_wheels[i].0).abs() <= dv);
                assert!((r.wheel_speeds.1 - last_wheels[i].1).abs() <= dv);
                last_wheels[i] = r.wheel_speeds;
            }
        }
    }

    #[test]
    fn determinism_bytes() {
        let build = || {
            WorldState::new(
                vec![
                    free_robot(0, -3.0, 0.0, 0.0, Vec2::new(3.0, 0.0)),
                    free_robot(1, 3.0, 0.1, std::f64::consts::PI, Vec2::new(-3.0, 0.1)),
                ],
                vec![
                    Waypoints::one(Vec2::new(3.0, 0.0)),
                    Waypoints::one(Vec2::new(-3.0, 0.1)),
                ],
                vec![],
                SimConfig {
                    max_ticks: 120,
                    ..SimConfig::default()
                },
            )
            .unwrap()
        };
        let a = build().run().unwrap();
        let b = build().run().unwrap();
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn head_on_pair_passes_cleanly() {
        let ga = Vec2::new(4.0, 0.0);
        let gb = Vec2::new(-4.0, 0.0);
        let mut w = WorldState::new(
            vec![
                free_robot(0, -4.0, 0.0, 0.0, ga),
                free_robot(1, 4.0, 0.0, std::f64::consts::PI, gb),
            ],
            vec![Waypoints::one(ga), Waypoints::one(gb)],
            vec![],
            SimConfig {
                max_ticks: 600,
                ..SimConfig::default()
            },
        )
        .unwrap();
        let out = w.run().unwrap();
        assert!(
            out.metrics.collision_events.is_empty(),
            "collision: {:?}",
            out.metrics.collision_events
        );
        assert!(w.all_done(), "both robots should reach their goals");
        assert_eq!(out.metrics.head_conflict_violations, 0);
    }

    #[test]
    fn corridor_chain_propagates_masked_velocity() {
        // Three robots queued in a corridor facing a head robot coming the
        // other way: the head's masked velocity forces the first normal
        // robot's masked velocity to pick a lateral component within one
        // tick, and the one behind it within two.
        let wall = |y: f64| ObstacleSegment::new(Vec2::new(-12.0, y), Vec2::new(12.0, y));
        let pi = std::f64::consts::PI;
        let robots = vec![
            free_robot(0, 3.0, 0.0, pi, Vec2::new(-9.0, 0.0)),
            free_robot(1, -3.0, 0.0, 0.0, Vec2::new(9.0, 0.0)),
            free_robot(2, -4.6, 0.0, 0.0, Vec2::new(9.0, 0.0)),
            free_robot(3, -6.2, 0.0, 0.0, Vec2::new(9.0, 0.0)),
        ];
        let wps = robots
            .iter()
            .map(|r| Waypoints::one(r.goal))
            .collect::<Vec<_>>();
        let mut w = WorldState::new(
            robots,
            wps,
            vec![wall(1.0), wall(-1.0)],
            SimConfig {
                max_ticks: 40,
                ..quiet_config()
            },
        )
        .unwrap();
        // Make the oncoming robot an established head so the others demote.
        w.robots[0].priority = PriorityState {
            is_head: true,
            tabu_remaining: 0,
            importance: 100,
        };
        let lateral_at = |w: &WorldState, id: usize| w.robots[id].masked_velocity.v.y.abs();
        // Tick 1: the head computes and broadcasts its masked velocity; the
        // others still saw a zero intention. The dodge starts one tick after
        // the broadcast.
        w.step().unwrap();
        assert!(w.robots[0].masked_velocity.v.x < -1.0, "head should push");
        w.step().unwrap();
        let first = lateral_at(&w, 1);
        assert!(first > 1e-4, "front robot should dodge, got {first}");
        w.step().unwrap();
        let second = lateral_at(&w, 2);
        assert!(second > 1e-4, "second robot should dodge, got {second}");
    }
}
