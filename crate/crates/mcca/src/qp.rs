//! Small dense convex quadratic programs: a dual active-set solver and the
//! builders for the holonomic velocity program and the differential-drive
//! control program.

use nalgebra::{DMatrix, DVector};

use crate::error::QpError;
use crate::geometry::{HalfPlane, Vec2};
use crate::kinematics::DiffDriveParams;
use crate::mcca::MccaWeights;
use crate::simulator::RobotState;

/// One linear row: `coeffs . x (<=|=) rhs`.
#[derive(Clone, Debug)]
pub struct LinRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinRow {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> LinRow {
        LinRow { coeffs, rhs }
    }
}

/// A convex QP with separable objective `sum_i w_i (x_i - t_i)^2`, linear
/// inequality rows (`<=`), equality rows and per-variable bounds.
#[derive(Clone, Debug, Default)]
pub struct QpProblem {
    pub quadratic_weights: Vec<f64>,
    pub linear_targets: Vec<f64>,
    pub inequalities: Vec<LinRow>,
    pub equalities: Vec<LinRow>,
    pub bounds: Vec<(f64, f64)>,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.quadratic_weights.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.quadratic_weights
            .iter()
            .zip(&self.linear_targets)
            .zip(x)
            .map(|((w, t), xi)| w * (xi - t) * (xi - t))
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

const FEAS_TOL: f64 = 1e-10;
const KKT_TOL: f64 = 1e-8;

/// Solves the QP to its global optimum with a dual active-set method:
/// start at the unconstrained minimum of the (equality-reduced) objective
/// and add violated constraints one at a time, dropping blocking ones.
pub fn solve(p: &QpProblem) -> Result<QpSolution, QpError> {
    let n = p.n();
    if p.linear_targets.len() != n || p.bounds.len() != n {
        return Err(QpError::Malformed("field lengths disagree".into()));
    }
    for row in p.inequalities.iter().chain(&p.equalities) {
        if row.coeffs.len() != n {
            return Err(QpError::Malformed("row length mismatch".into()));
        }
    }

    // Objective as (1/2) x' H x + g' x.
    let h_diag: Vec<f64> = p.quadratic_weights.iter().map(|w| 2.0 * w).collect();
    let g = DVector::from_iterator(
        n,
        p.quadratic_weights
            .iter()
            .zip(&p.linear_targets)
            .map(|(w, t)| -2.0 * w * t),
    );

    // Reduce out equality rows: x = x0 + Z y with E Z = 0.
    let meq = p.equalities.len();
    let (x0, z) = if meq == 0 {
        (DVector::zeros(n), DMatrix::identity(n, n))
    } else {
        let e = DMatrix::from_fn(meq, n, |i, j| p.equalities[i].coeffs[j]);
        let b = DVector::from_iterator(meq, p.equalities.iter().map(|r| r.rhs));
        let svd = e.clone().svd(true, true);
        let tol = 1e-12 * svd.singular_values.max().max(1.0);
        let x0 = svd
            .solve(&b, tol)
            .map_err(|m| QpError::Malformed(m.into()))?;
        let resid = (&e * &x0 - &b).amax();
        if resid > 1e-8 {
            return Err(QpError::InconsistentEqualities(resid));
        }
        let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
        let vt = svd.v_t.as_ref().unwrap();
        let z = nullspace_complement(vt, rank, n);
        (x0, z)
    };
    let k = z.ncols();

    // Reduced Hessian and gradient.
    let hz = {
        let mut hz = z.clone();
        for (i, hi) in h_diag.iter().enumerate() {
            for j in 0..k {
                hz[(i, j)] *= *hi;
            }
        }
        hz
    };
    let ht = z.transpose() * &hz;
    let h_x0 = DVector::from_iterator(n, h_diag.iter().zip(x0.iter()).map(|(h, x)| h * x));
    let gt = z.transpose() * (&g + h_x0);
    let chol = ht.clone().cholesky().ok_or(QpError::NotConvex)?;

    // Collect inequalities and finite bounds in the reduced space as
    // a . y >= b.
    struct Ineq {
        a: DVector<f64>,
        b: f64,
        scale: f64,
    }
    let mut cons: Vec<Ineq> = Vec::with_capacity(p.inequalities.len() + 2 * n);
    let mut push_le = |row: &[f64], rhs: f64, x0: &DVector<f64>, z: &DMatrix<f64>| {
        // row . x <= rhs  ->  (-row Z) y >= row x0 - rhs
        let full = DVector::from_column_slice(row);
        let a = -(z.transpose() * &full);
        let b = full.dot(x0) - rhs;
        let scale = a.amax().max(1.0);
        cons.push(Ineq { a, b, scale });
    };
    for row in &p.inequalities {
        push_le(&row.coeffs, row.rhs, &x0, &z);
    }
    for (i, (lo, hi)) in p.bounds.iter().enumerate() {
        if lo > hi {
            return Err(QpError::Infeasible);
        }
        let mut row = vec![0.0; n];
        if hi.is_finite() {
            row[i] = 1.0;
            push_le(&row, *hi, &x0, &z);
            row[i] = 0.0;
        }
        if lo.is_finite() {
            row[i] = -1.0;
            push_le(&row, -lo, &x0, &z);
        }
    }

    let mut y = chol.solve(&(-&gt));
    let mut active: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let mut iterations = 0usize;
    let max_iter = 100 + 20 * cons.len();

    'outer: loop {
        // Most violated constraint.
        let mut worst = (usize::MAX, -FEAS_TOL);
        for (i, c) in cons.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let slack = (c.a.dot(&y) - c.b) / c.scale;
            if slack < worst.1 {
                worst = (i, slack);
            }
        }
        if worst.0 == usize::MAX {
            break;
        }
        let pidx = worst.0;
        let mut lam_p = 0.0f64;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::NoConvergence {
                    iterations,
                    residual: worst.1.abs(),
                });
            }
            let np = &cons[pidx].a;
            let hinv_np = chol.solve(np);
            let (zdir, r) = if active.is_empty() {
                (hinv_np.clone(), DVector::zeros(0))
            } else {
                let na = active.len();
                let nmat = DMatrix::from_fn(k, na, |i, j| cons[active[j]].a[i]);
                let hinv_n = chol.solve(&nmat);
                let bmat = nmat.transpose() * &hinv_n;
                let rhs = nmat.transpose() * &hinv_np;
                let r = bmat.lu().solve(&rhs).ok_or(QpError::NotConvex)?;
                (&hinv_np - &hinv_n * &r, r)
            };

            // Dual blocking step.
            let mut t1 = f64::INFINITY;
            let mut blocker = usize::MAX;
            for (j, rj) in r.iter().enumerate() {
                if *rj > 1e-12 {
                    let t = lambda[j] / rj;
                    if t < t1 {
                        t1 = t;
                        blocker = j;
                    }
                }
            }

            let np_z = np.dot(&zdir);
            if np_z <= 1e-14 * cons[pidx].scale * cons[pidx].scale {
                // No primal progress possible along this constraint.
                if t1.is_infinite() {
                    return Err(QpError::Infeasible);
                }
                for (j, rj) in r.iter().enumerate() {
                    lambda[j] -= t1 * rj;
                }
                lam_p += t1;
                active.remove(blocker);
                lambda.remove(blocker);
                continue;
            }

            let t2 = (cons[pidx].b - np.dot(&y)) / np_z;
            let t = t1.min(t2);
            y += &zdir * t;
            for (j, rj) in r.iter().enumerate() {
                lambda[j] -= t * rj;
            }
            lam_p += t;
            if t2 <= t1 {
                active.push(pidx);
                lambda.push(lam_p);
                continue 'outer;
            }
            active.remove(blocker);
            lambda.remove(blocker);
        }
    }

    // Refine against the final active set: the incremental steps above
    // accumulate rounding drift, so re-solve the equality-constrained KKT
    // system (H y = N lambda - g, N' y = b) once from scratch.
    if !active.is_empty() {
        let na = active.len();
        let nmat = DMatrix::from_fn(k, na, |i, j| cons[active[j]].a[i]);
        let b_a = DVector::from_iterator(na, active.iter().map(|&i| cons[i].b));
        let hinv_n = chol.solve(&nmat);
        let schur_lu = (nmat.transpose() * &hinv_n).lu();
        // One KKT solve: ht dy - N dl = r1, N' dy = r2.
        let kkt_step = |r1: &DVector<f64>, r2: &DVector<f64>| {
            let hinv_r1 = chol.solve(r1);
            let dl = schur_lu.solve(&(r2 - nmat.transpose() * &hinv_r1))?;
            let dy = hinv_r1 + &hinv_n * &dl;
            Some((dy, dl))
        };
        let mut yr = y.clone();
        let mut lam = DVector::from_column_slice(&lambda);
        let mut ok = true;
        for _ in 0..2 {
            let r1 = -&gt - &ht * &yr + &nmat * &lam;
            let r2 = &b_a - nmat.transpose() * &yr;
            match kkt_step(&r1, &r2) {
                Some((dy, dl)) => {
                    yr += dy;
                    lam += dl;
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && lam.iter().all(|l| *l >= -FEAS_TOL) {
            y = yr;
            for (j, l) in lam.iter().enumerate() {
                lambda[j] = l.max(0.0);
            }
        }
    }

    // Back to the full space.
    let x = &x0 + &z * &y;

    // KKT residuals in the reduced space plus primal feasibility.
    let mut stat = &ht * &y + &gt;
    for (j, &ai) in active.iter().enumerate() {
        stat -= &cons[ai].a * lambda[j];
    }
    let mut residual: f64 = stat.amax() / ht.amax().max(1.0);
    for (i, c) in cons.iter().enumerate() {
        let slack = c.a.dot(&y) - c.b;
        residual = residual.max((-slack).max(0.0) / c.scale);
        if let Some(j) = active.iter().position(|a| *a == i) {
            let comp = (lambda[j] * slack).abs() / (1.0 + lambda[j].abs());
            residual = residual.max(comp / c.scale);
        }
    }
    for eq in &p.equalities {
        let v: f64 = eq.coeffs.iter().zip(x.iter()).map(|(c, xi)| c * xi).sum();
        residual = residual.max((v - eq.rhs).abs());
    }

    if residual > KKT_TOL {
        return Err(QpError::NoConvergence {
            iterations,
            residual,
        });
    }

    Ok(QpSolution {
        x: x.iter().copied().collect(),
        kkt_residual: residual,
        iterations,
    })
}

/// Completes the first `rank` rows of `vt` (an orthonormal span of the
/// equality row space) to a full basis of R^n and returns the complement as
/// the columns of an `n x (n - rank)` matrix. The thin SVD does not expose
/// these directions, so they are recovered by Gram-Schmidt against the
/// standard basis, which keeps the result deterministic.
fn nullspace_complement(vt: &DMatrix<f64>, rank: usize, n: usize) -> DMatrix<f64> {
    let k = n - rank;
    let mut cols: Vec<DVector<f64>> = (0..rank)
        .map(|i| DVector::from_fn(n, |j, _| vt[(i, j)]))
        .collect();
    let mut out = DMatrix::zeros(n, k);
    let mut found = 0;
    for i in 0..n {
        if found == k {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let d = c.dot(&v);
                v -= c * d;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            v /= norm;
            out.set_column(found, &v);
            cols.push(v);
            found += 1;
        }
    }
    assert_eq!(found, k, "failed to complete null space basis");
    out
}

/// Appends one half-plane row `det <= delta` for the plane at inequality
/// position `var_delta`, where the velocity variables sit at `var_vx` and
/// `var_vx + 1`.
fn push_plane_row(p: &mut QpProblem, hp: &HalfPlane, var_vx: usize, var_delta: usize) {
    let n = p.n();
    let mut row = vec![0.0; n];
    // det [[vx - px, dx], [vy - py, dy]] = dy (vx - px) - dx (vy - py)
    row[var_vx] = hp.direction.y;
    row[var_vx + 1] = -hp.direction.x;
    row[var_delta] = -1.0;
    let rhs = hp.point.x * hp.direction.y - hp.point.y * hp.direction.x;
    p.inequalities.push(LinRow::new(row, rhs));
}

/// Builds the holonomic program: variables `(v_x, v_y)` plus one slack per
/// plane, objective `a1 |v - v_pref|^2 + a2 sum d_O^2 + a3 sum d_R^2 +
/// a4 sum d_M^2`, each plane contributing `violation(v) <= delta`,
/// `delta >= 0`. Velocity components are boxed to `[-box_bound, box_bound]`.
pub fn build_holonomic(
    v_pref: Vec2,
    obstacle_planes: &[HalfPlane],
    robot_planes: &[HalfPlane],
    mcca_planes: &[HalfPlane],
    weights: &MccaWeights,
    box_bound: f64,
) -> QpProblem {
    let m = obstacle_planes.len() + robot_planes.len() + mcca_planes.len();
    let n = 2 + m;
    let mut p = QpProblem {
        quadratic_weights: Vec::with_capacity(n),
        linear_targets: vec![0.0; n],
        inequalities: Vec::with_capacity(m),
        equalities: Vec::new(),
        bounds: Vec::with_capacity(n),
    };
    p.quadratic_weights.push(weights.alpha1);
    p.quadratic_weights.push(weights.alpha1);
    p.linear_targets[0] = v_pref.x;
    p.linear_targets[1] = v_pref.y;
    p.bounds.push((-box_bound, box_bound));
    p.bounds.push((-box_bound, box_bound));
    let groups = [
        (obstacle_planes, weights.alpha2),
        (robot_planes, weights.alpha3),
        (mcca_planes, weights.alpha4),
    ];
    for (planes, w) in groups {
        for _ in 0..planes.len() {
            p.quadratic_weights.push(w);
            p.bounds.push((0.0, f64::INFINITY));
        }
    }
    let mut delta = 2usize;
    for (planes, _) in groups {
        for hp in planes {
            push_plane_row(&mut p, hp, 0, delta);
            delta += 1;
        }
    }
    p
}

/// The two linear rows realizing the angular-control constraint, expressed
/// over the angular velocity and its slack: `+-k1 w - dw <= rhs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngularRows {
    /// Coefficient on omega in the two symmetric rows.
    pub omega_coeff: f64,
    /// Common right-hand side.
    pub rhs: f64,
    /// The braking-sweep budget after the case split.
    pub theta_prime: f64,
}

/// Builds the angular-control rows limiting the growth of the angular
/// velocity so the heading can settle on the holonomic optimization
/// direction without overshooting.
///
/// `omega_current_sign` fixes the sweep direction; when zero the shortest
/// rotation toward `v_h_opt` is used. Returns `None` when `v_h_opt` is zero
/// (constraint omitted).
pub fn angular_constraint(
    omega_current_sign: f64,
    theta: f64,
    v_h_opt: Vec2,
    mu: f64,
    a_max: f64,
    axle_length: f64,
) -> Option<AngularRows> {
    debug_assert!(mu > 1.0);
    if v_h_opt.norm_sq() == 0.0 {
        return None;
    }
    let target = v_h_opt.angle();
    let diff = crate::kinematics::normalize_angle(target - theta);
    let sweep_sign = if omega_current_sign > 0.0 {
        1.0
    } else if omega_current_sign < 0.0 {
        -1.0
    } else if diff >= 0.0 {
        1.0
    } else {
        -1.0
    };
    // Angle to sweep in the rotation direction, in [0, 2 pi).
    let angle = (sweep_sign * diff).rem_euclid(std::f64::consts::TAU);
    // v_w . v_h_opt > 0 exactly when the sweep is less than pi.
    let theta_prime = if angle > 0.0 && angle < std::f64::consts::PI {
        angle / mu
    } else {
        angle
    };
    let omega_brake = 2.0 * a_max / axle_length;
    if theta_prime <= 1e-12 {
        // Limit form: |w| <= 2 a_max / L + dw.
        return Some(AngularRows {
            omega_coeff: 1.0,
            rhs: omega_brake,
            theta_prime: 0.0,
        });
    }
    let k1 = theta_prime * axle_length / (2.0 * a_max);
    let k2 = theta_prime * theta_prime * axle_length / (4.0 * a_max);
    Some(AngularRows {
        omega_coeff: k1,
        rhs: theta_prime + k2,
        theta_prime,
    })
}

/// Variable layout of the differential-drive control program.
#[derive(Clone, Copy, Debug)]
pub struct DiffDriveLayout {
    pub v_l: usize,
    pub v_r: usize,
    pub v_x: usize,
    pub v_y: usize,
    pub omega: usize,
    pub first_delta: usize,
    pub n_planes: usize,
    pub delta_omega: Option<usize>,
}

/// Builds the control program solving the real wheel speeds: variables
/// `(v_l, v_r, v_x, v_y, w, deltas..., dw)`, the effective-center velocity
/// tied to the wheels by the direct kinematics at the current heading, wheel
/// speed and acceleration boxes, half-plane rows for the obstacle, robot and
/// masked plane sets, and the optional angular-control rows.
pub fn build_diffdrive(
    state: &RobotState,
    params: &DiffDriveParams,
    v_pref: Vec2,
    obstacle_planes: &[HalfPlane],
    robot_planes: &[HalfPlane],
    mcca_planes: &[HalfPlane],
    weights: &MccaWeights,
    dt: f64,
    angular: Option<AngularRows>,
) -> (QpProblem, DiffDriveLayout) {
    let angular = if weights.alpha5 > 0.0 { angular } else { None };
    let m = obstacle_planes.len() + robot_planes.len() + mcca_planes.len();
    let n = 5 + m + usize::from(angular.is_some());
    let layout = DiffDriveLayout {
        v_l: 0,
        v_r: 1,
        v_x: 2,
        v_y: 3,
        omega: 4,
        first_delta: 5,
        n_planes: m,
        delta_omega: angular.is_some().then_some(5 + m),
    };

    let mut weights_vec = vec![0.0; n];
    let mut targets = vec![0.0; n];
    weights_vec[layout.v_x] = weights.alpha1;
    weights_vec[layout.v_y] = weights.alpha1;
    targets[layout.v_x] = v_pref.x;
    targets[layout.v_y] = v_pref.y;
    let groups = [
        (obstacle_planes, weights.alpha2),
        (robot_planes, weights.alpha3),
        (mcca_planes, weights.alpha4),
    ];
    let mut idx = layout.first_delta;
    for (planes, w) in groups {
        for _ in 0..planes.len() {
            weights_vec[idx] = w;
            idx += 1;
        }
    }
    if let Some(dw) = layout.delta_omega {
        weights_vec[dw] = weights.alpha5;
    }

    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
    let (wl, wr) = state.wheel_speeds;
    let dv = params.a_max * dt;
    bounds[layout.v_l] = ((wl - dv).max(-params.v_max), (wl + dv).min(params.v_max));
    bounds[layout.v_r] = ((wr - dv).max(-params.v_max), (wr + dv).min(params.v_max));
    for i in layout.first_delta..n {
        bounds[i] = (0.0, f64::INFINITY);
    }

    let mut p = QpProblem {
        quadratic_weights: weights_vec,
        linear_targets: targets,
        inequalities: Vec::with_capacity(m + 2),
        equalities: Vec::with_capacity(3),
        bounds,
    };

    // Direct kinematics at the current heading.
    let theta = state.pose.heading;
    let (s, c) = theta.sin_cos();
    let d_over_l = params.offset_m / params.axle_length_m;
    let mut row = vec![0.0; n];
    row[layout.v_x] = 1.0;
    row[layout.v_l] = -(c / 2.0 + d_over_l * s);
    row[layout.v_r] = -(c / 2.0 - d_over_l * s);
    p.equalities.push(LinRow::new(row, 0.0));
    let mut row = vec![0.0; n];
    row[layout.v_y] = 1.0;
    row[layout.v_l] = -(s / 2.0 - d_over_l * c);
    row[layout.v_r] = -(s / 2.0 + d_over_l * c);
    p.equalities.push(LinRow::new(row, 0.0));
    let mut row = vec![0.0; n];
    row[layout.omega] = 1.0;
    row[layout.v_l] = 1.0 / params.axle_length_m;
    row[layout.v_r] = -1.0 / params.axle_length_m;
    p.equalities.push(LinRow::new(row, 0.0));

    let mut delta = layout.first_delta;
    for (planes, _) in groups {
        for hp in planes {
            push_plane_row(&mut p, hp, layout.v_x, delta);
            delta += 1;
        }
    }

    if let (Some(rows), Some(dw)) = (angular, layout.delta_omega) {
        for sign in [1.0, -1.0] {
            let mut row = vec![0.0; n];
            row[layout.omega] = sign * rows.omega_coeff;
            row[dw] = -1.0;
            p.inequalities.push(LinRow::new(row, rows.rhs));
        }
    }

    (p, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Pose;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn weights() -> MccaWeights {
        MccaWeights::default()
    }

    #[test]
    fn unconstrained_minimum() {
        let p = QpProblem {
            quadratic_weights: vec![1.0, 1.0],
            linear_targets: vec![1.0, 0.0],
            inequalities: vec![],
            equalities: vec![],
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); 2],
        };
        let s = solve(&p).unwrap();
        assert_relative_eq!(s.x[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(s.x[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn single_constraint_kkt_example() {
        // min 1e-2 (vx-1)^2 + 1e-2 vy^2 + 1e4 d^2  s.t. vx <= d, d >= 0.
        let p = QpProblem {
            quadratic_weights: vec![1e-2, 1e-2, 1e4],
            linear_targets: vec![1.0, 0.0, 0.0],
            inequalities: vec![LinRow::new(vec![1.0, 0.0, -1.0], 0.0)],
            equalities: vec![],
            bounds: vec![
                (f64::NEG_INFINITY, f64::INFINITY),
                (f64::NEG_INFINITY, f64::INFINITY),
                (0.0, f64::INFINITY),
            ],
        };
        let s = solve(&p).unwrap();
        // KKT by hand: vx = d = 1e-2 / (1e-2 + 1e4).
        let expect = 1e-2 / (1e-2 + 1e4);
        assert_relative_eq!(s.x[0], expect, epsilon = 1e-10);
        assert_relative_eq!(s.x[1], 0.0, epsilon = 1e-10);
        assert_relative_eq!(s.x[2], expect, epsilon = 1e-10);
        assert!(s.kkt_residual <= 1e-8);
    }

    #[test]
    fn contradictory_planes_split_by_weight() {
        // x <= d1 - 0.5 and -x <= d2 - 0.5 cannot both hold with d = 0.
        // Violation splits inversely to the weights (KKT on the two slacks).
        let w1 = 100.0;
        let w2 = 400.0;
        let p = QpProblem {
            quadratic_weights: vec![1e-6, w1, w2],
            linear_targets: vec![0.0, 0.0, 0.0],
            inequalities: vec![
                LinRow::new(vec![1.0, -1.0, 0.0], -0.5),
                LinRow::new(vec![-1.0, 0.0, -1.0], -0.5),
            ],
            equalities: vec![],
            bounds: vec![
                (f64::NEG_INFINITY, f64::INFINITY),
                (0.0, f64::INFINITY),
                (0.0, f64::INFINITY),
            ],
        };
        let s = solve(&p).unwrap();
        // With negligible position weight the slacks satisfy
        // d1 + d2 = 1 and w1 d1 = w2 d2.
        let d1 = s.x[1];
        let d2 = s.x[2];
        assert_relative_eq!(d1 + d2, 1.0, epsilon = 1e-4);
        assert_relative_eq!(w1 * d1, w2 * d2, epsilon = 1e-2);
    }

    #[test]
    fn equality_reduction() {
        // min (x-3)^2 + y^2 s.t. x + y = 1, y >= 0.2.
        let p = QpProblem {
            quadratic_weights: vec![1.0, 1.0],
            linear_targets: vec![3.0, 0.0],
            inequalities: vec![],
            equalities: vec![LinRow::new(vec![1.0, 1.0], 1.0)],
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY), (0.2, f64::INFINITY)],
        };
        let s = solve(&p).unwrap();
        // Without the bound the optimum is (2, -1); with y >= 0.2, x = 0.8.
        assert_relative_eq!(s.x[0], 0.8, epsilon = 1e-9);
        assert_relative_eq!(s.x[1], 0.2, epsilon = 1e-9);
    }

    /// Brute-force grid oracle over the two velocity variables. Slacks are
    /// resolved exactly per grid point: the optimal slack for a plane is
    /// max(0, violation).
    fn grid_best(v_pref: Vec2, planes: &[(HalfPlane, f64)], w1: f64, bound: f64, step: f64) -> f64 {
        let steps = (2.0 * bound / step).round() as i64;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            let x = -bound + i as f64 * step;
            for j in 0..=steps {
                let y = -bound + j as f64 * step;
                let v = Vec2::new(x, y);
                let mut obj = w1 * (v - v_pref).norm_sq();
                for (hp, w) in planes {
                    let viol = crate::geometry::halfplane_violation(v, hp).max(0.0);
                    obj += w * viol * viol;
                }
                if obj < best {
                    best = obj;
                }
            }
        }
        best
    }

    #[test]
    fn holonomic_matches_grid_oracle() {
        let mut rng = StdRng::seed_from_u64(31);
        let w = weights();
        for _ in 0..25 {
            let v_pref = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let n_planes = rng.gen_range(0..=6);
            let mut obstacle = Vec::new();
            let mut robot = Vec::new();
            let mut tagged = Vec::new();
            for _ in 0..n_planes {
                let hp = HalfPlane::from_point_normal(
                    Vec2::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)),
                    Vec2::from_angle(rng.gen_range(0.0..std::f64::consts::TAU)),
                );
                if rng.gen_bool(0.5) {
                    obstacle.push(hp);
                    tagged.push((hp, w.alpha2));
                } else {
                    robot.push(hp);
                    tagged.push((hp, w.alpha3));
                }
            }
            let p = build_holonomic(v_pref, &obstacle, &robot, &[], &w, 2.5);
            let s = solve(&p).unwrap();
            let obj = p.objective(&s.x);
            let grid = grid_best(v_pref, &tagged, w.alpha1, 2.5, 0.01);
            assert!(obj <= grid + 1e-3, "solver {obj} worse than grid {grid}");
        }
    }

    #[test]
    fn holonomic_empty_planes_returns_pref() {
        let w = weights();
        let p = build_holonomic(Vec2::new(0.7, -1.1), &[], &[], &[], &w, 8.0);
        let s = solve(&p).unwrap();
        assert_relative_eq!(s.x[0], 0.7, epsilon = 1e-10);
        assert_relative_eq!(s.x[1], -1.1, epsilon = 1e-10);
    }

    #[test]
    fn solver_is_deterministic() {
        let w = weights();
        let mut rng = StdRng::seed_from_u64(77);
        let planes: Vec<HalfPlane> = (0..5)
            .map(|_| {
                HalfPlane::from_point_normal(
                    Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    Vec2::from_angle(rng.gen_range(0.0..6.28)),
                )
            })
            .collect();
        let p = build_holonomic(Vec2::new(1.0, 0.5), &planes, &[], &[], &w, 8.0);
        let a = solve(&p).unwrap();
        let b = solve(&p).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.kkt_residual, b.kkt_residual);
    }

    fn test_state(theta: f64, wl: f64, wr: f64) -> RobotState {
        let params = DiffDriveParams::default();
        RobotState::new(0, Pose::new(0.0, 0.0, theta), (wl, wr), Vec2::ZERO, params)
    }

    #[test]
    fn diffdrive_substitution_checks() {
        let params = DiffDriveParams::default();
        let w = weights();
        let state = test_state(0.0, 1.0, 1.0);
        let (p, layout) = build_diffdrive(
            &state,
            &params,
            Vec2::new(1.0, 0.0),
            &[],
            &[],
            &[],
            &w,
            0.25,
            None,
        );
        let s = solve(&p).unwrap();
        // Equal wheels at theta 0: v = (v_l, 0), omega = 0; preferred
        // velocity (1, 0) reachable exactly.
        assert_relative_eq!(s.x[layout.v_l], 1.0, epsilon = 1e-8);
        assert_relative_eq!(s.x[layout.v_r], 1.0, epsilon = 1e-8);
        assert_relative_eq!(s.x[layout.v_x], 1.0, epsilon = 1e-8);
        assert_relative_eq!(s.x[layout.v_y], 0.0, epsilon = 1e-8);
        assert_relative_eq!(s.x[layout.omega], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn diffdrive_pure_rotation_map() {
        // theta = 0, v_l = -1, v_r = 1: v = (0, 2D/L), omega = 2/L.
        let params = DiffDriveParams::default();
        let w = weights();
        let state = test_state(0.0, -1.0, 1.0);
        let (p, layout) =
            build_diffdrive(&state, &params, Vec2::ZERO, &[], &[], &[], &w, 0.25, None);
        // Force the wheels by shrinking the acceleration box to zero width.
        let mut p = p;
        p.bounds[layout.v_l] = (-1.0, -1.0);
        p.bounds[layout.v_r] = (1.0, 1.0);
        let s = solve(&p).unwrap();
        let expected_vy = 2.0 * params.offset_m / params.axle_length_m;
        assert_relative_eq!(s.x[layout.v_x], 0.0, epsilon = 1e-8);
        assert_relative_eq!(s.x[layout.v_y], expected_vy, epsilon = 1e-8);
        assert_relative_eq!(
            s.x[layout.omega],
            2.0 / params.axle_length_m,
            epsilon = 1e-8
        );
        // |v_y| equals omega * D here.
        assert_relative_eq!(
            s.x[layout.v_y].abs(),
            s.x[layout.omega].abs() * params.offset_m,
            epsilon = 1e-8
        );
    }

    #[test]
    fn diffdrive_reaches_reachable_pref() {
        let params = DiffDriveParams::default();
        let w = weights();
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..30 {
            let theta = rng.gen_range(-3.0..3.0);
            let wl = rng.gen_range(-1.0..1.0);
            let wr = rng.gen_range(-1.0..1.0);
            let state = test_state(theta, wl, wr);
            // Pick target wheels within the acceleration box, then ask for
            // the corresponding effective velocity.
            let dt = 0.25;
            let dv = params.a_max * dt;
            let tl = wl + rng.gen_range(-dv..dv);
            let tr = wr + rng.gen_range(-dv..dv);
            let (vx, vy, _) = crate::kinematics::forward_kinematics(tl, tr, theta, &params);
            let (p, layout) = build_diffdrive(
                &state,
                &params,
                Vec2::new(vx, vy),
                &[],
                &[],
                &[],
                &w,
                dt,
                None,
            );
            let s = solve(&p).unwrap();
            assert_relative_eq!(s.x[layout.v_l], tl, epsilon = 1e-6);
            assert_relative_eq!(s.x[layout.v_r], tr, epsilon = 1e-6);
        }
    }

    #[test]
    fn angular_constraint_cases() {
        // Aligned with the sweep, quarter turn, mu 9: theta' = pi / 18.
        let rows = angular_constraint(
            1.0,
            0.0,
            Vec2::from_angle(std::f64::consts::FRAC_PI_2),
            9.0,
            2.0,
            0.6,
        )
        .unwrap();
        assert_relative_eq!(
            rows.theta_prime,
            std::f64::consts::PI / 18.0,
            epsilon = 1e-12
        );

        // Sweep against the rotation direction: full angle, no division.
        let rows = angular_constraint(
            -1.0,
            0.0,
            Vec2::from_angle(std::f64::consts::FRAC_PI_2),
            9.0,
            2.0,
            0.6,
        )
        .unwrap();
        assert_relative_eq!(
            rows.theta_prime,
            3.0 * std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );

        // Zero v_h_opt: omitted.
        assert!(angular_constraint(1.0, 0.3, Vec2::ZERO, 9.0, 2.0, 0.6).is_none());

        // Aligned exactly: limit form |w| <= 2 a / L.
        let rows = angular_constraint(0.0, 0.5, Vec2::from_angle(0.5), 9.0, 2.0, 0.6).unwrap();
        assert_relative_eq!(rows.omega_coeff, 1.0);
        assert_relative_eq!(rows.rhs, 2.0 * 2.0 / 0.6);
    }

    #[test]
    fn angular_constraint_small_angle_limit() {
        // As theta' -> 0 the row bound |w| <= (rhs)/k1 tends to 2 a / L.
        let a_max = 2.0;
        let l = 0.6;
        let rows =
            angular_constraint(1.0, 0.0, Vec2::from_angle(1e-7 * 9.0), 9.0, a_max, l).unwrap();
        let implied = rows.rhs / rows.omega_coeff;
        assert_relative_eq!(implied, 2.0 * a_max / l, epsilon = 1e-5);
    }

    #[test]
    fn angular_row_satisfiable_at_zero_omega() {
        let rows = angular_constraint(1.0, 0.0, Vec2::from_angle(2.0), 9.0, 2.0, 0.6).unwrap();
        // omega = 0, slack 0: both rows hold.
        assert!(rows.rhs >= 0.0);
    }

    #[test]
    fn random_qp_grid_cross_check() {
        // Random feasible QPs with up to 6 inequality rows over 3 vars.
        let mut rng = StdRng::seed_from_u64(53);
        for _ in 0..20 {
            let n = 3;
            let wts: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..4.0)).collect();
            let tgt: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut ineqs = Vec::new();
            for _ in 0..rng.gen_range(0..=6) {
                let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                // rhs chosen so the origin is feasible.
                ineqs.push(LinRow::new(coeffs, rng.gen_range(0.0..1.5)));
            }
            let p = QpProblem {
                quadratic_weights: wts.clone(),
                linear_targets: tgt.clone(),
                inequalities: ineqs.clone(),
                equalities: vec![],
                bounds: vec![(-2.0, 2.0); n],
            };
            let s = solve(&p).unwrap();
            let obj = p.objective(&s.x);
            // Coarse grid oracle: any feasible grid point bounds the optimum
            // from above, so the solver value may never exceed the best one.
            let step = 0.02;
            let m = (4.0 / step) as i64;
            let mut best = f64::INFINITY;
            for i in 0..=m {
                let x0 = -2.0 + i as f64 * step;
                for j in 0..=m {
                    let x1 = -2.0 + j as f64 * step;
                    // Third variable solved on a coarser axis.
                    for kk in 0..=80 {
                        let x2 = -2.0 + kk as f64 * 0.05;
                        let x = [x0, x1, x2];
                        if ineqs.iter().all(|r| {
                            r.coeffs.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>()
                                <= r.rhs + 1e-12
                        }) {
                            let o: f64 = wts
                                .iter()
                                .zip(&tgt)
                                .zip(&x)
                                .map(|((w, t), v)| w * (v - t) * (v - t))
                                .sum();
                            if o < best {
                                best = o;
                            }
                        }
                    }
                }
            }
            assert!(obj <= best + 0.01, "solver {obj} vs grid {best}");
        }
    }
}
