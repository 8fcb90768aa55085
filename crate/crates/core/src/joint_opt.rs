//! Joint-space trajectory tracking: positions and velocities for every
//! reference frame, tied together by forward-Euler kinematics, bounded by the
//! joint limits, starting and ending at rest, with goal-reaching, clearance
//! and velocity costs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::{interp_pose, Pose, Trajectory, Vec3};
use crate::io;
use crate::kinematics::{
    default_ee_points, robot_points_at, ChainState, GripperPointSet, KinematicChain, RobotPoint,
    DEFAULT_EE_POINTS,
};
use crate::optim::{minimize_box, solve_nlp, BoxOptions, Nlp, SolveReport, SolverOptions};
use crate::spatial::PointIndex;

/// Pre-grasp pose `d` meters behind the grasp along the gripper's approach
/// (+x) axis.
pub fn standoff_pose(t_grasp: &Pose, d: f64) -> Result<Pose> {
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::invalid("standoff distance must be non-negative"));
    }
    if d == 0.0 {
        return Ok(*t_grasp);
    }
    Ok(t_grasp.compose(&Pose::from_translation(Vec3::new(-d, 0.0, 0.0))))
}

/// Inserts the standoff of the first pose at the front of the trajectory.
pub fn prepend_standoff(traj: &Trajectory, d: f64) -> Result<Trajectory> {
    let mut poses = Vec::with_capacity(traj.len() + 1);
    poses.push(standoff_pose(traj.first(), d)?);
    poses.extend_from_slice(traj.poses());
    let timestamps = traj.timestamps().map(|ts| {
        let step = traj.mean_time_step().unwrap_or(0.1);
        std::iter::once(ts[0] - step).chain(ts.iter().copied()).collect()
    });
    Trajectory::with_timestamps(traj.frame_id(), poses, timestamps)
}

/// Expands `[standoff, grasp, …]` into `[standoff, standoff, s_1 … s_k,
/// grasp, …]`, where `s_i` interpolate from the standoff to the grasp.
///
/// The repeated standoff absorbs the zero start velocity; the interpolated
/// poses give the arm time to close the gap. Returns the expanded reference
/// and the index of the grasp pose in it. Timestamps are dropped.
pub fn insert_approach(traj: &Trajectory, steps: usize) -> Result<(Trajectory, usize)> {
    if traj.len() < 2 {
        return Err(Error::invalid("approach needs a standoff and a grasp pose"));
    }
    let (standoff, grasp) = (traj.poses()[0], traj.poses()[1]);
    let mut poses = vec![standoff, standoff];
    for k in 1..=steps {
        let w = k as f64 / (steps + 1) as f64;
        poses.push(interp_pose(&grasp, &standoff, w)?);
    }
    let grasp_index = poses.len();
    poses.extend_from_slice(&traj.poses()[1..]);
    Ok((Trajectory::new(traj.frame_id(), poses)?, grasp_index))
}

/// `Σ max(0, d_safe + r − d_nn)²` over robot spheres.
pub fn collision_cost(robot: &[RobotPoint], env: &PointIndex, d_safe: f64) -> Result<f64> {
    if !(d_safe > 0.0) {
        return Err(Error::invalid("d_safe must be positive"));
    }
    Ok(robot
        .iter()
        .filter_map(|p| {
            let reach = d_safe + p.radius;
            env.nearest_within(&p.position, reach).map(|(_, d)| (reach - d).powi(2))
        })
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointTrajectoryRecord", into = "JointTrajectoryRecord")]
pub struct JointTrajectory {
    pub dt: f64,
    pub q: Vec<Vec<f64>>,
    pub qd: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JointTrajectoryRecord {
    pub dt: f64,
    pub q: Vec<Vec<f64>>,
    pub qd: Vec<Vec<f64>>,
}

impl TryFrom<JointTrajectoryRecord> for JointTrajectory {
    type Error = Error;
    fn try_from(r: JointTrajectoryRecord) -> Result<Self> {
        let jt = JointTrajectory {
            dt: r.dt,
            q: r.q,
            qd: r.qd,
        };
        jt.validate_shape()?;
        Ok(jt)
    }
}

impl From<JointTrajectory> for JointTrajectoryRecord {
    fn from(j: JointTrajectory) -> Self {
        JointTrajectoryRecord {
            dt: j.dt,
            q: j.q,
            qd: j.qd,
        }
    }
}

impl JointTrajectory {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    fn validate_shape(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::validation("time step must be positive"));
        }
        if self.q.is_empty() {
            return Err(Error::validation("joint trajectory is empty"));
        }
        check_len("joint velocities", self.q.len(), self.qd.len())?;
        let n = self.q[0].len();
        for (q, qd) in self.q.iter().zip(&self.qd) {
            check_len("joint configuration", n, q.len())?;
            check_len("joint velocity", n, qd.len())?;
        }
        if self.q.iter().chain(&self.qd).flatten().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("joint trajectory"));
        }
        Ok(())
    }

    /// `max_i ‖q_{i+1} − q_i − q̇_i dt‖∞`.
    pub fn dynamics_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.q.len().saturating_sub(1) {
            for j in 0..self.q[i].len() {
                let r = self.q[i + 1][j] - self.q[i][j] - self.qd[i][j] * self.dt;
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// Checks every invariant against the chain: limits, rest at both ends
    /// and the kinematic residual.
    pub fn validate(&self, chain: &KinematicChain, residual_tol: f64) -> Result<()> {
        self.validate_shape()?;
        check_len("joint configuration", chain.dof(), self.q[0].len())?;
        for (i, (q, qd)) in self.q.iter().zip(&self.qd).enumerate() {
            for (j, spec) in chain.joints.iter().enumerate() {
                if q[j] < spec.lower || q[j] > spec.upper {
                    return Err(Error::validation(format!("frame {i}: joint {j} outside position limits")));
                }
                if qd[j].abs() > spec.vel_limit {
                    return Err(Error::validation(format!("frame {i}: joint {j} outside velocity limits")));
                }
            }
        }
        let ends = [&self.qd[0], &self.qd[self.qd.len() - 1]];
        if ends.iter().any(|qd| qd.iter().any(|v| *v != 0.0)) {
            return Err(Error::validation("trajectory does not start and end at rest"));
        }
        let r = self.dynamics_residual();
        if r > residual_tol {
            return Err(Error::validation(format!("kinematic residual {r:e} exceeds {residual_tol:e}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointOptParams {
    /// Goal-reaching weight.
    pub lambda: f64,
    /// Clearance weight.
    pub lambda1: f64,
    /// Velocity weight.
    pub lambda2: f64,
    pub d_safe: f64,
    pub dt: f64,
    pub standoff_distance: f64,
    pub ee_points: GripperPointSet,
    pub solver: SolverOptions,
}

impl Default for JointOptParams {
    fn default() -> Self {
        JointOptParams {
            lambda: 150.0,
            lambda1: 0.02,
            lambda2: 0.01,
            d_safe: 0.02,
            dt: 0.1,
            standoff_distance: 0.20,
            ee_points: default_ee_points(DEFAULT_EE_POINTS).expect("default mesh is valid"),
            solver: SolverOptions {
                inner: BoxOptions {
                    max_iters: 400,
                    gradient_tolerance: 1e-9,
                    ..BoxOptions::default()
                },
                ..SolverOptions::default()
            },
        }
    }
}

impl JointOptParams {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::invalid("cost weights must be non-negative"));
        }
        if !(self.d_safe > 0.0) {
            return Err(Error::invalid("d_safe must be positive"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("time step must be positive"));
        }
        if !(self.standoff_distance >= 0.0) {
            return Err(Error::invalid("standoff distance must be non-negative"));
        }
        Ok(())
    }
}

/// The tracking problem over `(q_0 … q_T, q̇_0 … q̇_T)`.
///
/// Internally the solver sees velocities scaled by `dt` (joint displacement
/// per step), which puts the kinematic equalities on the same scale as the
/// positions; [`JointProblem::total_objective`] is in the natural variables.
pub struct JointProblem<'a> {
    chain: &'a KinematicChain,
    params: &'a JointOptParams,
    targets: Vec<Vec<Vec3>>,
    env: Option<PointIndex>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> JointProblem<'a> {
    pub fn new(
        chain: &'a KinematicChain,
        reference: &Trajectory,
        env_cloud: &[Vec3],
        params: &'a JointOptParams,
    ) -> Result<Self> {
        params.validate()?;
        chain.validate()?;
        let ee = params.ee_points.points();
        let targets = reference
            .poses()
            .iter()
            .map(|t| ee.iter().map(|p| t.transform_point(p)).collect())
            .collect();
        let env = (!env_cloud.is_empty()).then(|| PointIndex::with_grid(env_cloud.to_vec()));
        let frames = reference.len();
        let n = chain.dof();
        let mut lower = Vec::with_capacity(2 * n * frames);
        let mut upper = Vec::with_capacity(2 * n * frames);
        for _ in 0..frames {
            lower.extend(chain.lower_limits());
            upper.extend(chain.upper_limits());
        }
        for i in 0..frames {
            for spec in &chain.joints {
                let at_rest = i == 0 || i + 1 == frames;
                let v = if at_rest { 0.0 } else { spec.vel_limit * params.dt };
                lower.push(-v);
                upper.push(v);
            }
        }
        Ok(JointProblem {
            chain,
            params,
            targets,
            env,
            lower,
            upper,
        })
    }

    pub fn frames(&self) -> usize {
        self.targets.len()
    }

    /// Goal and clearance cost of one frame; gradient added to `grad_q`.
    fn frame_cost(&self, i: usize, q: &[f64], grad_q: &mut [f64]) -> f64 {
        let state = self.chain.state_unchecked(q);
        self.goal_term(i, &state, grad_q) + self.collision_term(&state, grad_q)
    }

    fn goal_term(&self, i: usize, state: &ChainState, grad_q: &mut [f64]) -> f64 {
        let lambda = self.params.lambda;
        if lambda == 0.0 {
            return 0.0;
        }
        let ee = state.ee();
        let m = ee.rotation.matrix();
        let mut force = Vec3::zeros();
        let mut torque = Vec3::zeros();
        let mut cost = 0.0;
        for (p, target) in self.params.ee_points.points().iter().zip(&self.targets[i]) {
            let arm = m * p;
            let r = arm + ee.translation - target;
            cost += r.norm_squared();
            let f = 2.0 * lambda * r;
            force += f;
            torque += arm.cross(&f);
        }
        state.accumulate_ee_wrench(&force, &torque, grad_q);
        lambda * cost
    }

    fn collision_term(&self, state: &ChainState, grad_q: &mut [f64]) -> f64 {
        let (env, lambda1) = match &self.env {
            Some(env) if self.params.lambda1 > 0.0 => (env, self.params.lambda1),
            _ => return 0.0,
        };
        let mut cost = 0.0;
        for rp in robot_points_at(self.chain, state) {
            let reach = self.params.d_safe + rp.radius;
            if let Some((idx, d)) = env.nearest_within(&rp.position, reach) {
                let h = reach - d;
                cost += h * h;
                if d > 0.0 {
                    let dir = (rp.position - env.points()[idx]) / d;
                    let force = -2.0 * lambda1 * h * dir;
                    state.accumulate_point_force(rp.link, &rp.position, &force, grad_q);
                }
            }
        }
        lambda1 * cost
    }

    /// Objective in natural variables: `q` and `qd` are frame-major flat
    /// arrays; gradients are written to `grad_q` and `grad_qd`.
    pub fn total_objective(&self, q: &[f64], qd: &[f64], grad_q: &mut [f64], grad_qd: &mut [f64]) -> f64 {
        let n = self.chain.dof();
        grad_q.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for i in 0..self.frames() {
            value += self.frame_cost(i, &q[i * n..(i + 1) * n], &mut grad_q[i * n..(i + 1) * n]);
        }
        let l2 = self.params.lambda2;
        for (g, v) in grad_qd.iter_mut().zip(qd) {
            value += l2 * v * v;
            *g = 2.0 * l2 * v;
        }
        value
    }

    fn split(&self) -> usize {
        self.frames() * self.chain.dof()
    }

    fn pack(&self, q: &[Vec<f64>], qd: &[Vec<f64>]) -> Vec<f64> {
        let dt = self.params.dt;
        q.iter()
            .flatten()
            .copied()
            .chain(qd.iter().flatten().map(|v| v * dt))
            .collect()
    }

    fn unpack(&self, z: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.chain.dof();
        let dt = self.params.dt;
        let (q, v) = z.split_at(self.split());
        (
            q.chunks(n).map(<[f64]>::to_vec).collect(),
            v.chunks(n).map(|c| c.iter().map(|x| x / dt).collect()).collect(),
        )
    }
}

impl Nlp for JointProblem<'_> {
    fn dimension(&self) -> usize {
        self.lower.len()
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let dt = self.params.dt;
        let split = self.split();
        let qd: Vec<f64> = z[split..].iter().map(|v| v / dt).collect();
        let (gq, gv) = grad.split_at_mut(split);
        let value = self.total_objective(&z[..split], &qd, gq, gv);
        gv.iter_mut().for_each(|g| *g /= dt);
        value
    }

    fn num_equalities(&self) -> usize {
        (self.frames() - 1) * self.chain.dof()
    }

    fn equalities(&self, z: &[f64], out: &mut [f64]) {
        let n = self.chain.dof();
        let (q, v) = z.split_at(self.split());
        for k in 0..out.len() {
            out[k] = q[k + n] - q[k] - v[k];
        }
    }

    fn add_equality_jacobian_transpose(&self, _z: &[f64], w: &[f64], grad: &mut [f64]) {
        let n = self.chain.dof();
        let split = self.split();
        for (k, wk) in w.iter().enumerate() {
            grad[k + n] += wk;
            grad[k] -= wk;
            grad[split + k] -= wk;
        }
    }
}

/// Arm configuration for each reference frame, each solved from the
/// previous one (the first from `q_start`).
fn seed_positions(problem: &JointProblem, q_start: &[f64]) -> Result<Vec<Vec<f64>>> {
    let chain = problem.chain;
    let (lo, hi) = (chain.lower_limits(), chain.upper_limits());
    let options = BoxOptions {
        max_iters: 200,
        gradient_tolerance: 1e-9,
        ..BoxOptions::default()
    };
    let anchor_weight = 1e-4 * problem.params.lambda.max(1e-12);
    let mut seeds = Vec::with_capacity(problem.frames());
    let mut previous = q_start.to_vec();
    for i in 0..problem.frames() {
        let out = minimize_box(
            |q, g| {
                g.iter_mut().for_each(|v| *v = 0.0);
                let state = chain.state_unchecked(q);
                let mut value = problem.goal_term(i, &state, g);
                for j in 0..q.len() {
                    let d = q[j] - previous[j];
                    value += anchor_weight * d * d;
                    g[j] += 2.0 * anchor_weight * d;
                }
                value
            },
            &previous,
            &lo,
            &hi,
            &options,
        )?;
        previous = out.x.clone();
        seeds.push(out.x);
    }
    Ok(seeds)
}

/// Rebuilds velocities from consecutive positions so the kinematic
/// equalities hold to rounding, keeping both end velocities at zero and all
/// values inside their limits.
fn restore_feasibility(chain: &KinematicChain, dt: f64, q: &mut [Vec<f64>], qd: &mut [Vec<f64>]) {
    let frames = q.len();
    for i in 0..frames {
        for (j, spec) in chain.joints.iter().enumerate() {
            if i + 1 == frames {
                qd[i][j] = 0.0;
                continue;
            }
            let v = if i == 0 {
                0.0
            } else {
                let lo = (-spec.vel_limit).max((spec.lower - q[i][j]) / dt);
                let hi = spec.vel_limit.min((spec.upper - q[i][j]) / dt);
                ((q[i + 1][j] - q[i][j]) / dt).clamp(lo.min(0.0), hi.max(0.0))
            };
            qd[i][j] = v;
            q[i + 1][j] = (q[i][j] + v * dt).clamp(spec.lower, spec.upper);
        }
    }
}

#[derive(Clone, Debug)]
pub struct JointSolution {
    pub trajectory: JointTrajectory,
    pub report: SolveReport,
}

/// Solves for a joint trajectory tracking `reference` (which should already
/// start with the standoff pose), expressed in the chain's base frame.
pub fn optimize_joint_trajectory(
    chain: &KinematicChain,
    reference: &Trajectory,
    env_cloud: &[Vec3],
    params: &JointOptParams,
    q_start: &[f64],
) -> Result<JointSolution> {
    check_len("start configuration", chain.dof(), q_start.len())?;
    if !chain.within_limits(q_start) {
        return Err(Error::validation("start configuration outside joint limits"));
    }
    if reference.frame_id() != chain.base_frame {
        return Err(Error::validation(format!(
            "reference is in `{}`, expected the base frame `{}`",
            reference.frame_id(),
            chain.base_frame
        )));
    }
    let problem = JointProblem::new(chain, reference, env_cloud, params)?;
    let q0 = seed_positions(&problem, q_start)?;
    let mut qd0: Vec<Vec<f64>> = vec![vec![0.0; chain.dof()]; q0.len()];
    let mut q_seed = q0.clone();
    restore_feasibility(chain, params.dt, &mut q_seed, &mut qd0);
    let z0 = problem.pack(&q0, &qd0);

    let mut report = solve_nlp(&problem, &z0, &params.solver)?;
    let (mut q, mut qd) = problem.unpack(&report.solution);
    restore_feasibility(chain, params.dt, &mut q, &mut qd);
    let trajectory = JointTrajectory { dt: params.dt, q, qd };

    report.solution = problem.pack(&trajectory.q, &trajectory.qd);
    let mut scratch = vec![0.0; report.solution.len()];
    report.objective_value = problem.objective(&report.solution, &mut scratch);
    report.max_equality_residual = trajectory.dynamics_residual();
    Ok(JointSolution { trajectory, report })
}
