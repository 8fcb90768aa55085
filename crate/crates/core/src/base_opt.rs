//! Mobile-base placement: a planar base motion `(x, y, θ)` and one arm
//! configuration per sampled waypoint, chosen jointly so the end-effector
//! can reach every waypoint with little base travel.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::{rot_z, Pose, Trajectory, Vec3};
use crate::kinematics::{default_ee_points, GripperPointSet, KinematicChain, DEFAULT_EE_POINTS};
use crate::optim::{minimize_box, solve_nlp, BoxOptions, Nlp, SolveReport, SolverOptions};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BaseConfig {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl BaseConfig {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        BaseConfig { x, y, theta }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }
}

/// Box on the base motion derived from the task-space cloud.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskBounds {
    pub x_min: [f64; 3],
    pub x_max: [f64; 3],
}

impl TaskBounds {
    pub fn contains(&self, b: &BaseConfig) -> bool {
        b.as_array()
            .iter()
            .zip(self.x_min.iter().zip(&self.x_max))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// `x_min = [0, min y, −π]`, `x_max = [max x, max y, π]` over the cloud
/// (base frame). The forward limit is raised to 0 if the whole cloud lies
/// behind the base, which keeps the box non-empty.
pub fn task_bounds(cloud: &[Vec3]) -> Result<TaskBounds> {
    if cloud.is_empty() {
        return Err(Error::invalid("task-space cloud is empty"));
    }
    let mut max_x = f64::NEG_INFINITY;
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in cloud {
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    if !(max_x.is_finite() && min_y.is_finite() && max_y.is_finite()) {
        return Err(Error::non_finite("task-space cloud"));
    }
    let pi = std::f64::consts::PI;
    Ok(TaskBounds {
        x_min: [0.0, min_y, -pi],
        x_max: [max_x.max(0.0), max_y, pi],
    })
}

/// Pose of the moved base in the current base frame.
pub fn base_transform(b: &BaseConfig) -> Pose {
    Pose::new(rot_z(b.theta), Vec3::new(b.x, b.y, 0.0))
}

/// `Σ_j ‖(R_a p_j + t_a) − (R_b p_j + t_b)‖²`.
pub fn goal_cost(t_a: &Pose, t_b: &Pose, pts: &GripperPointSet) -> f64 {
    let (ra, rb) = (t_a.rotation.matrix(), t_b.rotation.matrix());
    pts.points()
        .iter()
        .map(|p| ((ra * p + t_a.translation) - (rb * p + t_b.translation)).norm_squared())
        .sum()
}

/// `n` evenly spaced indices over `0..len`, including both ends.
pub fn sample_indices(len: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > len {
        return Err(Error::invalid(format!("cannot sample {n} of {len} waypoints")));
    }
    if n == 1 {
        return Ok(vec![0]);
    }
    let (span, gaps) = (len - 1, n - 1);
    Ok((0..n).map(|k| (2 * k * span + gaps) / (2 * gaps)).collect())
}

pub fn sample_waypoints(traj: &Trajectory, n: usize) -> Result<Trajectory> {
    Ok(traj.select(&sample_indices(traj.len(), n)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseOptParams {
    pub n_samples: usize,
    pub lambda_effort: f64,
    pub lambda_goal: f64,
    pub ee_points: GripperPointSet,
    /// Evenly spaced initial headings tried; the best solution wins.
    pub heading_starts: usize,
    /// Per-waypoint inverse-kinematics seeds used to initialize the arm.
    pub ik_seeds: usize,
    pub solver: SolverOptions,
}

impl Default for BaseOptParams {
    fn default() -> Self {
        BaseOptParams {
            n_samples: 10,
            lambda_effort: 0.01,
            lambda_goal: 1.0,
            ee_points: default_ee_points(DEFAULT_EE_POINTS).expect("default mesh is valid"),
            heading_starts: 8,
            ik_seeds: 4,
            solver: SolverOptions::default(),
        }
    }
}

impl BaseOptParams {
    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("need at least one waypoint sample"));
        }
        if !(self.lambda_effort >= 0.0) || !(self.lambda_goal >= 0.0) {
            return Err(Error::invalid("cost weights must be non-negative"));
        }
        if self.heading_starts == 0 || self.ik_seeds == 0 {
            return Err(Error::invalid("need at least one start"));
        }
        Ok(())
    }
}

/// The joint base/arm placement problem over variables
/// `[x, y, θ, q_1, …, q_N]`.
pub struct BaseProblem<'a> {
    chain: &'a KinematicChain,
    lambda_effort: f64,
    lambda_goal: f64,
    ee_points: &'a [Vec3],
    /// Waypoint ee samples in the current base frame, `targets[i][j]`.
    targets: Vec<Vec<Vec3>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> BaseProblem<'a> {
    pub fn new(
        waypoints: &Trajectory,
        chain: &'a KinematicChain,
        bounds: &TaskBounds,
        params: &'a BaseOptParams,
    ) -> Result<Self> {
        let ee = params.ee_points.points();
        let targets = waypoints
            .poses()
            .iter()
            .map(|t| ee.iter().map(|p| t.transform_point(p)).collect())
            .collect();
        let mut lower = bounds.x_min.to_vec();
        let mut upper = bounds.x_max.to_vec();
        for _ in 0..waypoints.len() {
            lower.extend(chain.lower_limits());
            upper.extend(chain.upper_limits());
        }
        Ok(BaseProblem {
            chain,
            lambda_effort: params.lambda_effort,
            lambda_goal: params.lambda_goal,
            ee_points: ee,
            targets,
            lower,
            upper,
        })
    }

    pub fn waypoints(&self) -> usize {
        self.targets.len()
    }

    /// Goal cost of one waypoint for arm configuration `q` with the base at
    /// `base`; adds gradients w.r.t. `q` and the base variables.
    fn waypoint_cost(
        &self,
        i: usize,
        base: &Pose,
        b: &[f64],
        q: &[f64],
        grad_q: &mut [f64],
        grad_b: &mut [f64; 3],
    ) -> f64 {
        let state = self.chain.state_unchecked(q);
        let ee = state.ee();
        let rb = base.rotation.matrix();
        let last = self.chain.dof() - 1;
        let mut cost = 0.0;
        for (p, target) in self.ee_points.iter().zip(&self.targets[i]) {
            let in_base = ee.transform_point(p);
            let world = rb * in_base + base.translation;
            let r = world - target;
            cost += r.norm_squared();
            let f = 2.0 * self.lambda_goal * r;
            grad_b[0] += f.x;
            grad_b[1] += f.y;
            // d(world)/dθ = e_z × (world − base origin)
            let arm = world - Vec3::new(b[0], b[1], 0.0);
            grad_b[2] += f.dot(&Vec3::new(-arm.y, arm.x, 0.0));
            state.accumulate_point_force(last, &in_base, &(rb.transpose() * f), grad_q);
        }
        self.lambda_goal * cost
    }
}

impl Nlp for BaseProblem<'_> {
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
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n = self.chain.dof();
        let base = base_transform(&BaseConfig::new(z[0], z[1], z[2]));
        let mut value = self.lambda_effort * (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]);
        let mut gb = [2.0 * self.lambda_effort * z[0], 2.0 * self.lambda_effort * z[1], 2.0 * self.lambda_effort * z[2]];
        let (head, rest) = grad.split_at_mut(3);
        for i in 0..self.targets.len() {
            let q = &z[3 + i * n..3 + (i + 1) * n];
            value += self.waypoint_cost(i, &base, &z[..3], q, &mut rest[i * n..(i + 1) * n], &mut gb);
        }
        head.copy_from_slice(&gb);
        value
    }
}

#[derive(Clone, Debug)]
pub struct BaseSolution {
    pub base: BaseConfig,
    pub joints: Vec<Vec<f64>>,
    pub report: SolveReport,
    /// Objective at the reference start (no base motion, mid-range joints).
    pub initial_objective: f64,
}

/// Arm configuration minimizing one waypoint's goal cost with the base
/// fixed, from the best of several deterministic seeds.
fn seed_arm(problem: &BaseProblem, i: usize, b: &[f64], seeds: &[Vec<f64>]) -> Result<Vec<f64>> {
    let base = base_transform(&BaseConfig::new(b[0], b[1], b[2]));
    let chain = problem.chain;
    let (lo, hi) = (chain.lower_limits(), chain.upper_limits());
    let options = BoxOptions {
        max_iters: 200,
        ..BoxOptions::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for seed in seeds {
        let out = minimize_box(
            |q, g| {
                g.iter_mut().for_each(|v| *v = 0.0);
                problem.waypoint_cost(i, &base, b, q, g, &mut [0.0; 3])
            },
            seed,
            &lo,
            &hi,
            &options,
        )?;
        if best.as_ref().is_none_or(|(v, _)| out.value < *v) {
            best = Some((out.value, out.x));
        }
    }
    Ok(best.expect("at least one seed").1)
}

fn arm_seeds(chain: &KinematicChain, count: usize) -> Vec<Vec<f64>> {
    // Mid-range first, then points spread through the joint box along a
    // fixed low-discrepancy sequence.
    let mut seeds = vec![chain.mid_config()];
    let golden = 0.618_033_988_749_894_9;
    for k in 1..count {
        let seed = chain
            .joints
            .iter()
            .enumerate()
            .map(|(j, spec)| {
                let u = ((k as f64) * golden * (j as f64 + 1.0) + 0.5 * j as f64).fract();
                spec.lower + u * (spec.upper - spec.lower)
            })
            .collect();
        seeds.push(seed);
    }
    seeds
}

/// Finds the base motion and per-waypoint arm configurations.
///
/// `waypoints` must be in the current base frame; `env_cloud` (same frame)
/// bounds the base motion.
pub fn optimize_base(
    waypoints: &Trajectory,
    chain: &KinematicChain,
    env_cloud: &[Vec3],
    params: &BaseOptParams,
) -> Result<BaseSolution> {
    params.validate()?;
    chain.validate()?;
    if waypoints.frame_id() != chain.base_frame {
        return Err(Error::validation(format!(
            "waypoints are in `{}`, expected the base frame `{}`",
            waypoints.frame_id(),
            chain.base_frame
        )));
    }
    let bounds = task_bounds(env_cloud)?;
    let problem = BaseProblem::new(waypoints, chain, &bounds, params)?;
    let n = chain.dof();
    let count = waypoints.len();

    let clamp_base = |b: [f64; 3]| -> [f64; 3] {
        [0, 1, 2].map(|k| b[k].clamp(bounds.x_min[k], bounds.x_max[k]))
    };
    let reference: Vec<f64> = clamp_base([0.0; 3])
        .into_iter()
        .chain((0..count).flat_map(|_| chain.mid_config()))
        .collect();
    let mut scratch = vec![0.0; reference.len()];
    let initial_objective = problem.objective(&reference, &mut scratch);

    let seeds = arm_seeds(chain, params.ik_seeds);
    let mut best = solve_nlp(&problem, &reference, &params.solver)?;
    for k in 0..params.heading_starts {
        let theta = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / params.heading_starts as f64;
        let b = clamp_base([0.0, 0.0, theta]);
        let mut x0 = b.to_vec();
        for i in 0..count {
            x0.extend(seed_arm(&problem, i, &b, &seeds)?);
        }
        let report = solve_nlp(&problem, &x0, &params.solver)?;
        if report.objective_value < best.objective_value {
            best = report;
        }
    }
    check_len("base solution", 3 + count * n, best.solution.len())?;
    let z = &best.solution;
    Ok(BaseSolution {
        base: BaseConfig::new(z[0], z[1], z[2]),
        joints: (0..count).map(|i| z[3 + i * n..3 + (i + 1) * n].to_vec()).collect(),
        initial_objective,
        report: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rotation, BASE_FRAME};
    use crate::kinematics::{forward_kinematics, lift_pitch_roll};
    use crate::optim::{finite_difference_gradient, relative_error};
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn bounds_examples() {
        let b = task_bounds(&[Vec3::new(1.0, 2.0, 0.0), Vec3::new(3.0, -1.0, 0.0)]).unwrap();
        assert_eq!(b.x_min, [0.0, -1.0, -PI]);
        assert_eq!(b.x_max, [3.0, 2.0, PI]);
        let b = task_bounds(&[Vec3::new(0.5, 0.5, 1.0)]).unwrap();
        assert_eq!(b.x_min, [0.0, 0.5, -PI]);
        assert_eq!(b.x_max, [0.5, 0.5, PI]);
        assert!(task_bounds(&[]).is_err());
    }

    #[test]
    fn base_transform_examples() {
        assert_eq!(base_transform(&BaseConfig::default()), Pose::identity());
        let p = base_transform(&BaseConfig::new(1.0, 2.0, FRAC_PI_2));
        assert_eq!(p.translation, Vec3::new(1.0, 2.0, 0.0));
        assert!(crate::geometry::geodesic_angle(&p.rotation, &rot_z(FRAC_PI_2)) < 1e-15);
    }

    #[test]
    fn goal_cost_examples() {
        let pts = default_ee_points(32).unwrap();
        let a = Pose::new(Rotation::from_axis_angle(&Vec3::y_axis(), 0.3), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(goal_cost(&a, &a, &pts), 0.0);
        let d = Vec3::new(0.1, 0.2, -0.3);
        let b = Pose::new(a.rotation, a.translation + d);
        assert!((goal_cost(&a, &b, &pts) - 32.0 * d.norm_squared()).abs() < 1e-12);
        assert_eq!(goal_cost(&a, &b, &pts), goal_cost(&b, &a, &pts));
    }

    #[test]
    fn sampling_examples() {
        assert_eq!(sample_indices(10, 4).unwrap(), vec![0, 3, 6, 9]);
        assert_eq!(sample_indices(10, 1).unwrap(), vec![0]);
        assert_eq!(sample_indices(7, 7).unwrap(), (0..7).collect::<Vec<_>>());
        assert!(sample_indices(5, 6).is_err());
        assert!(sample_indices(5, 0).is_err());
    }

    fn reachable_waypoints(chain: &KinematicChain, offset: &BaseConfig) -> Trajectory {
        let shift = base_transform(offset);
        let poses = (0..10)
            .map(|i| {
                let s = i as f64 / 9.0;
                let q = [0.1 + 0.3 * s, -0.4 + 0.6 * s, 0.8 - 1.2 * s];
                shift.compose(&forward_kinematics(chain, &q).unwrap())
            })
            .collect();
        Trajectory::new(BASE_FRAME, poses).unwrap()
    }

    fn box_cloud() -> Vec<Vec3> {
        vec![Vec3::new(1.5, -1.0, 0.0), Vec3::new(0.0, 1.0, 0.0)]
    }

    #[test]
    fn reachable_from_origin_stays_put() {
        let chain = lift_pitch_roll();
        let wp = reachable_waypoints(&chain, &BaseConfig::default());
        let sol = optimize_base(&wp, &chain, &box_cloud(), &BaseOptParams::default()).unwrap();
        let b = sol.base;
        assert!((b.x * b.x + b.y * b.y + b.theta * b.theta).sqrt() <= 1e-3, "{b:?}");
        assert!(sol.report.objective_value <= sol.initial_objective);
    }

    #[test]
    fn shifted_scenario_recovers_offset() {
        let chain = lift_pitch_roll();
        let wp = reachable_waypoints(&chain, &BaseConfig::new(0.5, 0.0, 0.0));
        let sol = optimize_base(&wp, &chain, &box_cloud(), &BaseOptParams::default()).unwrap();
        assert!((sol.base.x - 0.5).abs() < 0.02, "{:?}", sol.base);
        assert!(sol.base.y.abs() < 0.02 && sol.base.theta.abs() < 0.05);
        for q in &sol.joints {
            assert!(chain.within_limits(q));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let chain = lift_pitch_roll();
        let wp = reachable_waypoints(&chain, &BaseConfig::new(0.3, 0.1, 0.2));
        let params = BaseOptParams::default();
        let bounds = task_bounds(&box_cloud()).unwrap();
        let problem = BaseProblem::new(&wp, &chain, &bounds, &params).unwrap();
        let mut z = vec![0.2, -0.1, 0.4];
        for i in 0..wp.len() {
            z.extend([0.2 + 0.01 * i as f64, 0.3, -0.5]);
        }
        let mut g = vec![0.0; z.len()];
        problem.objective(&z, &mut g);
        let fd = finite_difference_gradient(|x| problem.objective(x, &mut vec![0.0; x.len()]), &z, 1e-6).unwrap();
        assert!(relative_error(&g, &fd, 1e-8) < 1e-6);
    }
}
