//! Acceptance suite. Runs without the libtest harness so that the one-line
//! verdict per criterion is always printed, then exits non-zero if any
//! blocking criterion failed.

use std::process::ExitCode;
use std::time::Instant;

use hrt1::base_opt::{base_transform, optimize_base, sample_waypoints, task_bounds, BaseConfig, BaseOptParams, BaseProblem};
use hrt1::geometry::{geodesic_angle, interp_pose, rot_z, BASE_FRAME, CAMERA_FRAME};
use hrt1::grasp_transfer::{
    articulated_test_gripper, parallel_jaw_gripper, synthetic_hand, GraspConfig, GraspTransfer,
};
use hrt1::hand_refine::{hand_objective, refine_hand_translation, HandObjective};
use hrt1::harness::generate::planar_hand_observation;
use hrt1::harness::pipeline::run_scenario;
use hrt1::harness::{generate_scenario, ChainKind, PipelineConfig, Scenario, ScenarioKind, ScenarioSpec};
use hrt1::joint_opt::{JointOptParams, JointProblem, JointTrajectory};
use hrt1::kinematics::{fetch_like, forward_kinematics, lift_pitch_roll, pose_jacobian, KinematicChain};
use hrt1::optim::{finite_difference_gradient, minimize_box, relative_error, BoxOptions, Nlp};
use hrt1::spatial::PointIndex;
use hrt1::traj_align::{apply_delta, blend_dual, blend_weights, refine_indices, BlendParams, ObjectDelta, RefineParams};
use hrt1::{Pose, Rotation, Trajectory, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    blocking: bool,
    detail: String,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_rotation(r: &mut ChaCha8Rng) -> Rotation {
    let axis = Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
    let axis = nalgebra::Unit::new_normalize(axis + Vec3::new(1e-3, 0.0, 0.0));
    Rotation::from_axis_angle(&axis, r.gen_range(-3.0..3.0))
}

fn random_pose(r: &mut ChaCha8Rng, spread: f64) -> Pose {
    let t = Vec3::new(r.gen_range(-spread..spread), r.gen_range(-spread..spread), r.gen_range(-spread..spread));
    Pose::new(random_rotation(r), t)
}

fn random_config(chain: &KinematicChain, r: &mut ChaCha8Rng) -> Vec<f64> {
    chain.joints.iter().map(|j| r.gen_range(j.lower..=j.upper)).collect()
}

/// Position and angle between two poses.
fn pose_gap(a: &Pose, b: &Pose) -> (f64, f64) {
    ((a.translation - b.translation).norm(), geodesic_angle(&a.rotation, &b.rotation))
}

// ---------------------------------------------------------------- 1 and 6

struct TrackingRun {
    verdict: Verdict,
    trajectories: Vec<(KinematicChain, JointTrajectory)>,
}

fn tracking_reproduction() -> TrackingRun {
    let root = tempfile::tempdir().expect("temp dir");
    let config = PipelineConfig::default();
    let start = Instant::now();
    let mut trajectories = Vec::new();
    let (mut sum_t, mut sum_r, mut count) = (0.0, 0.0, 0);
    let mut failures = Vec::new();
    for k in 0..16u64 {
        let seed = 1000 + k;
        let spec = ScenarioSpec {
            kind: if k % 2 == 0 { ScenarioKind::Single } else { ScenarioKind::Dual },
            chain: ChainKind::Fetch,
            frames: Some(70 + (k as usize * 17) % 51),
            with_hand: k % 4 == 0,
            ..ScenarioSpec::default()
        };
        let name = format!("accept-{k:02}");
        let dir = root.path().join(&name);
        let outcome = generate_scenario(&dir, &name, seed, &spec)
            .and_then(|_| Scenario::load(&dir))
            .and_then(|s| run_scenario(&s, &config));
        match outcome {
            Ok((report, artifacts)) => match report.tracking {
                Some(e) => {
                    sum_t += e.e_trans;
                    sum_r += e.e_rot;
                    count += 1;
                    trajectories.push((artifacts_chain(&dir), artifacts.joint_trajectory));
                }
                None => failures.push(format!("{name}: no ground truth")),
            },
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let mean_t = sum_t / count.max(1) as f64;
    let mean_r = sum_r / count.max(1) as f64;
    let pass = failures.is_empty() && count == 16 && mean_t <= 0.005 && mean_r <= 0.12 && elapsed <= 600.0;
    let mut detail = format!("{count}/16 scenarios, mean e_trans {mean_t:.5} m, mean e_rot {mean_r:.5} rad, {elapsed:.1} s");
    if !failures.is_empty() {
        detail.push_str(&format!("; failures: {}", failures.join(", ")));
    }
    TrackingRun {
        verdict: Verdict {
            id: 1,
            name: "tracking error at desk scale",
            pass,
            blocking: true,
            detail,
        },
        trajectories,
    }
}

fn artifacts_chain(dir: &std::path::Path) -> KinematicChain {
    Scenario::load(dir).expect("scenario reloads").chain
}

fn constraint_satisfaction(runs: &[(KinematicChain, JointTrajectory)]) -> Verdict {
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for (k, (chain, jt)) in runs.iter().enumerate() {
        let last = jt.q.len() - 1;
        let mut ok = jt.q.len() == jt.qd.len() && jt.dt > 0.0;
        for (q, qd) in jt.q.iter().zip(&jt.qd) {
            for (j, spec) in chain.joints.iter().enumerate() {
                ok &= q[j] >= spec.lower && q[j] <= spec.upper;
                ok &= qd[j].abs() <= spec.vel_limit;
            }
        }
        ok &= jt.qd[0].iter().all(|v| *v == 0.0) && jt.qd[last].iter().all(|v| *v == 0.0);
        for i in 0..last {
            for j in 0..chain.dof() {
                let r = (jt.q[i + 1][j] - jt.q[i][j] - jt.qd[i][j] * jt.dt).abs();
                worst = worst.max(r);
                ok &= r <= 1e-8;
            }
        }
        if !ok {
            bad.push(k);
        }
    }
    Verdict {
        id: 6,
        name: "joint trajectory constraints",
        pass: bad.is_empty() && !runs.is_empty(),
        blocking: true,
        detail: format!(
            "{}/{} trajectories satisfy bounds, rest ends and dynamics (worst residual {worst:.2e}){}",
            runs.len() - bad.len(),
            runs.len(),
            if bad.is_empty() { String::new() } else { format!("; failing {bad:?}") }
        ),
    }
}

/// Extra standalone solves: a short lift3 path and a Fetch path passing a
/// wall of environment points.
fn standalone_joint_solves() -> Vec<(KinematicChain, JointTrajectory)> {
    let mut out = Vec::new();
    for (seed, chain) in [(1u64, lift_pitch_roll()), (2, fetch_like())] {
        let mut r = rng(seed);
        let a = random_config(&chain, &mut r);
        let b: Vec<f64> = a
            .iter()
            .zip(&chain.joints)
            .map(|(v, j)| (v + r.gen_range(-0.3..0.3)).clamp(j.lower, j.upper))
            .collect();
        let poses: Vec<Pose> = (0..40)
            .map(|i| {
                let s = i as f64 / 39.0;
                let q: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * (y - x)).collect();
                forward_kinematics(&chain, &q).unwrap()
            })
            .collect();
        let reference = Trajectory::new(BASE_FRAME, poses).unwrap();
        let mid = reference.poses()[20].translation;
        let wall: Vec<Vec3> = (0..100)
            .map(|k| mid + Vec3::new(0.08, 0.02 * (k % 10) as f64 - 0.1, 0.02 * (k / 10) as f64 - 0.1))
            .collect();
        let params = JointOptParams::default();
        if let Ok(sol) = hrt1::joint_opt::optimize_joint_trajectory(&chain, &reference, &wall, &params, &a) {
            out.push((chain, sol.trajectory));
        }
    }
    out
}

// ---------------------------------------------------------------- 2

fn gradient_checks() -> Verdict {
    let tol = 1e-4;
    let mut worst = [0.0f64; 4];
    let mut points = [0usize; 4];

    // Hand refinement: analytic gradient with frozen correspondences against
    // differences of the full objective.
    let mut r = rng(21);
    for _ in 0..20 {
        let t_gt = Vec3::new(r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1), r.gen_range(0.4..0.8));
        let mut obs = planar_hand_observation(t_gt, r.gen_range(0.05..0.2), 600.0).unwrap();
        for p in &mut obs.hand_cloud {
            *p += Vec3::new(r.gen_range(-3e-3..3e-3), r.gen_range(-3e-3..3e-3), r.gen_range(-3e-3..3e-3));
        }
        let cloud = PointIndex::new(obs.hand_cloud.clone());
        let t = t_gt + Vec3::new(r.gen_range(-0.02..0.02), r.gen_range(-0.02..0.02), r.gen_range(-0.05..0.15));
        let (_, g) = HandObjective::frozen_at(&obs, &cloud, 1.0, &t).unwrap().evaluate(&t).unwrap();
        let fd = finite_difference_gradient(
            |x| hand_objective(&obs, &cloud, 1.0, &Vec3::new(x[0], x[1], x[2])).unwrap(),
            t.as_slice(),
            1e-7,
        )
        .unwrap();
        worst[0] = worst[0].max(relative_error(g.as_slice(), &fd, 1e-8));
        points[0] += 1;
    }

    // Grasp transfer: articulated target so hinge gradients are covered.
    let hand = synthetic_hand();
    let target = articulated_test_gripper();
    let transfer = GraspTransfer::new(&hand, &target).unwrap();
    let mut r = rng(22);
    for _ in 0..20 {
        let source = GraspConfig::rigid(random_pose(&mut r, 0.3));
        let anchors = transfer.anchor_points(&source).unwrap();
        let mut x = transfer.pack(&GraspConfig {
            pose: random_pose(&mut r, 0.3),
            joints: target.limits().iter().map(|[lo, hi]| r.gen_range(*lo..=*hi)).collect(),
        });
        // Unnormalized quaternion, as seen by the optimizer between steps.
        let scale = r.gen_range(0.8..1.2);
        x[3..7].iter_mut().for_each(|v| *v *= scale);
        let mut g = vec![0.0; x.len()];
        transfer.objective(&anchors, &x, &mut g);
        let fd = finite_difference_gradient(|y| transfer.objective(&anchors, y, &mut vec![0.0; y.len()]), &x, 1e-7).unwrap();
        worst[1] = worst[1].max(relative_error(&g, &fd, 1e-8));
        points[1] += 1;
    }

    // Base placement on the Fetch-like chain.
    let chain = fetch_like();
    let params = BaseOptParams::default();
    let mut r = rng(23);
    for _ in 0..20 {
        let offset = base_transform(&BaseConfig::new(r.gen_range(0.3..0.8), r.gen_range(-0.3..0.3), r.gen_range(-0.5..0.5)));
        let poses: Vec<Pose> = (0..params.n_samples)
            .map(|_| offset.compose(&forward_kinematics(&chain, &random_config(&chain, &mut r)).unwrap()))
            .collect();
        let waypoints = Trajectory::new(BASE_FRAME, poses).unwrap();
        let cloud: Vec<Vec3> = (0..50)
            .map(|_| Vec3::new(r.gen_range(0.5..1.5), r.gen_range(-0.8..0.8), r.gen_range(0.3..0.9)))
            .collect();
        let bounds = task_bounds(&cloud).unwrap();
        let problem = BaseProblem::new(&waypoints, &chain, &bounds, &params).unwrap();
        let z: Vec<f64> = problem
            .lower()
            .iter()
            .zip(problem.upper())
            .map(|(lo, hi)| r.gen_range(*lo..=*hi))
            .collect();
        let mut g = vec![0.0; z.len()];
        problem.objective(&z, &mut g);
        let fd = finite_difference_gradient(|y| problem.objective(y, &mut vec![0.0; y.len()]), &z, 1e-6).unwrap();
        worst[2] = worst[2].max(relative_error(&g, &fd, 1e-8));
        points[2] += 1;
    }

    // Joint trajectory objective in natural variables, with environment
    // points close enough to the arm for the clearance term to be active.
    let chain = fetch_like();
    let params = JointOptParams::default();
    let mut r = rng(24);
    for _ in 0..20 {
        let frames = 6;
        let q: Vec<Vec<f64>> = (0..frames).map(|_| random_config(&chain, &mut r)).collect();
        let reference = Trajectory::new(
            BASE_FRAME,
            q.iter()
                .map(|c| {
                    let ee = forward_kinematics(&chain, c).unwrap();
                    ee.compose(&Pose::from_translation(Vec3::new(r.gen_range(-0.05..0.05), 0.02, -0.03)))
                })
                .collect(),
        )
        .unwrap();
        let robot = hrt1::kinematics::robot_points(&chain, &q[frames / 2]).unwrap();
        let env: Vec<Vec3> = robot
            .iter()
            .step_by(3)
            .map(|p| p.position + Vec3::new(p.radius + r.gen_range(0.0..0.015), 0.0, 0.0))
            .collect();
        let problem = JointProblem::new(&chain, &reference, &env, &params).unwrap();
        let mut x: Vec<f64> = q.concat();
        let n = x.len();
        for i in 0..frames {
            for spec in &chain.joints {
                let v = if i == 0 || i + 1 == frames { 0.0 } else { r.gen_range(-spec.vel_limit..=spec.vel_limit) };
                x.push(v);
            }
        }
        let (mut gq, mut gqd) = (vec![0.0; n], vec![0.0; n]);
        problem.total_objective(&x[..n], &x[n..], &mut gq, &mut gqd);
        let fd = finite_difference_gradient(
            |y| problem.total_objective(&y[..n], &y[n..], &mut vec![0.0; n], &mut vec![0.0; n]),
            &x,
            1e-6,
        )
        .unwrap();
        gq.extend(gqd);
        worst[3] = worst[3].max(relative_error(&gq, &fd, 1e-8));
        points[3] += 1;
    }

    let pass = worst.iter().all(|w| *w <= tol) && points.iter().all(|p| *p >= 20);
    Verdict {
        id: 2,
        name: "analytic gradients vs finite differences",
        pass,
        blocking: true,
        detail: format!(
            "worst relative error: hand {:.1e}, grasp {:.1e}, base {:.1e}, joint {:.1e} ({} points each)",
            worst[0], worst[1], worst[2], worst[3], points[0]
        ),
    }
}

// ---------------------------------------------------------------- 3

/// Best goal cost of one waypoint with the base fixed, by box L-BFGS over
/// the arm from a few seeds. Gradient from the geometric Jacobian.
fn arm_best_cost(chain: &KinematicChain, base: &Pose, target: &Pose, pts: &[Vec3], seeds: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let targets: Vec<Vec3> = pts.iter().map(|p| target.transform_point(p)).collect();
    let rb = base.rotation.matrix();
    let f = |q: &[f64], g: &mut [f64]| -> f64 {
        let ee = forward_kinematics(chain, q).unwrap();
        let jac = pose_jacobian(chain, q).unwrap();
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut cost = 0.0;
        for (p, y) in pts.iter().zip(&targets) {
            let arm = ee.rotation.rotate(p);
            let w = base.transform_point(&ee.transform_point(p));
            let res = w - y;
            cost += res.norm_squared();
            for k in 0..q.len() {
                let lin = Vec3::new(jac[(0, k)], jac[(1, k)], jac[(2, k)]);
                let ang = Vec3::new(jac[(3, k)], jac[(4, k)], jac[(5, k)]);
                g[k] += 2.0 * res.dot(&(rb * (lin + ang.cross(&arm))));
            }
        }
        cost
    };
    let options = BoxOptions {
        max_iters: 200,
        ..BoxOptions::default()
    };
    let (lo, hi) = (chain.lower_limits(), chain.upper_limits());
    let mut best = (f64::INFINITY, seeds[0].clone());
    for seed in seeds {
        let out = minimize_box(f, seed, &lo, &hi, &options).unwrap();
        if out.value < best.0 {
            best = (out.value, out.x);
        }
    }
    best
}

fn base_oracle() -> Verdict {
    let chain = lift_pitch_roll();
    let params = BaseOptParams::default();
    let pts = params.ee_points.points().to_vec();
    let mut within = 0;
    let mut recovered = 0;
    let mut worst_ratio = 0.0f64;
    let (mut worst_dp, mut worst_dth) = (0.0f64, 0.0f64);
    for seed in 0..10u64 {
        let mut r = rng(300 + seed);
        let gt = BaseConfig::new(r.gen_range(0.2..0.6), r.gen_range(-0.3..0.3), r.gen_range(-0.5..0.5));
        let offset = base_transform(&gt);
        let a = random_config(&chain, &mut r);
        let b: Vec<f64> = a
            .iter()
            .zip(&chain.joints)
            .map(|(v, j)| (v + r.gen_range(-0.4..0.4)).clamp(j.lower, j.upper))
            .collect();
        let poses: Vec<Pose> = (0..60)
            .map(|i| {
                let s = i as f64 / 59.0;
                let q: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * (y - x)).collect();
                offset.compose(&forward_kinematics(&chain, &q).unwrap())
            })
            .collect();
        let traj = Trajectory::new(BASE_FRAME, poses).unwrap();
        let waypoints = sample_waypoints(&traj, params.n_samples).unwrap();
        let cloud: Vec<Vec3> = (0..30)
            .flat_map(|i| (0..40).map(move |j| (i, j)))
            .map(|(i, j)| Vec3::new(gt.x + 0.3 + 0.03 * i as f64, gt.y - 0.6 + 0.03 * j as f64, 0.3))
            .collect();
        let sol = optimize_base(&waypoints, &chain, &cloud, &params).unwrap();
        let f_opt = sol.report.objective_value;

        // Exhaustive grid over a window around the constructed offset.
        let mid = chain.mid_config();
        let mut warm: Vec<Vec<f64>> = vec![mid.clone(); waypoints.len()];
        let mut f_grid = f64::INFINITY;
        for ix in -5..=5 {
            for iy in -5..=5 {
                for it in -5..=5 {
                    let cell = BaseConfig::new(gt.x + 0.02 * ix as f64, gt.y + 0.02 * iy as f64, gt.theta + 0.05 * it as f64);
                    let base = base_transform(&cell);
                    let mut f = params.lambda_effort * (cell.x * cell.x + cell.y * cell.y + cell.theta * cell.theta);
                    for (w, target) in waypoints.poses().iter().enumerate() {
                        let (c, q) = arm_best_cost(&chain, &base, target, &pts, &[warm[w].clone(), mid.clone()]);
                        warm[w] = q;
                        f += params.lambda_goal * c;
                        if f >= f_grid {
                            break;
                        }
                    }
                    f_grid = f_grid.min(f);
                }
            }
        }
        let ratio = f_opt / f_grid;
        worst_ratio = worst_ratio.max(ratio);
        if f_opt <= 1.05 * f_grid {
            within += 1;
        }
        let dp = ((sol.base.x - gt.x).powi(2) + (sol.base.y - gt.y).powi(2)).sqrt();
        let dth = (sol.base.theta - gt.theta).abs();
        worst_dp = worst_dp.max(dp);
        worst_dth = worst_dth.max(dth);
        if dp <= 0.02 && dth <= 0.05 {
            recovered += 1;
        }
    }
    Verdict {
        id: 3,
        name: "base placement vs grid oracle",
        pass: within == 10 && recovered == 10,
        blocking: true,
        detail: format!(
            "{within}/10 within 5% of grid (worst ratio {worst_ratio:.4}), {recovered}/10 offsets recovered (worst {worst_dp:.4} m, {worst_dth:.4} rad)"
        ),
    }
}

// ---------------------------------------------------------------- 4

fn perturbed(pose: &Pose, r: &mut ChaCha8Rng) -> Pose {
    let dir = Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)).normalize();
    let axis = nalgebra::Unit::new_normalize(Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
    let rot = Rotation::from_axis_angle(&axis, 5f64.to_radians());
    Pose::new(rot.compose(&pose.rotation), pose.translation + 0.02 * dir)
}

fn grasp_self_consistency() -> Verdict {
    let jaw = parallel_jaw_gripper();
    let transfer = GraspTransfer::new(&jaw, &jaw).unwrap();
    let (mut recovered, mut equivariant) = (0, 0);
    let (mut worst_t, mut worst_r, mut worst_et, mut worst_er) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for seed in 0..20u64 {
        let mut r = rng(400 + seed);
        let source = random_pose(&mut r, 0.5);
        let init = perturbed(&source, &mut r);
        let out = transfer.transfer(&GraspConfig::rigid(source), &GraspConfig::rigid(init)).unwrap();
        let (dt, dr) = pose_gap(&out.config.pose, &source);
        worst_t = worst_t.max(dt);
        worst_r = worst_r.max(dr);
        if dt <= 1e-3 && dr <= 1e-2 {
            recovered += 1;
        }

        let g = random_pose(&mut r, 0.5);
        let moved = transfer
            .transfer(&GraspConfig::rigid(g.compose(&source)), &GraspConfig::rigid(g.compose(&init)))
            .unwrap();
        let (et, er) = pose_gap(&moved.config.pose, &g.compose(&out.config.pose));
        worst_et = worst_et.max(et);
        worst_er = worst_er.max(er);
        if et <= 1e-3 && er <= 1e-2 {
            equivariant += 1;
        }
    }
    Verdict {
        id: 4,
        name: "grasp transfer self-consistency",
        pass: recovered == 20 && equivariant == 20,
        blocking: true,
        detail: format!(
            "{recovered}/20 recovered (worst {worst_t:.2e} m, {worst_r:.2e} rad), {equivariant}/20 equivariant (worst {worst_et:.2e} m, {worst_er:.2e} rad)"
        ),
    }
}

// ---------------------------------------------------------------- 5

fn hand_recovery() -> Verdict {
    let step = 5e-4;
    let (mut close, mut matches) = (0, 0);
    let (mut worst_gt, mut worst_grid) = (0.0f64, 0.0f64);
    for seed in 0..10u64 {
        let mut r = rng(500 + seed);
        let t_gt = Vec3::new(r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1), r.gen_range(0.4..0.8));
        let obs = planar_hand_observation(t_gt, 0.15, 600.0).unwrap();
        let t = refine_hand_translation(&obs, 1.0).unwrap();

        let cloud = PointIndex::new(obs.hand_cloud.clone());
        let mut best = (f64::INFINITY, obs.t_init);
        for ix in -8..=8 {
            for iy in -8..=8 {
                for iz in -400..=20 {
                    let p = obs.t_init + Vec3::new(step * ix as f64, step * iy as f64, step * iz as f64);
                    let f = hand_objective(&obs, &cloud, 1.0, &p).unwrap();
                    if f < best.0 {
                        best = (f, p);
                    }
                }
            }
        }
        let d_gt = (t - t_gt).norm();
        let d_grid = (t - best.1).norm();
        worst_gt = worst_gt.max(d_gt);
        worst_grid = worst_grid.max(d_grid);
        close += usize::from(d_gt <= 2e-3);
        // Within one grid cell diagonal of the grid minimizer.
        matches += usize::from(d_grid <= step * 3f64.sqrt());
    }
    Verdict {
        id: 5,
        name: "hand translation recovery",
        pass: close == 10 && matches == 10,
        blocking: true,
        detail: format!(
            "{close}/10 within 2 mm of truth (worst {:.3} mm), {matches}/10 within one cell of the 0.5 mm grid minimum (worst {:.3} mm)",
            worst_gt * 1e3,
            worst_grid * 1e3
        ),
    }
}

// ---------------------------------------------------------------- 7

fn algebraic_properties() -> Verdict {
    let mut failed: Vec<&str> = Vec::new();
    let mut r = rng(700);

    // Identity delta leaves a trajectory bit-identical.
    let poses: Vec<Pose> = (0..50).map(|_| random_pose(&mut r, 1.0)).collect();
    let traj = Trajectory::new(CAMERA_FRAME, poses).unwrap();
    if apply_delta(&traj, &ObjectDelta::identity()) != traj {
        failed.push("identity delta");
    }

    // Blend endpoint: the first frame takes weight exactly 1.
    for len in [1usize, 2, 7, 80, 120] {
        let p = BlendParams::quarter_length(len).unwrap();
        let w = blend_weights(len, &p);
        let t1 = Trajectory::new(CAMERA_FRAME, (0..len).map(|_| random_pose(&mut r, 1.0)).collect()).unwrap();
        let t2 = Trajectory::new(CAMERA_FRAME, (0..len).map(|_| random_pose(&mut r, 1.0)).collect()).unwrap();
        let blended = blend_dual(&t1, &t2, &p).unwrap();
        if w[0] != 1.0 || blended.poses()[0] != t1.poses()[0] {
            failed.push("blend endpoint");
            break;
        }
    }

    // SLERP midpoint.
    let a = Pose::identity();
    let b = Pose::from_rotation(rot_z(std::f64::consts::FRAC_PI_2));
    let m = interp_pose(&a, &b, 0.5).unwrap();
    if geodesic_angle(&m.rotation, &rot_z(std::f64::consts::FRAC_PI_4)) > 1e-12 {
        failed.push("slerp midpoint");
    }
    for _ in 0..200 {
        let (a, b) = (random_pose(&mut r, 1.0), random_pose(&mut r, 1.0));
        let m = interp_pose(&a, &b, 0.5).unwrap();
        let half = 0.5 * geodesic_angle(&a.rotation, &b.rotation);
        if (geodesic_angle(&m.rotation, &a.rotation) - half).abs() > 1e-9
            || (geodesic_angle(&m.rotation, &b.rotation) - half).abs() > 1e-9
        {
            failed.push("slerp midpoint symmetry");
            break;
        }
    }

    // Geodesic metric axioms.
    for _ in 0..500 {
        let (x, y, z) = (random_rotation(&mut r), random_rotation(&mut r), random_rotation(&mut r));
        let (dxy, dyx, dyz, dxz) = (
            geodesic_angle(&x, &y),
            geodesic_angle(&y, &x),
            geodesic_angle(&y, &z),
            geodesic_angle(&x, &z),
        );
        if dxy < 0.0 || geodesic_angle(&x, &x) != 0.0 || (dxy - dyx).abs() > 1e-12 || dxz > dxy + dyz + 1e-9 {
            failed.push("geodesic metric");
            break;
        }
    }

    // Refine keeps both endpoints and never reorders, spikes included.
    let params = RefineParams::default();
    for _ in 0..100 {
        let len = r.gen_range(2..60);
        let mut poses: Vec<Pose> = (0..len)
            .map(|i| Pose::from_translation(Vec3::new(0.01 * i as f64, 0.0, 0.0) * r.gen_range(0.0..2.0)))
            .collect();
        if len > 4 {
            let k = r.gen_range(1..len - 1);
            poses[k].translation += Vec3::new(0.0, 0.5, 0.0);
        }
        let t = Trajectory::new(CAMERA_FRAME, poses).unwrap();
        let idx = refine_indices(&t, &params);
        let ordered = idx.windows(2).all(|w| w[0] < w[1]);
        if idx.first() != Some(&0) || idx.last() != Some(&(len - 1)) || !ordered {
            failed.push("refine endpoints");
            break;
        }
    }

    Verdict {
        id: 7,
        name: "algebraic property suite",
        pass: failed.is_empty(),
        blocking: true,
        detail: if failed.is_empty() {
            "identity delta, blend endpoint, slerp midpoint, geodesic metric, refine endpoints".into()
        } else {
            format!("failed: {}", failed.join(", "))
        },
    }
}

// ---------------------------------------------------------------- 8

fn runtime_budget(trajectories: &mut Vec<(KinematicChain, JointTrajectory)>) -> Verdict {
    let root = tempfile::tempdir().expect("temp dir");
    let spec = ScenarioSpec {
        kind: ScenarioKind::Single,
        chain: ChainKind::Fetch,
        frames: Some(300),
        ..ScenarioSpec::default()
    };
    let dir = root.path().join("runtime");
    let outcome = generate_scenario(&dir, "runtime", 800, &spec)
        .and_then(|_| Scenario::load(&dir))
        .and_then(|s| run_scenario(&s, &PipelineConfig::default()).map(|out| (s, out)));
    let (scenario, (report, artifacts)) = match outcome {
        Ok(v) => v,
        Err(e) => {
            return Verdict {
                id: 8,
                name: "runtime budget at T = 300",
                pass: false,
                blocking: false,
                detail: format!("run failed: {e}"),
            }
        }
    };
    trajectories.push((scenario.chain.clone(), artifacts.joint_trajectory));
    let stage = |name: &str| report.timings.iter().filter(|t| t.stage == name).map(|t| t.seconds).sum::<f64>();
    let (base, joint) = (stage("optimize_base"), stage("optimize_traj"));
    let alert = base > 10.0 || joint > 30.0;
    Verdict {
        id: 8,
        name: "runtime budget at T = 300",
        pass: base <= 5.0 && joint <= 15.0,
        blocking: false,
        detail: format!(
            "base {base:.2} s (budget 5), joint {joint:.2} s (budget 15){}",
            if alert { "; ALERT: over 2x budget" } else { "" }
        ),
    }
}

fn main() -> ExitCode {
    // libtest-style flags (e.g. `--list`, filters) are ignored; the suite
    // always runs in full.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut verdicts = Vec::new();
    let mut run = |v: Verdict| {
        println!(
            "criterion {} {:<40} {}{}  {}",
            v.id,
            v.name,
            if v.pass { "PASS" } else { "FAIL" },
            if v.blocking { "" } else { " (non-blocking)" },
            v.detail
        );
        verdicts.push(v);
    };

    let TrackingRun { verdict, trajectories } = tracking_reproduction();
    run(verdict);
    run(gradient_checks());
    run(base_oracle());
    run(grasp_self_consistency());
    run(hand_recovery());
    let mut trajectories = trajectories;
    trajectories.extend(standalone_joint_solves());
    let runtime = runtime_budget(&mut trajectories);
    run(constraint_satisfaction(&trajectories));
    run(algebraic_properties());
    run(runtime);

    let failed = verdicts.iter().filter(|v| v.blocking && !v.pass).count();
    println!("acceptance: {} criteria, {} blocking failures", verdicts.len(), failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
