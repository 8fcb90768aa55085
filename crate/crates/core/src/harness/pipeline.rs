use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::base_opt::{base_transform, optimize_base, sample_waypoints, BaseConfig};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Trajectory, Vec3, BASE_FRAME, CAMERA_FRAME};
use crate::grasp_transfer::transfer_trajectory;
use crate::hand_refine::refine_hand_translation_with;
use crate::harness::config::PipelineConfig;
use crate::harness::metrics::{tracking_error, trajectory_csv, TrackingError};
use crate::harness::replay::{replay, OdomNoise};
use crate::harness::scenario::{HandData, Scenario};
use crate::io;
use crate::joint_opt::{insert_approach, optimize_joint_trajectory, prepend_standoff, JointTrajectory};
use crate::optim::SolveReport;
use crate::traj_align::{apply_delta, blend_dual, refine_indices, to_base};

/// Tolerance on `q_{i+1} − q_i − q̇_i dt` for a trajectory to count as valid.
pub const DYNAMICS_TOLERANCE: f64 = 1e-8;
/// Tracking thresholds a scenario run is checked against.
pub const E_TRANS_LIMIT: f64 = 0.005;
pub const E_ROT_LIMIT: f64 = 0.12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandStage {
    pub t_init: [f64; 3],
    pub t_refined: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub scenario: String,
    pub seed: u64,
    pub timings: Vec<StageTiming>,
    pub demo_frames: usize,
    /// Original demo indices that survived both clean-up passes.
    pub tracked_indices: Vec<usize>,
    pub hand: Option<HandStage>,
    /// First aligned pose equals the first pose aligned to the manipulated
    /// object (dual-object scenarios).
    pub blend_first_matches: Option<bool>,
    pub base: BaseConfig,
    pub base_objective: f64,
    pub base_converged: bool,
    pub ground_truth_base: Option<BaseConfig>,
    pub dt: f64,
    pub joint_frames: usize,
    pub joint_objective: f64,
    pub joint_converged: bool,
    pub dynamics_residual: f64,
    pub constraints_ok: bool,
    pub tracking: Option<TrackingError>,
    pub tracking_ok: Option<bool>,
}

impl PipelineReport {
    pub fn converged(&self) -> bool {
        self.base_converged && self.joint_converged
    }

    pub fn total_seconds(&self) -> f64 {
        self.timings.iter().map(|t| t.seconds).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseArtifact {
    pub base: BaseConfig,
    pub joints: Vec<Vec<f64>>,
    pub initial_objective: f64,
    pub report: SolveReport,
}

/// Intermediate results of one run, all in memory.
#[derive(Clone, Debug)]
pub struct PipelineArtifacts {
    pub demo: Trajectory,
    pub aligned_camera: Trajectory,
    pub reference_base: Trajectory,
    pub waypoints: Trajectory,
    pub base: BaseArtifact,
    pub reference_new_base: Trajectory,
    pub joint_trajectory: JointTrajectory,
    pub joint_report: SolveReport,
    pub executed_camera: Trajectory,
    pub ground_truth: Option<Trajectory>,
}

struct Clock {
    timings: Vec<StageTiming>,
}

impl Clock {
    fn stage<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage));
        self.timings.push(StageTiming {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn demo_from_hand(h: &HandData, demo: &Trajectory, config: &PipelineConfig, clock: &mut Clock) -> Result<(Trajectory, HandStage)> {
    let refined = clock.stage("hand_refine", || refine_hand_translation_with(&h.observation, &config.hand_options()))?;
    let correction = refined.t - h.observation.t_init;
    let traj = clock.stage("grasp_transfer", || {
        let frames: Vec<_> = h
            .grasps
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.pose.translation += correction;
                (h.hand_model.clone(), g)
            })
            .collect();
        let t = transfer_trajectory(&frames, &h.gripper_model, &config.transfer_options())?;
        Trajectory::with_timestamps(CAMERA_FRAME, t.poses().to_vec(), demo.timestamps().map(<[f64]>::to_vec))
    })?;
    let hand = HandStage {
        t_init: h.observation.t_init.into(),
        t_refined: refined.t.into(),
    };
    Ok((traj, hand))
}

/// Runs every stage on a loaded scenario.
pub fn run_scenario(scenario: &Scenario, config: &PipelineConfig) -> Result<(PipelineReport, PipelineArtifacts)> {
    config.validate()?;
    let mut clock = Clock { timings: Vec::new() };
    let chain = &scenario.chain;
    let t_bc = scenario.manifest.t_bc;

    let (demo, hand) = match &scenario.hand {
        Some(h) => {
            let (d, s) = demo_from_hand(h, &scenario.demo, config, &mut clock)?;
            (d, Some(s))
        }
        None => (scenario.demo.clone(), None),
    };
    let dt = config.dt.or_else(|| demo.mean_time_step()).unwrap_or(0.1);

    let kept_demo = clock.stage("refine", || Ok(refine_indices(&demo, &config.refine)))?;
    let refined = demo.select(&kept_demo);

    let mut blend_first_matches = None;
    let (aligned_camera, reference_base) = clock.stage("align", || {
        let deltas: Vec<_> = scenario.objects.iter().map(|o| o.delta()).collect();
        let primary = apply_delta(&refined, &deltas[0]);
        let aligned = match deltas.get(1) {
            Some(d2) => {
                let secondary = apply_delta(&refined, d2);
                let blended = blend_dual(&primary, &secondary, &config.sigma.params(refined.len())?)?;
                blend_first_matches = Some(blended.first() == primary.first());
                blended
            }
            None => primary,
        };
        let base = to_base(&aligned, &t_bc)?;
        Ok((aligned, base))
    })?;

    let kept_base = clock.stage("refine", || Ok(refine_indices(&reference_base, &config.refine)))?;
    let reference_base = reference_base.select(&kept_base);
    let tracked_indices: Vec<usize> = kept_base.iter().map(|&k| kept_demo[k]).collect();

    let env_base: Vec<Vec3> = scenario.env_cloud.points.iter().map(|p| t_bc.transform_point(p)).collect();
    let (waypoints, base_solution) = clock.stage("optimize_base", || {
        let params = config.base_params()?;
        let waypoints = sample_waypoints(&reference_base, params.n_samples.min(reference_base.len()))?;
        let sol = optimize_base(&waypoints, chain, &env_base, &params)?;
        Ok((waypoints, sol))
    })?;
    let base = base_solution.base;

    let new_from_old = base_transform(&base).inverse();
    let (reference_new_base, grasp_index, joint_solution) = clock.stage("optimize_traj", || {
        let moved = reference_base.map_poses(BASE_FRAME, |p| new_from_old.compose(p));
        let env_new: Vec<Vec3> = env_base.iter().map(|p| new_from_old.transform_point(p)).collect();
        let with_standoff = prepend_standoff(&moved, config.standoff)?;
        let (reference, grasp_index) = insert_approach(&with_standoff, config.approach_steps)?;
        let params = config.joint_params(dt)?;
        let sol = optimize_joint_trajectory(chain, &reference, &env_new, &params, &base_solution.joints[0])?;
        Ok((reference, grasp_index, sol))
    })?;
    let jt = &joint_solution.trajectory;

    let executed_camera = clock.stage("replay", || {
        let noise = (config.odom_noise > 0.0).then_some(OdomNoise {
            std: config.odom_noise,
            seed: config.seed,
        });
        let executed = replay(chain, jt, &base, noise)?;
        let cam_from_base = t_bc.inverse();
        let poses: Vec<Pose> = executed.poses()[grasp_index..].iter().map(|p| cam_from_base.compose(p)).collect();
        Trajectory::new(CAMERA_FRAME, poses)
    })?;

    let ground_truth = scenario.ground_truth.as_ref().map(|gt| gt.select(&tracked_indices));
    let tracking = clock.stage("metrics", || {
        ground_truth.as_ref().map(|gt| tracking_error(&executed_camera, gt)).transpose()
    })?;

    let constraints_ok = jt.validate(chain, DYNAMICS_TOLERANCE).is_ok();
    let report = PipelineReport {
        scenario: scenario.name().into(),
        seed: config.seed,
        timings: clock.timings,
        demo_frames: scenario.demo.len(),
        tracked_indices,
        hand,
        blend_first_matches,
        base,
        base_objective: base_solution.report.objective_value,
        base_converged: base_solution.report.converged,
        ground_truth_base: scenario.manifest.ground_truth.as_ref().map(|g| g.base_offset),
        dt,
        joint_frames: jt.len(),
        joint_objective: joint_solution.report.objective_value,
        joint_converged: joint_solution.report.converged,
        dynamics_residual: jt.dynamics_residual(),
        constraints_ok,
        tracking,
        tracking_ok: tracking.map(|e| e.e_trans <= E_TRANS_LIMIT && e.e_rot <= E_ROT_LIMIT),
    };
    let artifacts = PipelineArtifacts {
        demo,
        aligned_camera,
        reference_base,
        waypoints,
        base: BaseArtifact {
            base,
            joints: base_solution.joints,
            initial_objective: base_solution.initial_objective,
            report: base_solution.report,
        },
        reference_new_base,
        joint_trajectory: joint_solution.trajectory,
        joint_report: joint_solution.report,
        executed_camera,
        ground_truth,
    };
    Ok((report, artifacts))
}

/// Artifact file names written by [`write_artifacts`].
pub mod files {
    pub const DEMO: &str = "demo_used.json";
    pub const ALIGNED: &str = "aligned_camera.json";
    pub const REFERENCE_BASE: &str = "reference_base.json";
    pub const WAYPOINTS: &str = "waypoints.json";
    pub const BASE: &str = "base_solution.json";
    pub const REFERENCE_NEW_BASE: &str = "reference_new_base.json";
    pub const JOINT_TRAJ: &str = "joint_traj.json";
    pub const JOINT_REPORT: &str = "joint_solve.json";
    pub const EXECUTED: &str = "executed_camera.json";
    pub const GROUND_TRUTH: &str = "ground_truth_tracked.json";
    pub const REPORT: &str = "report.json";
}

pub fn write_artifacts(out: &Path, report: &PipelineReport, a: &PipelineArtifacts) -> Result<()> {
    use files::*;
    io::write_json(&out.join(DEMO), &a.demo)?;
    io::write_json(&out.join(ALIGNED), &a.aligned_camera)?;
    io::write_json(&out.join(REFERENCE_BASE), &a.reference_base)?;
    io::write_json(&out.join(WAYPOINTS), &a.waypoints)?;
    io::write_json(&out.join(BASE), &a.base)?;
    io::write_json(&out.join(REFERENCE_NEW_BASE), &a.reference_new_base)?;
    io::write_json(&out.join(JOINT_TRAJ), &a.joint_trajectory)?;
    io::write_json(&out.join(JOINT_REPORT), &a.joint_report)?;
    io::write_json(&out.join(EXECUTED), &a.executed_camera)?;
    io::write_text(&out.join("aligned_camera.csv"), &trajectory_csv(&a.aligned_camera))?;
    io::write_text(&out.join("executed_camera.csv"), &trajectory_csv(&a.executed_camera))?;
    if let Some(gt) = &a.ground_truth {
        io::write_json(&out.join(GROUND_TRUTH), gt)?;
        io::write_text(&out.join("ground_truth_tracked.csv"), &trajectory_csv(gt))?;
    }
    io::write_json(&out.join(REPORT), report)
}

/// Loads the scenario at `dir`, runs it and, when `out` is given, writes
/// every intermediate artifact and the report there.
pub fn run_pipeline(dir: &Path, config: &PipelineConfig, out: Option<&Path>) -> Result<PipelineReport> {
    let scenario = Scenario::load(dir).map_err(|e| e.in_stage("load"))?;
    let (report, artifacts) = run_scenario(&scenario, config)?;
    if let Some(out) = out {
        write_artifacts(out, &report, &artifacts)?;
    }
    Ok(report)
}

/// Maps an unconverged run to the solver error used for exit status.
pub fn require_convergence(report: &PipelineReport) -> Result<()> {
    if report.converged() {
        Ok(())
    } else {
        Err(Error::NotConverged(format!(
            "scenario `{}`: base solver converged = {}, joint solver converged = {}",
            report.scenario, report.base_converged, report.joint_converged
        )))
    }
}
