//! Synthetic scenarios with known ground truth: a joint path the robot can
//! execute after a known base motion, seen through a fixed camera, with the
//! demonstration recovered by undoing the object motion.

use std::path::Path;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base_opt::{base_transform, BaseConfig};
use crate::error::{Error, Result};
use crate::geometry::{interp_pose, rot_z, Pose, Rotation, Trajectory, Vec3, CAMERA_FRAME};
use crate::grasp_transfer::{hand_to_gripper, parallel_jaw_gripper, synthetic_hand, GraspConfig};
use crate::hand_refine::{CameraIntrinsics, HandObservation};
use crate::harness::config::Sigma;
use crate::harness::scenario::{
    GroundTruth, HandFixtures, PointCloud, ScenarioKind, ScenarioManifest, MANIFEST, SCENARIO_SCHEMA,
};
use crate::io;
use crate::kinematics::{fetch_like, forward_kinematics, lift_pitch_roll, KinematicChain};
use crate::traj_align::{apply_delta, blend_dual, object_delta, refine_indices, ObjectDelta, ObjectPoses, RefineParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    /// Eight-joint torso-and-arm manipulator.
    Fetch,
    /// Three-joint lift, pitch, roll arm.
    Lift3,
}

impl ChainKind {
    pub fn chain(&self) -> KinematicChain {
        match self {
            ChainKind::Fetch => fetch_like(),
            ChainKind::Lift3 => lift_pitch_roll(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub chain: ChainKind,
    /// Trajectory length; drawn from 70..=120 when absent.
    pub frames: Option<usize>,
    /// Also write hand-observation and hand-grasp fixtures (single-object
    /// scenarios only).
    pub with_hand: bool,
    /// Depth error of the hand fixtures, meters.
    pub hand_depth_bias: f64,
    pub dt: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            kind: ScenarioKind::Single,
            chain: ChainKind::Fetch,
            frames: None,
            with_hand: false,
            hand_depth_bias: 0.1,
            dt: 0.1,
        }
    }
}

impl ScenarioSpec {
    fn validate(&self) -> Result<()> {
        if let Some(n) = self.frames {
            if n < 2 {
                return Err(Error::invalid("a scenario needs at least two frames"));
            }
        }
        if self.with_hand && self.kind != ScenarioKind::Single {
            return Err(Error::invalid("hand fixtures are only generated for single-object scenarios"));
        }
        if !(self.dt > 0.0) || !self.hand_depth_bias.is_finite() {
            return Err(Error::invalid("dt must be positive and the depth bias finite"));
        }
        Ok(())
    }
}

/// Camera mounted above the base looking forward and down at the workspace.
pub fn default_camera_pose() -> Pose {
    let z = Vec3::new(1.0, 0.0, -0.7).normalize();
    let x = Vec3::new(0.0, -1.0, 0.0);
    let y = z.cross(&x);
    let r = Rotation::from_matrix(&Matrix3::from_columns(&[x, y, z])).expect("orthonormal by construction");
    Pose::new(r, Vec3::new(0.0, 0.0, 1.5))
}

/// Depth observation of a flat, camera-facing 5×5 hand at `t_gt` whose
/// initial estimate is `depth_bias` too deep, seen through a virtual camera
/// whose focal length makes that estimate project like the true hand.
pub fn planar_hand_observation(t_gt: Vec3, depth_bias: f64, focal: f64) -> Result<HandObservation> {
    let t_init = t_gt + Vec3::new(0.0, 0.0, depth_bias);
    if !(t_gt.z > 0.0 && t_init.z > 0.0) {
        return Err(Error::invalid("hand must be in front of the camera"));
    }
    let vertices: Vec<Vec3> = (0..25)
        .map(|k| Vec3::new(0.02 * (k / 5) as f64 - 0.04, 0.02 * (k % 5) as f64 - 0.04, 0.0))
        .collect();
    let fv = focal * t_init.z / t_gt.z;
    Ok(HandObservation {
        hand_cloud: vertices.iter().map(|v| v + t_gt).collect(),
        vertices,
        t_init,
        k_virtual: CameraIntrinsics::new(fv, fv, 320.0, 240.0)?,
        k_real: CameraIntrinsics::new(focal, focal, 320.0, 240.0)?,
        camera_origin: Vec3::zeros(),
    })
}

/// Demonstration pose whose dual-object blend with weight `w` on the first
/// delta reproduces `exe`.
fn unblend(exe: &Pose, d1: &Pose, d2: &Pose, w: f64) -> Result<Pose> {
    let s = interp_pose(d1, d2, w)?.rotation;
    let rotation = s.inverse().compose(&exe.rotation);
    let m = d1.rotation.matrix() * w + d2.rotation.matrix() * (1.0 - w);
    let rhs = exe.translation - d1.translation * w - d2.translation * (1.0 - w);
    let t = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::invalid("object motions too different to invert the blend"))?;
    Ok(Pose::new(rotation, t))
}

struct Motion {
    base: BaseConfig,
    path: Vec<Vec<f64>>,
}

fn joint_motion(chain_kind: ChainKind, chain: &KinematicChain, frames: usize, dt: f64, rng: &mut ChaCha8Rng) -> Motion {
    let (base, nominal, spread, travel): (BaseConfig, Vec<f64>, Vec<f64>, Vec<f64>) = match chain_kind {
        ChainKind::Fetch => (
            BaseConfig::new(rng.gen_range(0.5..0.8), rng.gen_range(-0.3..0.3), rng.gen_range(-0.4..0.4)),
            vec![0.2, 0.3, 0.4, -0.5, 1.2, 0.2, 0.6, 0.0],
            vec![0.1, 0.3, 0.2, 0.4, 0.3, 0.4, 0.3, 0.5],
            vec![0.1, 0.5, 0.4, 0.6, 0.5, 0.6, 0.5, 0.8],
        ),
        ChainKind::Lift3 => (
            BaseConfig::new(rng.gen_range(0.2..0.6), rng.gen_range(-0.3..0.3), rng.gen_range(-0.5..0.5)),
            vec![0.3, 0.0, 0.0],
            vec![0.15, 0.4, 1.0],
            vec![0.2, 0.6, 1.2],
        ),
    };
    let duration = (frames - 1) as f64 * dt;
    let mut start = Vec::with_capacity(chain.dof());
    let mut end = Vec::with_capacity(chain.dof());
    for (j, spec) in chain.joints.iter().enumerate() {
        let a = (nominal[j] + rng.gen_range(-spread[j]..=spread[j])).clamp(spec.lower, spec.upper);
        // Peak speed of the profile below is 1.25 × mean speed.
        let max_step = 0.8 * spec.vel_limit * duration / 1.25;
        let step = rng.gen_range(-travel[j]..=travel[j]).clamp(-max_step, max_step);
        start.push(a);
        end.push((a + step).clamp(spec.lower, spec.upper));
    }
    let path = (0..frames)
        .map(|i| {
            let s = i as f64 / (frames - 1) as f64;
            let u = 0.5 * s + 0.5 * s * s * (3.0 - 2.0 * s);
            start.iter().zip(&end).map(|(a, b)| a + u * (b - a)).collect()
        })
        .collect();
    Motion { base, path }
}

/// Rotation of an object about the vertical through `centre` plus a shift on
/// the table, in the base frame.
fn object_motion(centre: Vec3, rng: &mut ChaCha8Rng) -> Pose {
    let psi = rng.gen_range(-0.5..0.5);
    let shift = Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), 0.0);
    Pose::from_translation(centre + shift)
        .compose(&Pose::from_rotation(rot_z(psi)))
        .compose(&Pose::from_translation(-centre))
}

fn table_cloud(base: &BaseConfig, z: f64) -> Vec<Vec3> {
    let mut pts = Vec::new();
    for i in 0..35 {
        for j in 0..49 {
            pts.push(Vec3::new(base.x + 0.45 + 0.025 * i as f64, base.y - 0.6 + 0.025 * j as f64, z));
        }
    }
    pts
}

/// Everything [`generate_scenario`] writes, in memory.
#[derive(Clone, Debug)]
pub struct GeneratedScenario {
    pub manifest: ScenarioManifest,
    pub chain: KinematicChain,
    pub demo: Trajectory,
    pub objects: Vec<ObjectPoses>,
    pub env_cloud: PointCloud,
    pub ground_truth: Trajectory,
    pub joint_path: Vec<Vec<f64>>,
    pub hand: Option<(HandObservation, Vec<GraspConfig>)>,
}

pub fn build_scenario(name: &str, seed: u64, spec: &ScenarioSpec) -> Result<GeneratedScenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = spec.frames.unwrap_or_else(|| rng.gen_range(70..=120));
    let chain = spec.chain.chain();
    let motion = joint_motion(spec.chain, &chain, frames, spec.dt, &mut rng);
    let b_gt = base_transform(&motion.base);
    let t_bc = default_camera_pose();
    let cam_from_base = t_bc.inverse();

    let exe_base: Vec<Pose> = motion
        .path
        .iter()
        .map(|q| Ok(b_gt.compose(&forward_kinematics(&chain, q)?)))
        .collect::<Result<_>>()?;
    let exe_cam: Vec<Pose> = exe_base.iter().map(|p| cam_from_base.compose(p)).collect();
    let timestamps: Vec<f64> = (0..frames).map(|i| i as f64 * spec.dt).collect();

    let to_cam = |p: &Pose| cam_from_base.compose(p).compose(&t_bc);
    let mut objects = Vec::new();
    let mut deltas = Vec::new();
    let grasp_centre = exe_base[0].translation;
    let last_centre = exe_base[frames - 1].translation;
    for (k, centre) in [grasp_centre, last_centre].into_iter().take(spec.kind.objects()).enumerate() {
        let delta_cam = to_cam(&object_motion(centre, &mut rng));
        let t_exe = cam_from_base.compose(&Pose::new(rot_z(rng.gen_range(-1.0..1.0)), centre));
        let t_demo = delta_cam.inverse().compose(&t_exe);
        let entry = ObjectPoses {
            object: format!("o{}", k + 1),
            t_demo,
            t_exe,
        };
        deltas.push(object_delta(&entry.t_demo, &entry.t_exe));
        objects.push(entry);
    }

    let refine = RefineParams::default();
    let (demo, ground_truth) = match spec.kind {
        ScenarioKind::Single => {
            let inv = deltas[0].inverse();
            let demo_poses = exe_cam.iter().map(|p| inv.delta.compose(p)).collect();
            let demo = Trajectory::with_timestamps(CAMERA_FRAME, demo_poses, Some(timestamps))?;
            let gt = apply_delta(&demo, &deltas[0]);
            (demo, gt)
        }
        ScenarioKind::Dual => dual_demo(&exe_cam, &deltas[0], &deltas[1], &timestamps, &refine)?,
    };

    let min_z = exe_base.iter().map(|p| p.translation.z).fold(f64::INFINITY, f64::min);
    let env_cloud = PointCloud {
        frame: CAMERA_FRAME.into(),
        points: table_cloud(&motion.base, min_z - 0.15)
            .iter()
            .map(|p| cam_from_base.transform_point(p))
            .collect(),
    };

    let hand = if spec.with_hand {
        let bias = Vec3::new(0.0, 0.0, spec.hand_depth_bias);
        let to_hand = hand_to_gripper().inverse();
        let hand_poses: Vec<Pose> = demo.poses().iter().map(|p| p.compose(&to_hand)).collect();
        let observation = planar_hand_observation(hand_poses[0].translation, spec.hand_depth_bias, 600.0)?;
        let grasps = hand_poses
            .iter()
            .map(|p| GraspConfig::rigid(Pose::new(p.rotation, p.translation + bias)))
            .collect();
        Some((observation, grasps))
    } else {
        None
    };

    let manifest = ScenarioManifest {
        schema: SCENARIO_SCHEMA.into(),
        name: name.into(),
        kind: spec.kind,
        chain: "chain.json".into(),
        demo: "demo_traj.json".into(),
        deltas: "deltas.json".into(),
        env_cloud: "env_cloud.json".into(),
        t_bc,
        hand: hand.as_ref().map(|_| HandFixtures {
            observation: "hand_frames/observation.json".into(),
            hand_model: "hand_frames/hand_model.json".into(),
            grasps: "hand_frames/hand_grasps.json".into(),
            gripper_model: "gripper.json".into(),
        }),
        ground_truth: Some(GroundTruth {
            exe_traj: "ground_truth/exe_traj.json".into(),
            base_offset: motion.base,
        }),
    };
    Ok(GeneratedScenario {
        manifest,
        chain,
        demo,
        objects,
        env_cloud,
        ground_truth,
        joint_path: motion.path,
        hand,
    })
}

/// Demonstration and ground truth for a two-object scene. The blend weight
/// of each frame depends on which frames survive clean-up, which depends on
/// the demonstration, so the two are iterated to agreement.
fn dual_demo(
    exe: &[Pose],
    d1: &ObjectDelta,
    d2: &ObjectDelta,
    timestamps: &[f64],
    refine: &RefineParams,
) -> Result<(Trajectory, Trajectory)> {
    let n = exe.len();
    let mut kept: Vec<usize> = (0..n).collect();
    let mut demo = None;
    for _ in 0..8 {
        let sigma = Sigma::QuarterLength.params(kept.len())?.sigma();
        let mut weights = vec![1.0; n];
        let mut pos = 0usize;
        for (i, w) in weights.iter_mut().enumerate() {
            if pos + 1 < kept.len() && kept[pos + 1] <= i {
                pos += 1;
            }
            let k = pos as f64;
            *w = (-(k * k) / (2.0 * sigma * sigma)).exp();
        }
        let poses = exe
            .iter()
            .zip(&weights)
            .map(|(p, w)| unblend(p, &d1.delta, &d2.delta, *w))
            .collect::<Result<Vec<_>>>()?;
        let t = Trajectory::with_timestamps(CAMERA_FRAME, poses, Some(timestamps.to_vec()))?;
        let next = refine_indices(&t, refine);
        demo = Some(t);
        if next == kept {
            break;
        }
        kept = next;
    }
    let demo = demo.expect("at least one pass");
    let kept = refine_indices(&demo, refine);
    let refined = crate::traj_align::refine(&demo, refine);
    let params = Sigma::QuarterLength.params(refined.len())?;
    let blended = blend_dual(&apply_delta(&refined, d1), &apply_delta(&refined, d2), &params)?;
    let mut gt = exe.to_vec();
    for (pos, &i) in kept.iter().enumerate() {
        gt[i] = blended.poses()[pos];
    }
    Ok((demo, Trajectory::new(CAMERA_FRAME, gt)?))
}

/// Writes a scenario directory. The same seed and spec always produce
/// byte-identical files.
pub fn generate_scenario(dir: &Path, name: &str, seed: u64, spec: &ScenarioSpec) -> Result<GeneratedScenario> {
    let g = build_scenario(name, seed, spec)?;
    io::write_json(&dir.join(MANIFEST), &g.manifest)?;
    io::write_json(&dir.join(&g.manifest.chain), &g.chain)?;
    io::write_json(&dir.join(&g.manifest.demo), &g.demo)?;
    io::write_json(&dir.join(&g.manifest.deltas), &g.objects)?;
    io::write_json(&dir.join(&g.manifest.env_cloud), &g.env_cloud)?;
    if let (Some(files), Some((obs, grasps))) = (&g.manifest.hand, &g.hand) {
        io::write_json(&dir.join(&files.observation), obs)?;
        io::write_json(&dir.join(&files.hand_model), &synthetic_hand())?;
        io::write_json(&dir.join(&files.grasps), grasps)?;
        io::write_json(&dir.join(&files.gripper_model), &parallel_jaw_gripper())?;
    }
    if let Some(gt) = &g.manifest.ground_truth {
        io::write_json(&dir.join(&gt.exe_traj), &g.ground_truth)?;
    }
    Ok(g)
}
