//! Moving a demonstrated gripper trajectory into the execution scene:
//! object pose deltas, dual-object blending, the camera-to-base change of
//! frame and clean-up of near-duplicate and outlier poses.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{interp_pose, Pose, Trajectory, BASE_FRAME, CAMERA_FRAME};
use crate::io;

/// Rigid motion of an object from its demonstration pose to its execution
/// pose, applied by left-multiplication.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectDelta {
    pub delta: Pose,
}

impl ObjectDelta {
    pub fn identity() -> Self {
        ObjectDelta {
            delta: Pose::identity(),
        }
    }

    pub fn inverse(&self) -> Self {
        ObjectDelta {
            delta: self.delta.inverse(),
        }
    }
}

/// `t_exe ∘ t_demo⁻¹`. Identical inputs give the exact identity.
pub fn object_delta(t_demo: &Pose, t_exe: &Pose) -> ObjectDelta {
    if t_demo == t_exe {
        return ObjectDelta::identity();
    }
    ObjectDelta {
        delta: t_exe.compose(&t_demo.inverse()),
    }
}

/// One entry of a deltas file: an object's pose in the demonstration and in
/// the execution scene, both in the camera frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectPoses {
    pub object: String,
    pub t_demo: Pose,
    pub t_exe: Pose,
}

impl ObjectPoses {
    pub fn delta(&self) -> ObjectDelta {
        object_delta(&self.t_demo, &self.t_exe)
    }

    /// Reads either a single object entry or an array of them.
    pub fn load_all(path: &Path) -> Result<Vec<ObjectPoses>> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            One(ObjectPoses),
            Many(Vec<ObjectPoses>),
        }
        Ok(match io::read_json::<OneOrMany>(path)? {
            OneOrMany::One(o) => vec![o],
            OneOrMany::Many(v) => v,
        })
    }
}

/// Left-multiplies every pose by the delta; frame and timestamps unchanged.
pub fn apply_delta(traj: &Trajectory, d: &ObjectDelta) -> Trajectory {
    if d.delta == Pose::identity() {
        return traj.clone();
    }
    traj.map_poses(traj.frame_id(), |p| d.delta.compose(p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlendParams {
    sigma: f64,
}

impl BlendParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("blend sigma must be positive"));
        }
        Ok(BlendParams { sigma })
    }

    /// `σ = T / 4`.
    pub fn quarter_length(len: usize) -> Result<Self> {
        BlendParams::new(len as f64 / 4.0)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Weights on the first trajectory, `α(i) = exp(−(i−1)²/(2σ²))` for frames
/// `i = 1..len`.
pub fn blend_weights(len: usize, p: &BlendParams) -> Vec<f64> {
    (0..len)
        .map(|k| {
            let k = k as f64;
            (-(k * k) / (2.0 * p.sigma * p.sigma)).exp()
        })
        .collect()
}

/// Per-frame interpolation from the trajectory aligned to the manipulated
/// object (`traj1`, full weight at the first frame) towards the one aligned
/// to the secondary object (`traj2`).
pub fn blend_dual(traj1: &Trajectory, traj2: &Trajectory, p: &BlendParams) -> Result<Trajectory> {
    crate::error::check_len("blended trajectory", traj1.len(), traj2.len())?;
    if traj1.frame_id() != traj2.frame_id() {
        return Err(Error::validation(format!(
            "cannot blend trajectories in frames `{}` and `{}`",
            traj1.frame_id(),
            traj2.frame_id()
        )));
    }
    let weights = blend_weights(traj1.len(), p);
    let poses = traj1
        .poses()
        .iter()
        .zip(traj2.poses())
        .zip(&weights)
        .map(|((a, b), &w)| if a == b { Ok(*a) } else { interp_pose(a, b, w) })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::with_timestamps(traj1.frame_id(), poses, traj1.timestamps().map(<[f64]>::to_vec))
}

/// Re-expresses a camera-frame trajectory in the robot base frame, given
/// the camera pose in the base frame.
pub fn to_base(traj: &Trajectory, t_bc: &Pose) -> Result<Trajectory> {
    if traj.frame_id() != CAMERA_FRAME {
        return Err(Error::validation(format!(
            "expected a `{CAMERA_FRAME}` trajectory, got `{}`",
            traj.frame_id()
        )));
    }
    Ok(traj.map_poses(BASE_FRAME, |p| t_bc.compose(p)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineParams {
    /// Poses closer than this (meters) to the previous kept pose are dropped.
    pub min_gap: f64,
    /// Poses farther than this multiple of the median step from both
    /// neighbours are dropped.
    pub outlier_factor: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            min_gap: 0.005,
            outlier_factor: 3.0,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_gap >= 0.0) || !(self.outlier_factor > 1.0) {
            return Err(Error::invalid("refine needs min_gap >= 0 and outlier_factor > 1"));
        }
        Ok(())
    }
}

/// Indices kept by [`refine`], increasing, always containing the endpoints.
pub fn refine_indices(traj: &Trajectory, p: &RefineParams) -> Vec<usize> {
    let poses = traj.poses();
    let n = poses.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let gap = |a: usize, b: usize| (poses[a].translation - poses[b].translation).norm();

    let mut kept = vec![0];
    for i in 1..n - 1 {
        if gap(i, *kept.last().expect("non-empty")) >= p.min_gap {
            kept.push(i);
        }
    }
    // The last pose always stays; an interior pose too close to it goes.
    if kept.len() > 1 && gap(n - 1, *kept.last().expect("non-empty")) < p.min_gap {
        kept.pop();
    }
    kept.push(n - 1);

    if kept.len() < 3 {
        return kept;
    }
    let mut steps: Vec<f64> = kept.windows(2).map(|w| gap(w[0], w[1])).collect();
    steps.sort_by(f64::total_cmp);
    let threshold = p.outlier_factor * steps[steps.len() / 2];
    let mut out = Vec::with_capacity(kept.len());
    out.push(kept[0]);
    for k in 1..kept.len() - 1 {
        let outlier = gap(kept[k], kept[k - 1]) > threshold && gap(kept[k], kept[k + 1]) > threshold;
        if !outlier {
            out.push(kept[k]);
        }
    }
    out.push(kept[kept.len() - 1]);
    out
}

/// Drops near-duplicate and isolated outlier poses; order is preserved.
pub fn refine(traj: &Trajectory, p: &RefineParams) -> Trajectory {
    traj.select(&refine_indices(traj, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_z, Rotation, Vec3};

    fn line(n: usize, step: f64) -> Trajectory {
        let poses = (0..n)
            .map(|i| Pose::from_translation(Vec3::new(step * i as f64, 0.0, 0.0)))
            .collect();
        Trajectory::new(CAMERA_FRAME, poses).unwrap()
    }

    #[test]
    fn delta_examples() {
        let p = Pose::new(rot_z(0.4), Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(object_delta(&p, &p), ObjectDelta::identity());
        let d = Vec3::new(0.1, -0.2, 0.3);
        let moved = Pose::new(p.rotation, p.translation + d);
        let delta = object_delta(&p, &moved).delta;
        assert!((delta.translation - d).norm() < 1e-12);
        assert!(crate::geometry::geodesic_angle(&delta.rotation, &Rotation::identity()) < 1e-12);
    }

    #[test]
    fn identity_delta_is_exact() {
        let t = line(5, 0.01);
        assert_eq!(apply_delta(&t, &ObjectDelta::identity()), t);
    }

    #[test]
    fn blend_endpoints_and_weights() {
        let a = line(9, 0.01);
        let b = apply_delta(
            &a,
            &ObjectDelta {
                delta: Pose::new(rot_z(0.5), Vec3::new(0.0, 0.3, 0.0)),
            },
        );
        let p = BlendParams::quarter_length(9).unwrap();
        let w = blend_weights(9, &p);
        assert_eq!(w[0], 1.0);
        assert!((w[8] - (-64.0f64 / (2.0 * 2.25 * 2.25)).exp()).abs() < 1e-18);
        let out = blend_dual(&a, &b, &p).unwrap();
        assert_eq!(out.first(), a.first());
        assert_eq!(blend_dual(&a, &a, &p).unwrap(), a);
        assert!(blend_dual(&a, &line(8, 0.01), &p).is_err());
        assert!(BlendParams::new(0.0).is_err());
    }

    #[test]
    fn to_base_checks_frame() {
        let t = line(3, 0.1);
        let shift = Vec3::new(0.0, 0.0, 1.0);
        let b = to_base(&t, &Pose::from_translation(shift)).unwrap();
        assert_eq!(b.frame_id(), BASE_FRAME);
        for (p, q) in b.poses().iter().zip(t.poses()) {
            assert_eq!(p.translation, q.translation + shift);
        }
        assert!(to_base(&b, &Pose::identity()).is_err());
    }

    #[test]
    fn refine_drops_duplicates_and_spike() {
        let t = line(6, 0.01);
        let mut poses = t.poses().to_vec();
        poses.insert(3, poses[2]);
        poses.push(*poses.last().unwrap());
        let dup = Trajectory::new(CAMERA_FRAME, poses).unwrap();
        assert_eq!(refine(&dup, &RefineParams::default()).poses(), t.poses());

        let mut poses = line(20, 0.01).poses().to_vec();
        poses[10].translation.y += 1.0;
        let spiky = Trajectory::new(CAMERA_FRAME, poses).unwrap();
        let kept = refine_indices(&spiky, &RefineParams::default());
        assert_eq!(kept, (0..20).filter(|&i| i != 10).collect::<Vec<_>>());

        let single = line(1, 0.0);
        assert_eq!(refine(&single, &RefineParams::default()), single);
    }
}
