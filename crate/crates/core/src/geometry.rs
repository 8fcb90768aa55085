//! Rigid-body algebra shared by every stage: rotations stored as unit
//! quaternions, SE(3) poses, pose trajectories, interpolation and the
//! geodesic rotation metric.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Quaternions read from files are accepted as-is when their norm is this
/// close to one, so that reloading a written file is bit-identical.
const UNIT_NORM_EXACT: f64 = 1e-9;
/// Larger deviations (hand-written fixtures) are renormalized up to this.
const UNIT_NORM_LOOSE: f64 = 1e-3;

/// A 3-D rotation, stored as a unit quaternion.
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Builds a rotation from `[w, x, y, z]`, renormalizing small drift.
    pub fn from_wxyz(q: [f64; 4]) -> Result<Self> {
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("quaternion"));
        }
        let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = raw.norm();
        if (norm - 1.0).abs() <= UNIT_NORM_EXACT {
            Ok(Rotation(UnitQuaternion::new_unchecked(raw)))
        } else if (norm - 1.0).abs() <= UNIT_NORM_LOOSE {
            Ok(Rotation(UnitQuaternion::new_normalize(raw)))
        } else {
            Err(Error::validation(format!(
                "quaternion norm {norm} is not close to 1"
            )))
        }
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Rotation(q)
    }

    /// Builds a rotation from a 3x3 matrix after checking orthonormality.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if !(err <= 1e-9) || (m.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::validation("matrix is not a proper rotation"));
        }
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
        Ok(Rotation(UnitQuaternion::from_rotation_matrix(&rot)))
    }

    pub fn from_axis_angle(axis: &Unit<Vec3>, angle: f64) -> Self {
        Rotation(UnitQuaternion::from_axis_angle(axis, angle))
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.inverse())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    /// Re-projects the quaternion onto the unit sphere.
    pub fn renormalized(&self) -> Self {
        Rotation(UnitQuaternion::new_normalize(*self.0.quaternion()))
    }

    /// Yaw, pitch and roll of the `Rz * Ry * Rx` factorization.
    pub fn euler_zyx(&self) -> (f64, f64, f64) {
        let (roll, pitch, yaw) = self.0.euler_angles();
        (yaw, pitch, roll)
    }
}

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [w, x, y, z] = self.wxyz();
        write!(f, "Rotation(w={w:.6}, x={x:.6}, y={y:.6}, z={z:.6})")
    }
}

/// Right-handed rotation by `theta` radians about +z.
pub fn rot_z(theta: f64) -> Rotation {
    Rotation(UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta))
}

/// Angle in `[0, pi]` of the relative rotation `r1^T r2`.
///
/// Evaluated as `2 atan2(|v|, |w|)` of the relative quaternion, which is the
/// same quantity as `arccos((tr(r1 r2^T) - 1) / 2)` but does not lose
/// precision near zero: identical rotations give exactly zero.
pub fn geodesic_angle(r1: &Rotation, r2: &Rotation) -> f64 {
    // conj(a) * b written so that each term cancels exactly when a == b.
    let (a, b) = (r1.0.quaternion(), r2.0.quaternion());
    let (va, vb) = (a.imag(), b.imag());
    let v = vb * a.w - va * b.w - va.cross(&vb);
    let w = a.w * b.w + va.dot(&vb);
    let angle = 2.0 * v.norm().atan2(w.abs());
    angle.clamp(0.0, std::f64::consts::PI)
}

/// A rigid transform: `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRecord", into = "PoseRecord")]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Pose::new(r, Vec3::zeros())
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r_inv = self.rotation.inverse();
        Pose {
            translation: -r_inv.rotate(&self.translation),
            rotation: r_inv,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Pose> {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t: Vec3 = m.fixed_view::<3, 1>(0, 3).into_owned();
        Ok(Pose::new(Rotation::from_matrix(&r)?, t))
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.wxyz().iter().all(|v| v.is_finite())
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

/// Wire form of a pose: `{"q": [w, x, y, z], "t": [x, y, z]}`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PoseRecord {
    pub q: [f64; 4],
    pub t: [f64; 3],
}

impl TryFrom<PoseRecord> for Pose {
    type Error = Error;

    fn try_from(rec: PoseRecord) -> Result<Pose> {
        if rec.t.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("pose translation"));
        }
        Ok(Pose::new(
            Rotation::from_wxyz(rec.q)?,
            Vec3::new(rec.t[0], rec.t[1], rec.t[2]),
        ))
    }
}

impl From<Pose> for PoseRecord {
    fn from(p: Pose) -> Self {
        PoseRecord {
            q: p.rotation.wxyz(),
            t: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn inverse(a: &Pose) -> Pose {
    a.inverse()
}

pub fn transform_points(pose: &Pose, pts: &[Vec3]) -> Vec<Vec3> {
    let m = pose.rotation.matrix();
    pts.iter().map(|p| m * p + pose.translation).collect()
}

/// Shortest-arc SLERP that returns `from` at `s = 0` and `to` at `s = 1`.
fn slerp(from: &UnitQuaternion<f64>, to: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    let a = from.quaternion();
    let mut b = *to.quaternion();
    let mut dot = a.dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let blended = if dot > 1.0 - 1e-12 {
        a * (1.0 - s) + b * s
    } else {
        let theta = dot.min(1.0).acos();
        let sin_theta = theta.sin();
        a * (((1.0 - s) * theta).sin() / sin_theta) + b * ((s * theta).sin() / sin_theta)
    };
    UnitQuaternion::new_normalize(blended)
}

/// Blends two poses with weight `w` on `a`: the rotation is SLERP from `b`
/// towards `a`, the translation `w t_a + (1 - w) t_b`.
pub fn interp_pose(a: &Pose, b: &Pose, w: f64) -> Result<Pose> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::invalid(format!(
            "interpolation weight {w} outside [0, 1]"
        )));
    }
    if w == 1.0 {
        return Ok(*a);
    }
    if w == 0.0 {
        return Ok(*b);
    }
    let q = slerp(b.rotation.quaternion(), a.rotation.quaternion(), w);
    Ok(Pose::new(
        Rotation(q),
        a.translation * w + b.translation * (1.0 - w),
    ))
}

pub const CAMERA_FRAME: &str = "camera";
pub const BASE_FRAME: &str = "base";

/// An ordered sequence of poses expressed in one named frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryRecord", into = "TrajectoryRecord")]
pub struct Trajectory {
    frame_id: String,
    poses: Vec<Pose>,
    timestamps: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(frame_id: impl Into<String>, poses: Vec<Pose>) -> Result<Self> {
        Self::with_timestamps(frame_id, poses, None)
    }

    pub fn with_timestamps(
        frame_id: impl Into<String>,
        poses: Vec<Pose>,
        timestamps: Option<Vec<f64>>,
    ) -> Result<Self> {
        let frame_id = frame_id.into();
        if frame_id.is_empty() {
            return Err(Error::validation("trajectory frame id is empty"));
        }
        if poses.is_empty() {
            return Err(Error::validation("trajectory has no poses"));
        }
        if let Some(i) = poses.iter().position(|p| !p.is_finite()) {
            return Err(Error::non_finite(format!("trajectory pose {i}")));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != poses.len() {
                return Err(Error::validation(format!(
                    "{} timestamps for {} poses",
                    ts.len(),
                    poses.len()
                )));
            }
            if ts.iter().any(|t| !t.is_finite()) || ts.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::validation(
                    "timestamps must be finite and strictly increasing",
                ));
            }
        }
        Ok(Trajectory {
            frame_id,
            poses,
            timestamps,
        })
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn first(&self) -> &Pose {
        &self.poses[0]
    }

    pub fn last(&self) -> &Pose {
        &self.poses[self.poses.len() - 1]
    }

    /// Same timestamps, new frame and poses (lengths must agree).
    pub(crate) fn map_poses(&self, frame_id: &str, f: impl Fn(&Pose) -> Pose) -> Trajectory {
        Trajectory {
            frame_id: frame_id.to_string(),
            poses: self.poses.iter().map(f).collect(),
            timestamps: self.timestamps.clone(),
        }
    }

    /// Keeps the poses at `indices` (which must be increasing and in range).
    pub(crate) fn select(&self, indices: &[usize]) -> Trajectory {
        Trajectory {
            frame_id: self.frame_id.clone(),
            poses: indices.iter().map(|&i| self.poses[i]).collect(),
            timestamps: self
                .timestamps
                .as_ref()
                .map(|ts| indices.iter().map(|&i| ts[i]).collect()),
        }
    }

    /// Mean spacing of the timestamps, if there are at least two.
    pub fn mean_time_step(&self) -> Option<f64> {
        let ts = self.timestamps.as_ref()?;
        if ts.len() < 2 {
            return None;
        }
        Some((ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub frame: String,
    pub poses: Vec<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Vec<f64>>,
}

impl TryFrom<TrajectoryRecord> for Trajectory {
    type Error = Error;

    fn try_from(rec: TrajectoryRecord) -> Result<Trajectory> {
        Trajectory::with_timestamps(rec.frame, rec.poses, rec.timestamps)
    }
}

impl From<Trajectory> for TrajectoryRecord {
    fn from(t: Trajectory) -> Self {
        TrajectoryRecord {
            frame: t.frame_id,
            poses: t.poses,
            timestamps: t.timestamps,
        }
    }
}

/// Serde helpers for point lists written as `[[x, y, z], ...]`.
pub mod points_serde {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(pts: &[Vec3], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<[f64; 3]> = pts.iter().map(|p| [p.x, p.y, p.z]).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec3>, D::Error> {
        let raw = Vec::<[f64; 3]>::deserialize(d)?;
        if raw.iter().flatten().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("non-finite point coordinate"));
        }
        Ok(raw.into_iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
    }
}

/// Serde helpers for a single `[x, y, z]`.
pub mod vec3_serde {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(p: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [p.x, p.y, p.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let raw = <[f64; 3]>::deserialize(d)?;
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("non-finite coordinate"));
        }
        Ok(Vec3::new(raw[0], raw[1], raw[2]))
    }
}
