//! Hand-to-gripper grasp transfer through a shared spherical coordinate
//! labelling of grasp-interior surface points.
//!
//! Both models label their points with normalized spherical coordinates
//! `(λ, φ)`. Mutually nearest labels (great-circle distance) give point
//! correspondences once per model pair; the target pose (and finger joints,
//! if any) is then found by Adam on the mean correspondence distance plus a
//! joint-limit penalty.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::{points_serde, vec3_serde, Pose, Rotation, Trajectory, Vec3, CAMERA_FRAME};
use crate::io;
use crate::optim::{adam_minimize_projected, AdamConfig};

/// Normalized spherical coordinates, both components in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct UgcsCoord {
    lambda: f64,
    phi: f64,
}

impl UgcsCoord {
    pub fn new(lambda: f64, phi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) || !(0.0..=1.0).contains(&phi) {
            return Err(Error::validation(format!("coordinate ({lambda}, {phi}) outside [0, 1]")));
        }
        Ok(UgcsCoord { lambda, phi })
    }

    /// Label of the direction `d` as seen from the grasp centre.
    pub fn from_direction(d: &Vec3) -> Result<Self> {
        let n = d.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid("direction must be non-zero and finite"));
        }
        let lon = d.y.atan2(d.x).rem_euclid(2.0 * PI);
        let lat = (d.z / n).clamp(-1.0, 1.0).asin();
        UgcsCoord::new((lon / (2.0 * PI)).min(1.0), (lat / PI + 0.5).clamp(0.0, 1.0))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

impl TryFrom<[f64; 2]> for UgcsCoord {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        UgcsCoord::new(v[0], v[1])
    }
}

impl From<UgcsCoord> for [f64; 2] {
    fn from(c: UgcsCoord) -> Self {
        [c.lambda, c.phi]
    }
}

/// Great-circle distance with longitude `2πλ` and latitude `π(φ − ½)`.
pub fn haversine(a: &UgcsCoord, b: &UgcsCoord) -> f64 {
    let (lon1, lat1) = (2.0 * PI * a.lambda, PI * (a.phi - 0.5));
    let (lon2, lat2) = (2.0 * PI * b.lambda, PI * (b.phi - 0.5));
    let s_lat = ((lat2 - lat1) / 2.0).sin();
    let s_lon = ((lon2 - lon1) / 2.0).sin();
    let h = (s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon).clamp(0.0, 1.0);
    2.0 * h.sqrt().asin()
}

/// A finger hinge: points assigned to it rotate about `axis` through `pivot`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hinge {
    #[serde(with = "vec3_serde")]
    pub axis: Vec3,
    #[serde(with = "vec3_serde")]
    pub pivot: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GripperRecord", into = "GripperRecord")]
pub struct GripperModel {
    pub name: String,
    points: Vec<Vec3>,
    coords: Vec<UgcsCoord>,
    hinges: Vec<Hinge>,
    limits: Vec<[f64; 2]>,
    point_hinge: Vec<Option<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GripperRecord {
    pub name: String,
    #[serde(with = "points_serde")]
    pub points: Vec<Vec3>,
    pub ugcs: Vec<UgcsCoord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub limits: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub joints: Vec<Hinge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub point_joint: Vec<Option<usize>>,
}

impl TryFrom<GripperRecord> for GripperModel {
    type Error = Error;
    fn try_from(r: GripperRecord) -> Result<Self> {
        let point_hinge = if r.point_joint.is_empty() {
            vec![None; r.points.len()]
        } else {
            r.point_joint
        };
        GripperModel::articulated(r.name, r.points, r.ugcs, r.joints, r.limits, point_hinge)
    }
}

impl From<GripperModel> for GripperRecord {
    fn from(m: GripperModel) -> Self {
        let point_joint = if m.point_hinge.iter().all(Option::is_none) {
            Vec::new()
        } else {
            m.point_hinge
        };
        GripperRecord {
            name: m.name,
            points: m.points,
            ugcs: m.coords,
            limits: m.limits,
            joints: m.hinges,
            point_joint,
        }
    }
}

impl GripperModel {
    /// A rigid model (no finger joints).
    pub fn rigid(name: impl Into<String>, points: Vec<Vec3>, coords: Vec<UgcsCoord>) -> Result<Self> {
        let n = points.len();
        GripperModel::articulated(name, points, coords, Vec::new(), Vec::new(), vec![None; n])
    }

    pub fn articulated(
        name: impl Into<String>,
        points: Vec<Vec3>,
        coords: Vec<UgcsCoord>,
        hinges: Vec<Hinge>,
        limits: Vec<[f64; 2]>,
        point_hinge: Vec<Option<usize>>,
    ) -> Result<Self> {
        check_len("gripper labels", points.len(), coords.len())?;
        check_len("gripper joint limits", hinges.len(), limits.len())?;
        check_len("gripper point joints", points.len(), point_hinge.len())?;
        if points.len() < 3 {
            return Err(Error::validation("gripper model needs at least 3 points"));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::non_finite("gripper point"));
        }
        for h in &hinges {
            if (h.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::validation("hinge axis is not unit length"));
            }
        }
        if limits.iter().any(|[lo, hi]| !(lo <= hi)) {
            return Err(Error::validation("joint lower limit exceeds upper"));
        }
        if point_hinge.iter().flatten().any(|&j| j >= hinges.len()) {
            return Err(Error::validation("point references a missing joint"));
        }
        Ok(GripperModel {
            name: name.into(),
            points,
            coords,
            hinges,
            limits,
            point_hinge,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn coords(&self) -> &[UgcsCoord] {
        &self.coords
    }

    pub fn dof(&self) -> usize {
        self.hinges.len()
    }

    pub fn limits(&self) -> &[[f64; 2]] {
        &self.limits
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point `i` in the model frame with finger joints at `joints`.
    fn local_point(&self, i: usize, joints: &[f64]) -> Vec3 {
        match self.point_hinge[i] {
            None => self.points[i],
            Some(j) => {
                let h = &self.hinges[j];
                let r = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(h.axis), joints[j]);
                h.pivot + r * (self.points[i] - h.pivot)
            }
        }
    }

    /// All points in the world frame for configuration `cfg`.
    pub fn world_points(&self, cfg: &GraspConfig) -> Result<Vec<Vec3>> {
        check_len("grasp joint values", self.dof(), cfg.joints.len())?;
        Ok((0..self.len())
            .map(|i| cfg.pose.transform_point(&self.local_point(i, &cfg.joints)))
            .collect())
    }

    pub fn mid_joints(&self) -> Vec<f64> {
        self.limits.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspConfig {
    pub pose: Pose,
    #[serde(default)]
    pub joints: Vec<f64>,
}

impl GraspConfig {
    pub fn rigid(pose: Pose) -> Self {
        GraspConfig { pose, joints: Vec::new() }
    }
}

/// Mutually nearest label pairs `(i, j)`, sorted by `i`. Ties resolve to the
/// lowest index.
pub fn mutual_correspondence(m1: &GripperModel, m2: &GripperModel) -> Vec<(usize, usize)> {
    mutual_pairs(m1.coords(), m2.coords())
}

fn nearest_label(c: &UgcsCoord, set: &[UgcsCoord]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, other) in set.iter().enumerate() {
        let d = haversine(c, other);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

pub(crate) fn mutual_pairs(a: &[UgcsCoord], b: &[UgcsCoord]) -> Vec<(usize, usize)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let back: Vec<usize> = b.iter().map(|c| nearest_label(c, a)).collect();
    a.iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let j = nearest_label(c, b);
            (back[j] == i).then_some((i, j))
        })
        .collect()
}

/// Mean Euclidean distance between paired points.
pub fn e_dist(src: &[Vec3], tgt: &[Vec3]) -> Result<f64> {
    check_len("corresponding point sets", src.len(), tgt.len())?;
    if src.is_empty() {
        return Err(Error::invalid("no corresponding points"));
    }
    Ok(src.iter().zip(tgt).map(|(a, b)| (a - b).norm()).sum::<f64>() / src.len() as f64)
}

/// Squared hinge penalty on joints outside their limits.
pub fn e_joint_limit(joints: &[f64], lower: &[f64], upper: &[f64]) -> Result<f64> {
    check_len("joint lower limits", joints.len(), lower.len())?;
    check_len("joint upper limits", joints.len(), upper.len())?;
    Ok(joints
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(q, (l, u))| (q - u).max(0.0).powi(2) + (l - q).max(0.0).powi(2))
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferOptions {
    pub step: f64,
    pub iterations: usize,
    pub final_step_ratio: f64,
}

impl Default for TransferOptions {
    fn default() -> Self {
        TransferOptions {
            step: 1e-2,
            iterations: 1500,
            final_step_ratio: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransferOutcome {
    pub config: GraspConfig,
    pub objective: f64,
    pub initial_objective: f64,
    /// Best objective after each accepted iteration.
    pub trace: Vec<f64>,
}

/// Correspondence between a source and a target model, established once and
/// reused for every configuration.
pub struct GraspTransfer<'a> {
    source: &'a GripperModel,
    target: &'a GripperModel,
    pairs: Vec<(usize, usize)>,
    pub options: TransferOptions,
}

/// `Rp` for a (possibly non-unit) quaternion `(w, v)` via the polynomial
/// form `p + 2w(v×p) + 2v×(v×p)`, which is a rotation on the unit sphere.
fn quat_rotate(q: &[f64], p: &Vec3) -> Vec3 {
    let w = q[0];
    let v = Vec3::new(q[1], q[2], q[3]);
    let vp = v.cross(p);
    p + 2.0 * w * vp + 2.0 * v.cross(&vp)
}

/// Adds `∂(Rp)/∂q ᵀ u` to `g`.
fn quat_rotate_vjp(q: &[f64], p: &Vec3, u: &Vec3, g: &mut [f64]) {
    let w = q[0];
    let v = Vec3::new(q[1], q[2], q[3]);
    g[0] += 2.0 * u.dot(&v.cross(p));
    // ∂/∂v: -2w[p]x + 2((v·p)I + v pᵀ - 2 p vᵀ)
    let jac = -2.0 * w * p.cross_matrix()
        + 2.0 * (Matrix3::identity() * v.dot(p) + v * p.transpose() - 2.0 * p * v.transpose());
    let gv = jac.transpose() * u;
    g[1] += gv.x;
    g[2] += gv.y;
    g[3] += gv.z;
}

impl<'a> GraspTransfer<'a> {
    pub fn new(source: &'a GripperModel, target: &'a GripperModel) -> Result<Self> {
        let pairs = mutual_correspondence(source, target);
        if pairs.is_empty() {
            return Err(Error::validation(format!(
                "no mutual correspondences between `{}` and `{}`",
                source.name, target.name
            )));
        }
        Ok(GraspTransfer {
            source,
            target,
            pairs,
            options: TransferOptions::default(),
        })
    }

    /// Restricts the correspondence to the given pairs.
    pub fn with_pairs(mut self, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("correspondence is empty"));
        }
        if pairs.iter().any(|&(i, j)| i >= self.source.len() || j >= self.target.len()) {
            return Err(Error::invalid("correspondence index out of range"));
        }
        self.pairs = pairs;
        Ok(self)
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Source points of the correspondence in the world frame.
    pub fn anchor_points(&self, source_cfg: &GraspConfig) -> Result<Vec<Vec3>> {
        let all = self.source.world_points(source_cfg)?;
        Ok(self.pairs.iter().map(|&(i, _)| all[i]).collect())
    }

    /// Packs `[t, q(w,x,y,z), joints]`.
    pub fn pack(&self, cfg: &GraspConfig) -> Vec<f64> {
        let mut x = cfg.pose.translation.as_slice().to_vec();
        x.extend(cfg.pose.rotation.wxyz());
        x.extend(&cfg.joints);
        x
    }

    pub fn unpack(&self, x: &[f64]) -> Result<GraspConfig> {
        check_len("grasp parameters", 7 + self.target.dof(), x.len())?;
        let q = UnitQuaternion::from_quaternion(Quaternion::new(x[3], x[4], x[5], x[6]));
        Ok(GraspConfig {
            pose: Pose::new(Rotation::from_unit_quaternion(q), Vec3::new(x[0], x[1], x[2])),
            joints: x[7..].to_vec(),
        })
    }

    /// `E_dist + E_n` at packed parameters `x`; gradient into `grad`.
    pub fn objective(&self, anchors: &[Vec3], x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let t = Vec3::new(x[0], x[1], x[2]);
        let q = &x[3..7];
        let joints = &x[7..];
        let k = self.pairs.len() as f64;
        let mut value = 0.0;
        for (&(_, j), anchor) in self.pairs.iter().zip(anchors) {
            let local = self.target.local_point(j, joints);
            let world = quat_rotate(q, &local) + t;
            let diff = world - anchor;
            let d = diff.norm();
            value += d / k;
            if d == 0.0 {
                continue;
            }
            let u = diff / (d * k);
            grad[0] += u.x;
            grad[1] += u.y;
            grad[2] += u.z;
            quat_rotate_vjp(q, &local, &u, &mut grad[3..7]);
            if let Some(h) = self.target.point_hinge[j] {
                let hinge = &self.target.hinges[h];
                let dlocal = hinge.axis.cross(&(local - hinge.pivot));
                grad[7 + h] += u.dot(&quat_rotate(q, &dlocal));
            }
        }
        for (i, (qj, [lo, hi])) in joints.iter().zip(&self.target.limits).enumerate() {
            let over = (qj - hi).max(0.0);
            let under = (lo - qj).max(0.0);
            value += over * over + under * under;
            grad[7 + i] += 2.0 * over - 2.0 * under;
        }
        value
    }

    /// Target configuration matching the source grasp, starting from `init`.
    pub fn transfer(&self, source_cfg: &GraspConfig, init: &GraspConfig) -> Result<TransferOutcome> {
        check_len("initial grasp joint values", self.target.dof(), init.joints.len())?;
        let anchors = self.anchor_points(source_cfg)?;
        let x0 = self.pack(init);
        let config = AdamConfig::new(self.options.step, self.options.iterations)
            .with_decay(self.options.final_step_ratio);
        let out = adam_minimize_projected(
            |x, g| self.objective(&anchors, x, g),
            &x0,
            &config,
            |x| {
                let n = (x[3] * x[3] + x[4] * x[4] + x[5] * x[5] + x[6] * x[6]).sqrt();
                if n > 0.0 {
                    x[3..7].iter_mut().for_each(|v| *v /= n);
                }
            },
        )?;
        Ok(TransferOutcome {
            config: self.unpack(&out.x)?,
            objective: out.value,
            initial_objective: out.initial_value,
            trace: out.trace,
        })
    }
}

/// Transfers one grasp from `source` to `target`.
pub fn transfer_grasp(
    source: &GripperModel,
    source_cfg: &GraspConfig,
    target: &GripperModel,
    init: &GraspConfig,
) -> Result<GraspConfig> {
    Ok(GraspTransfer::new(source, target)?.transfer(source_cfg, init)?.config)
}

/// Per-frame transfer, warm-started from the previous frame. The first frame
/// starts from the source pose with mid-range target joints.
pub fn transfer_trajectory(
    frames: &[(GripperModel, GraspConfig)],
    target: &GripperModel,
    options: &TransferOptions,
) -> Result<Trajectory> {
    if frames.is_empty() {
        return Err(Error::invalid("no hand frames to transfer"));
    }
    let mut poses = Vec::with_capacity(frames.len());
    let mut previous: Option<GraspConfig> = None;
    let mut cached: Option<(usize, GraspTransfer)> = None;
    for (idx, (model, cfg)) in frames.iter().enumerate() {
        let reuse = matches!(&cached, Some((k, _)) if frames[*k].0 == *model);
        if !reuse {
            let mut t = GraspTransfer::new(model, target)?;
            t.options = options.clone();
            cached = Some((idx, t));
        }
        let transfer = &cached.as_ref().expect("set above").1;
        let init = previous.clone().unwrap_or_else(|| GraspConfig {
            pose: cfg.pose,
            joints: target.mid_joints(),
        });
        let out = transfer
            .transfer(cfg, &init)
            .map_err(|e| Error::validation(format!("frame {idx}: {e}")))?;
        poses.push(out.config.pose);
        previous = Some(out.config);
    }
    Trajectory::new(CAMERA_FRAME, poses)
}

fn label_all(points: &[Vec3]) -> Result<Vec<UgcsCoord>> {
    points.iter().map(UgcsCoord::from_direction).collect()
}

fn grid(a: (f64, f64), b: (f64, f64), n: usize, m: usize, f: impl Fn(f64, f64) -> Vec3) -> Vec<Vec3> {
    let lerp = |r: (f64, f64), i: usize, k: usize| {
        if k == 1 {
            0.5 * (r.0 + r.1)
        } else {
            r.0 + (r.1 - r.0) * i as f64 / (k - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            out.push(f(lerp(a, i, n), lerp(b, j, m)));
        }
    }
    out
}

/// Two-finger parallel-jaw gripper: inner finger pads and the palm face,
/// in the end-effector frame with the grasp centre at the origin and +x
/// pointing along the approach.
pub fn parallel_jaw_gripper() -> GripperModel {
    let mut points = grid((-0.02, 0.02), (-0.01, 0.01), 5, 3, |x, z| Vec3::new(x, 0.04, z));
    points.extend(grid((-0.02, 0.02), (-0.01, 0.01), 5, 3, |x, z| Vec3::new(x, -0.04, z)));
    points.extend(grid((-0.025, 0.025), (-0.012, 0.012), 3, 3, |y, z| Vec3::new(-0.05, y, z)));
    let coords = label_all(&points).expect("grid points avoid the grasp centre");
    GripperModel::rigid("parallel-jaw", points, coords).expect("valid by construction")
}

/// Fixed transform from the synthetic hand frame to the gripper frame.
pub fn hand_to_gripper() -> Pose {
    Pose::new(
        Rotation::from_axis_angle(&Vec3::x_axis(), 0.4),
        Vec3::new(0.06, -0.01, 0.03),
    )
}

/// A synthetic human-hand model: thumb and index pads plus the palm, laid
/// out so that its grasp interior is a rigid copy of the parallel-jaw
/// interior seen through [`hand_to_gripper`]. Labels are offset slightly
/// so they are not bit-identical to the gripper's.
pub fn synthetic_hand() -> GripperModel {
    let jaw = parallel_jaw_gripper();
    let offset = hand_to_gripper();
    let points = jaw.points().iter().map(|p| offset.transform_point(p)).collect();
    let coords = jaw
        .coords()
        .iter()
        .map(|c| UgcsCoord::new((c.lambda() + 0.002).min(1.0), c.phi()).expect("in range"))
        .collect();
    GripperModel::rigid("synthetic-hand", points, coords).expect("valid by construction")
}

/// Parallel jaw whose two fingers swing on hinges about +z.
pub fn articulated_test_gripper() -> GripperModel {
    let jaw = parallel_jaw_gripper();
    let points = jaw.points().to_vec();
    let point_hinge = points
        .iter()
        .map(|p| {
            if p.y > 0.03 {
                Some(0)
            } else if p.y < -0.03 {
                Some(1)
            } else {
                None
            }
        })
        .collect();
    let hinges = vec![
        Hinge {
            axis: Vec3::z(),
            pivot: Vec3::new(-0.05, 0.04, 0.0),
        },
        Hinge {
            axis: Vec3::z(),
            pivot: Vec3::new(-0.05, -0.04, 0.0),
        },
    ];
    GripperModel::articulated(
        "articulated-jaw",
        points,
        jaw.coords().to_vec(),
        hinges,
        vec![[-0.3, 0.3], [-0.3, 0.3]],
        point_hinge,
    )
    .expect("valid by construction")
}
