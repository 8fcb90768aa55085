//! Serial kinematic chains: forward kinematics, geometric Jacobians, link
//! collision spheres and end-effector surface sampling.

use std::path::Path;

use nalgebra::{DMatrix, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::{Pose, Rotation, Vec3};
use crate::io;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One actuated joint: a fixed transform from the parent link followed by a
/// motion about (revolute) or along (prismatic) `axis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub kind: JointKind,
    #[serde(with = "crate::geometry::vec3_serde")]
    pub axis: Vec3,
    pub origin: Pose,
    pub lower: f64,
    pub upper: f64,
    pub vel_limit: f64,
}

impl JointSpec {
    fn motion(&self, q: f64) -> Pose {
        match self.kind {
            JointKind::Revolute => {
                Pose::from_rotation(Rotation::from_axis_angle(&Unit::new_unchecked(self.axis), q))
            }
            JointKind::Prismatic => Pose::from_translation(self.axis * q),
        }
    }

    fn validate(&self, i: usize) -> Result<()> {
        if (self.axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("joint {i}: axis is not unit length")));
        }
        if !(self.lower <= self.upper) {
            return Err(Error::validation(format!("joint {i}: lower limit exceeds upper")));
        }
        if !(self.vel_limit > 0.0) || !self.vel_limit.is_finite() {
            return Err(Error::validation(format!("joint {i}: velocity limit must be positive")));
        }
        if !self.origin.is_finite() || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(Error::non_finite(format!("joint {i}")));
        }
        Ok(())
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// A collision sphere rigidly attached to a link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPoint {
    #[serde(with = "crate::geometry::vec3_serde")]
    pub xyz: Vec3,
    pub r: f64,
}

/// A collision sphere expressed in the base frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotPoint {
    pub position: Vec3,
    pub radius: f64,
    pub link: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainRecord", into = "ChainRecord")]
pub struct KinematicChain {
    pub name: String,
    pub base_frame: String,
    pub joints: Vec<JointSpec>,
    pub ee_offset: Pose,
    /// `link_points[k]` rides on the link moved by joint `k`.
    pub link_points: Vec<Vec<LinkPoint>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainRecord {
    pub name: String,
    #[serde(default = "default_base_frame")]
    pub base_frame: String,
    pub joints: Vec<JointSpec>,
    pub ee_offset: Pose,
    #[serde(default)]
    pub link_points: Vec<Vec<LinkPoint>>,
}

fn default_base_frame() -> String {
    crate::geometry::BASE_FRAME.to_string()
}

impl TryFrom<ChainRecord> for KinematicChain {
    type Error = Error;

    fn try_from(rec: ChainRecord) -> Result<Self> {
        let mut chain = KinematicChain {
            name: rec.name,
            base_frame: rec.base_frame,
            joints: rec.joints,
            ee_offset: rec.ee_offset,
            link_points: rec.link_points,
        };
        chain.link_points.resize(chain.joints.len(), Vec::new());
        chain.validate()?;
        Ok(chain)
    }
}

impl From<KinematicChain> for ChainRecord {
    fn from(c: KinematicChain) -> Self {
        ChainRecord {
            name: c.name,
            base_frame: c.base_frame,
            joints: c.joints,
            ee_offset: c.ee_offset,
            link_points: c.link_points,
        }
    }
}

impl KinematicChain {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::validation("chain has no joints"));
        }
        for (i, j) in self.joints.iter().enumerate() {
            j.validate(i)?;
        }
        if self.link_points.len() > self.joints.len() {
            return Err(Error::validation("more link point sets than links"));
        }
        for (k, pts) in self.link_points.iter().enumerate() {
            if pts.iter().any(|p| !(p.r > 0.0) || !p.xyz.iter().all(|v| v.is_finite())) {
                return Err(Error::validation(format!("link {k}: point radii must be positive")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn lower_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.lower).collect()
    }

    pub fn upper_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.upper).collect()
    }

    pub fn velocity_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.vel_limit).collect()
    }

    pub fn mid_config(&self) -> Vec<f64> {
        self.joints.iter().map(JointSpec::mid).collect()
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof()
            && q.iter().zip(&self.joints).all(|(v, j)| *v >= j.lower && *v <= j.upper)
    }

    pub fn clamp_to_limits(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.lower, j.upper);
        }
    }

    /// Evaluates every joint frame at `q`.
    pub fn state(&self, q: &[f64]) -> Result<ChainState> {
        check_len("joint configuration", self.dof(), q.len())?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("joint configuration"));
        }
        Ok(self.state_unchecked(q))
    }

    pub(crate) fn state_unchecked(&self, q: &[f64]) -> ChainState {
        let n = self.dof();
        let mut axes = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        let mut links = Vec::with_capacity(n);
        let mut frame = Pose::identity();
        for (joint, &qk) in self.joints.iter().zip(q) {
            let pre = frame.compose(&joint.origin);
            axes.push(pre.rotation.rotate(&joint.axis));
            origins.push(pre.translation);
            frame = pre.compose(&joint.motion(qk));
            links.push(frame);
        }
        let ee = frame.compose(&self.ee_offset);
        ChainState {
            kinds: self.joints.iter().map(|j| j.kind).collect(),
            axes,
            origins,
            links,
            ee,
        }
    }
}

/// Joint axes, joint origins and link frames at one configuration, all in
/// the chain's base frame.
#[derive(Clone, Debug)]
pub struct ChainState {
    kinds: Vec<JointKind>,
    axes: Vec<Vec3>,
    origins: Vec<Vec3>,
    links: Vec<Pose>,
    ee: Pose,
}

impl ChainState {
    pub fn ee(&self) -> &Pose {
        &self.ee
    }

    pub fn link_frame(&self, k: usize) -> &Pose {
        &self.links[k]
    }

    /// Velocity of base-frame point `w` (rigidly attached to link `link`)
    /// per unit rate of joint `k`.
    pub fn point_velocity(&self, k: usize, w: &Vec3) -> Vec3 {
        match self.kinds[k] {
            JointKind::Revolute => self.axes[k].cross(&(w - self.origins[k])),
            JointKind::Prismatic => self.axes[k],
        }
    }

    /// Adds `force · ∂w/∂q` to `grad` for a point `w` on link `link`.
    pub fn accumulate_point_force(&self, link: usize, w: &Vec3, force: &Vec3, grad: &mut [f64]) {
        for k in 0..=link {
            grad[k] += force.dot(&self.point_velocity(k, w));
        }
    }

    /// Adds `J^T [force; torque]` to `grad`, where the torque is taken about
    /// the end-effector origin.
    pub fn accumulate_ee_wrench(&self, force: &Vec3, torque: &Vec3, grad: &mut [f64]) {
        let p = self.ee.translation;
        for k in 0..self.axes.len() {
            grad[k] += match self.kinds[k] {
                JointKind::Revolute => {
                    force.dot(&self.axes[k].cross(&(p - self.origins[k]))) + torque.dot(&self.axes[k])
                }
                JointKind::Prismatic => force.dot(&self.axes[k]),
            };
        }
    }

    /// 6 x n geometric Jacobian: rows 0..3 linear velocity of the
    /// end-effector origin, rows 3..6 angular velocity.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let n = self.axes.len();
        let mut jac = DMatrix::zeros(6, n);
        let p = self.ee.translation;
        for k in 0..n {
            let (lin, ang) = match self.kinds[k] {
                JointKind::Revolute => (self.axes[k].cross(&(p - self.origins[k])), self.axes[k]),
                JointKind::Prismatic => (self.axes[k], Vec3::zeros()),
            };
            jac.fixed_view_mut::<3, 1>(0, k).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, k).copy_from(&ang);
        }
        jac
    }
}

pub fn forward_kinematics(chain: &KinematicChain, q: &[f64]) -> Result<Pose> {
    Ok(*chain.state(q)?.ee())
}

pub fn pose_jacobian(chain: &KinematicChain, q: &[f64]) -> Result<DMatrix<f64>> {
    Ok(chain.state(q)?.jacobian())
}

/// All link collision spheres in the base frame at `q`.
pub fn robot_points(chain: &KinematicChain, q: &[f64]) -> Result<Vec<RobotPoint>> {
    let state = chain.state(q)?;
    Ok(robot_points_at(chain, &state))
}

pub(crate) fn robot_points_at(chain: &KinematicChain, state: &ChainState) -> Vec<RobotPoint> {
    let mut out = Vec::new();
    for (link, pts) in chain.link_points.iter().enumerate() {
        let frame = state.link_frame(link);
        out.extend(pts.iter().map(|lp| RobotPoint {
            position: frame.transform_point(&lp.xyz),
            radius: lp.r,
            link,
        }));
    }
    out
}

/// Surface points sampled on the end-effector, expressed in its frame.
/// Immutable once sampled so every cost that uses it sees identical inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct GripperPointSet(Vec<Vec3>);

impl GripperPointSet {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation("gripper point set is empty"));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::non_finite("gripper point"));
        }
        Ok(GripperPointSet(points))
    }

    pub fn points(&self) -> &[Vec3] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<[f64; 3]>> for GripperPointSet {
    type Error = Error;
    fn try_from(raw: Vec<[f64; 3]>) -> Result<Self> {
        GripperPointSet::new(raw.into_iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
    }
}

impl From<GripperPointSet> for Vec<[f64; 3]> {
    fn from(s: GripperPointSet) -> Self {
        s.0.into_iter().map(|p| [p.x, p.y, p.z]).collect()
    }
}

/// An indexed triangle mesh.
#[derive(Clone, Debug, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Axis-aligned box with outward-facing triangles.
    pub fn cuboid(center: Vec3, half: Vec3) -> TriMesh {
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            let s = |bit: usize| if i & bit != 0 { 1.0 } else { -1.0 };
            vertices.push(center + Vec3::new(s(1) * half.x, s(2) * half.y, s(4) * half.z));
        }
        let triangles = vec![
            [0, 4, 6], [0, 6, 2],
            [1, 3, 7], [1, 7, 5],
            [0, 1, 5], [0, 5, 4],
            [2, 6, 7], [2, 7, 3],
            [0, 2, 3], [0, 3, 1],
            [4, 5, 7], [4, 7, 6],
        ];
        TriMesh { vertices, triangles }
    }

    /// Icosahedron refined `subdivisions` times, vertices on the unit sphere.
    pub fn icosphere(subdivisions: usize) -> TriMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vec3> = [
            (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
            (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
            (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut triangles: Vec<[usize; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoints = std::collections::HashMap::new();
            let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
                let key = (a.min(b), a.max(b));
                *midpoints.entry(key).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(triangles.len() * 4);
            for [a, b, c] in triangles {
                let ab = mid(a, b, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let ca = mid(c, a, &mut vertices);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            triangles = next;
        }
        TriMesh { vertices, triangles }
    }

    pub fn merge(meshes: &[TriMesh]) -> TriMesh {
        let mut out = TriMesh::default();
        for m in meshes {
            let base = out.vertices.len();
            out.vertices.extend_from_slice(&m.vertices);
            out.triangles
                .extend(m.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        }
        out
    }

    fn triangle_area(&self, t: &[usize; 3]) -> f64 {
        let [a, b, c] = t.map(|i| self.vertices[i]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }
}

/// Draws `m` area-weighted surface samples from `mesh`, reproducible for a
/// given `seed`.
pub fn sample_gripper_points(mesh: &TriMesh, m: usize, seed: u64) -> Result<GripperPointSet> {
    if m == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if mesh.triangles.is_empty() {
        return Err(Error::invalid("mesh has no triangles"));
    }
    if mesh.triangles.iter().flatten().any(|&i| i >= mesh.vertices.len()) {
        return Err(Error::invalid("mesh triangle references a missing vertex"));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in &mesh.triangles {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::invalid("mesh has zero surface area"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..m)
        .map(|_| {
            let pick = rng.gen::<f64>() * total;
            let idx = cumulative.partition_point(|&c| c < pick).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangles[idx].map(|i| mesh.vertices[i]);
            let r1: f64 = rng.gen::<f64>().sqrt();
            let r2: f64 = rng.gen();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect();
    GripperPointSet::new(points)
}

/// Default number of end-effector samples used by the goal cost.
pub const DEFAULT_EE_POINTS: usize = 32;

/// Palm plus two open fingers of a parallel-jaw gripper, in the
/// end-effector frame (+x is the approach direction).
pub fn parallel_jaw_mesh() -> TriMesh {
    TriMesh::merge(&[
        TriMesh::cuboid(Vec3::new(-0.09, 0.0, 0.0), Vec3::new(0.04, 0.06, 0.03)),
        TriMesh::cuboid(Vec3::new(0.0, 0.055, 0.0), Vec3::new(0.03, 0.008, 0.012)),
        TriMesh::cuboid(Vec3::new(0.0, -0.055, 0.0), Vec3::new(0.03, 0.008, 0.012)),
    ])
}

/// End-effector samples for the goal cost, `m` points from the parallel-jaw
/// mesh with a fixed seed.
pub fn default_ee_points(m: usize) -> Result<GripperPointSet> {
    sample_gripper_points(&parallel_jaw_mesh(), m, 7)
}

fn revolute(axis: Vec3, t: [f64; 3], lower: f64, upper: f64, vel: f64) -> JointSpec {
    JointSpec {
        kind: JointKind::Revolute,
        axis,
        origin: Pose::from_translation(Vec3::new(t[0], t[1], t[2])),
        lower,
        upper,
        vel_limit: vel,
    }
}

fn prismatic(axis: Vec3, t: [f64; 3], lower: f64, upper: f64, vel: f64) -> JointSpec {
    JointSpec {
        kind: JointKind::Prismatic,
        ..revolute(axis, t, lower, upper, vel)
    }
}

/// Spheres spaced along the segment from a link origin to `end`.
fn segment_points(end: Vec3, count: usize, r: f64) -> Vec<LinkPoint> {
    (0..count)
        .map(|i| LinkPoint {
            xyz: end * ((i as f64 + 0.5) / count as f64),
            r,
        })
        .collect()
}

/// Two revolute joints about +z with unit links along +x. End-effector at
/// the tip of the second link.
pub fn planar_two_link() -> KinematicChain {
    let pi = std::f64::consts::PI;
    KinematicChain {
        name: "planar-2link".into(),
        base_frame: crate::geometry::BASE_FRAME.into(),
        joints: vec![
            revolute(Vec3::z(), [0.0, 0.0, 0.0], -pi, pi, 2.0),
            revolute(Vec3::z(), [1.0, 0.0, 0.0], -pi, pi, 2.0),
        ],
        ee_offset: Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)),
        link_points: vec![
            segment_points(Vec3::new(1.0, 0.0, 0.0), 2, 0.05),
            segment_points(Vec3::new(1.0, 0.0, 0.0), 2, 0.05),
        ],
    }
}

/// Three-joint test arm: a vertical lift, a shoulder pitch and a wrist roll.
///
/// With a planar (x, y, yaw) base this is exactly six degrees of freedom, so
/// a set of reachable waypoints pins down a unique base placement.
pub fn lift_pitch_roll() -> KinematicChain {
    KinematicChain {
        name: "lift-pitch-roll".into(),
        base_frame: crate::geometry::BASE_FRAME.into(),
        joints: vec![
            prismatic(Vec3::z(), [0.1, 0.0, 0.5], 0.0, 0.6, 0.3),
            revolute(Vec3::y(), [0.0, 0.0, 0.2], -1.2, 1.2, 1.5),
            revolute(Vec3::x(), [0.55, 0.0, 0.0], -2.6, 2.6, 2.0),
        ],
        ee_offset: Pose::from_translation(Vec3::new(0.15, 0.0, 0.0)),
        link_points: vec![
            segment_points(Vec3::new(0.0, 0.0, 0.2), 2, 0.05),
            segment_points(Vec3::new(0.55, 0.0, 0.0), 4, 0.04),
            segment_points(Vec3::new(0.12, 0.0, 0.0), 2, 0.03),
        ],
    }
}

/// An eight-joint mobile-manipulator arm laid out like a Fetch robot: a
/// prismatic torso lift followed by a seven-joint arm with alternating
/// pitch and roll joints. Dimensions and limits are approximate.
pub fn fetch_like() -> KinematicChain {
    let pi = std::f64::consts::PI;
    KinematicChain {
        name: "fetch-like".into(),
        base_frame: crate::geometry::BASE_FRAME.into(),
        joints: vec![
            prismatic(Vec3::z(), [-0.0869, 0.0, 0.3774], 0.0, 0.386, 0.1),
            revolute(Vec3::z(), [0.1195, 0.0, 0.3486], -1.6056, 1.6056, 1.256),
            revolute(Vec3::y(), [0.117, 0.0, 0.06], -1.221, 1.518, 1.454),
            revolute(Vec3::x(), [0.219, 0.0, 0.0], -pi, pi, 1.571),
            revolute(Vec3::y(), [0.133, 0.0, 0.0], -2.251, 2.251, 1.521),
            revolute(Vec3::x(), [0.197, 0.0, 0.0], -pi, pi, 1.571),
            revolute(Vec3::y(), [0.1245, 0.0, 0.0], -2.16, 2.16, 2.268),
            revolute(Vec3::x(), [0.1385, 0.0, 0.0], -pi, pi, 2.268),
        ],
        ee_offset: Pose::from_translation(Vec3::new(0.16645, 0.0, 0.0)),
        link_points: vec![
            // torso column
            segment_points(Vec3::new(0.12, 0.0, 0.35), 3, 0.08),
            segment_points(Vec3::new(0.117, 0.0, 0.06), 1, 0.06),
            segment_points(Vec3::new(0.219, 0.0, 0.0), 2, 0.06),
            segment_points(Vec3::new(0.133, 0.0, 0.0), 1, 0.055),
            segment_points(Vec3::new(0.197, 0.0, 0.0), 2, 0.05),
            segment_points(Vec3::new(0.1245, 0.0, 0.0), 1, 0.05),
            segment_points(Vec3::new(0.1385, 0.0, 0.0), 1, 0.045),
            segment_points(Vec3::new(0.10, 0.0, 0.0), 2, 0.04),
        ],
    }
}
