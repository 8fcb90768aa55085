use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::base_opt::BaseConfig;
use crate::error::{Error, Result};
use crate::geometry::{points_serde, Pose, Trajectory, Vec3, CAMERA_FRAME};
use crate::grasp_transfer::{GraspConfig, GripperModel};
use crate::hand_refine::HandObservation;
use crate::io;
use crate::kinematics::KinematicChain;
use crate::traj_align::ObjectPoses;

pub const SCENARIO_SCHEMA: &str = "hrt1-scenario/1";
pub const MANIFEST: &str = "scenario.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Single,
    Dual,
}

impl ScenarioKind {
    pub fn objects(&self) -> usize {
        match self {
            ScenarioKind::Single => 1,
            ScenarioKind::Dual => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub frame: String,
    #[serde(with = "points_serde")]
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn load(path: &Path) -> Result<Self> {
        let c: PointCloud = io::read_json(path)?;
        if c.points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::non_finite(format!("point cloud {}", path.display())));
        }
        Ok(c)
    }

    pub fn transformed(&self, frame: &str, t: &Pose) -> PointCloud {
        PointCloud {
            frame: frame.into(),
            points: self.points.iter().map(|p| t.transform_point(p)).collect(),
        }
    }
}

/// Perception fixtures: a depth observation of the hand in the first frame
/// and per-frame hand grasps whose translations share its depth error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandFixtures {
    pub observation: String,
    pub hand_model: String,
    pub grasps: String,
    pub gripper_model: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Execution-scene gripper trajectory (camera frame), one pose per demo
    /// frame.
    pub exe_traj: String,
    /// Base motion used to construct the scenario.
    pub base_offset: BaseConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub schema: String,
    pub name: String,
    pub kind: ScenarioKind,
    pub chain: String,
    pub demo: String,
    pub deltas: String,
    pub env_cloud: String,
    /// Camera pose in the robot base frame.
    pub t_bc: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand: Option<HandFixtures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
}

/// A loaded, validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub dir: PathBuf,
    pub manifest: ScenarioManifest,
    pub chain: KinematicChain,
    pub demo: Trajectory,
    pub objects: Vec<ObjectPoses>,
    pub env_cloud: PointCloud,
    pub hand: Option<HandData>,
    pub ground_truth: Option<Trajectory>,
}

#[derive(Clone, Debug)]
pub struct HandData {
    pub observation: HandObservation,
    pub hand_model: GripperModel,
    pub grasps: Vec<GraspConfig>,
    pub gripper_model: GripperModel,
}

impl Scenario {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: ScenarioManifest = io::read_json(&dir.join(MANIFEST))?;
        if manifest.schema != SCENARIO_SCHEMA {
            return Err(Error::validation(format!(
                "unsupported scenario schema `{}`, expected `{SCENARIO_SCHEMA}`",
                manifest.schema
            )));
        }
        let at = |rel: &str| dir.join(rel);
        let chain = KinematicChain::load(&at(&manifest.chain))?;
        let demo: Trajectory = io::read_json(&at(&manifest.demo))?;
        let objects = ObjectPoses::load_all(&at(&manifest.deltas))?;
        let env_cloud = PointCloud::load(&at(&manifest.env_cloud))?;
        let hand = manifest
            .hand
            .as_ref()
            .map(|h| -> Result<HandData> {
                Ok(HandData {
                    observation: HandObservation::load(&at(&h.observation))?,
                    hand_model: GripperModel::load(&at(&h.hand_model))?,
                    grasps: io::read_json(&at(&h.grasps))?,
                    gripper_model: GripperModel::load(&at(&h.gripper_model))?,
                })
            })
            .transpose()?;
        let ground_truth = manifest
            .ground_truth
            .as_ref()
            .map(|g| io::read_json::<Trajectory>(&at(&g.exe_traj)))
            .transpose()?;
        let s = Scenario {
            dir: dir.to_path_buf(),
            manifest,
            chain,
            demo,
            objects,
            env_cloud,
            hand,
            ground_truth,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.manifest.kind.objects();
        if self.objects.len() != expected {
            return Err(Error::validation(format!(
                "{:?} scenario needs {expected} object deltas, found {}",
                self.manifest.kind,
                self.objects.len()
            )));
        }
        for (what, frame) in [("demo trajectory", self.demo.frame_id()), ("environment cloud", &self.env_cloud.frame)] {
            if frame != CAMERA_FRAME {
                return Err(Error::validation(format!("{what} must be in the `{CAMERA_FRAME}` frame, got `{frame}`")));
            }
        }
        if self.env_cloud.points.is_empty() {
            return Err(Error::validation("environment cloud is empty"));
        }
        self.chain.validate()?;
        if let Some(h) = &self.hand {
            h.observation.validate()?;
            if h.grasps.len() != self.demo.len() {
                return Err(Error::validation(format!(
                    "{} hand grasps for {} demo frames",
                    h.grasps.len(),
                    self.demo.len()
                )));
            }
        }
        if let Some(gt) = &self.ground_truth {
            if gt.len() != self.demo.len() || gt.frame_id() != CAMERA_FRAME {
                return Err(Error::validation("ground truth must be a camera-frame trajectory matching the demo length"));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.manifest.name
    }
}
