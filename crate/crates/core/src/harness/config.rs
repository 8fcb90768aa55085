use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::base_opt::BaseOptParams;
use crate::error::{Error, Result};
use crate::grasp_transfer::TransferOptions;
use crate::hand_refine::HandRefineOptions;
use crate::io;
use crate::joint_opt::JointOptParams;
use crate::kinematics::default_ee_points;
use crate::optim::SolverOptions;
use crate::traj_align::{BlendParams, RefineParams};

/// Width of the dual-object blend: a quarter of the trajectory length, or a
/// fixed number of frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sigma {
    QuarterLength,
    Frames(f64),
}

impl Sigma {
    pub fn params(&self, len: usize) -> Result<BlendParams> {
        match self {
            Sigma::QuarterLength => BlendParams::quarter_length(len),
            Sigma::Frames(s) => BlendParams::new(*s),
        }
    }
}

impl Serialize for Sigma {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sigma::QuarterLength => s.serialize_str("T/4"),
            Sigma::Frames(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Sigma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) if t.replace(' ', "") == "T/4" => Ok(Sigma::QuarterLength),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unknown sigma `{t}`, expected \"T/4\" or a number"))),
            Raw::Number(v) => Ok(Sigma::Frames(v)),
        }
    }
}

/// Every pipeline hyperparameter, loadable from JSON. Missing keys take
/// their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub lambda_effort: f64,
    pub lambda_goal: f64,
    pub lambda: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub standoff: f64,
    pub sigma: Sigma,
    /// Waypoints sampled for base placement.
    pub n_samples: usize,
    /// End-effector surface samples in the goal-reaching cost.
    pub m: usize,
    /// Outer augmented-Lagrangian iterations.
    pub iterations: usize,
    /// Inner objective-decrease tolerance.
    pub tolerance: f64,
    pub equality_tolerance: f64,
    pub d_safe: f64,
    /// Joint-trajectory time step; taken from the demo timestamps when absent.
    pub dt: Option<f64>,
    /// Interpolated poses between the standoff and the grasp.
    pub approach_steps: usize,
    pub heading_starts: usize,
    pub ik_seeds: usize,
    pub refine: RefineParams,
    pub hand_lambda: f64,
    pub transfer_step: f64,
    pub transfer_iterations: usize,
    /// Standard deviation of the replayed base-pose error (m and rad).
    pub odom_noise: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            lambda_effort: 0.01,
            lambda_goal: 1.0,
            lambda: 150.0,
            lambda1: 0.02,
            lambda2: 0.01,
            standoff: 0.20,
            sigma: Sigma::QuarterLength,
            n_samples: 10,
            m: 32,
            iterations: 100,
            tolerance: 1e-15,
            equality_tolerance: 1e-8,
            d_safe: 0.02,
            dt: None,
            approach_steps: 8,
            heading_starts: 8,
            ik_seeds: 4,
            refine: RefineParams::default(),
            hand_lambda: 1.0,
            transfer_step: 1e-2,
            transfer_iterations: 1500,
            odom_noise: 0.0,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let c: PipelineConfig = io::read_json(path)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.lambda_effort, self.lambda_goal, self.lambda, self.lambda1, self.lambda2, self.hand_lambda];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::validation("cost weights must be finite and non-negative"));
        }
        if !(self.standoff >= 0.0) || !(self.d_safe > 0.0) || !(self.odom_noise >= 0.0) {
            return Err(Error::validation("standoff, d_safe and odom_noise must be non-negative (d_safe positive)"));
        }
        if self.n_samples == 0 || self.m == 0 || self.iterations == 0 || self.transfer_iterations == 0 {
            return Err(Error::validation("counts must be at least 1"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::validation("dt must be positive"));
            }
        }
        if let Sigma::Frames(s) = self.sigma {
            BlendParams::new(s)?;
        }
        self.refine.validate()
    }

    fn solver(&self, inner_iters: usize) -> SolverOptions {
        let mut s = SolverOptions {
            equality_tolerance: self.equality_tolerance,
            max_outer_iterations: self.iterations,
            ..SolverOptions::default()
        };
        s.inner.max_iters = inner_iters;
        s.inner.objective_tolerance = self.tolerance;
        s
    }

    pub fn base_params(&self) -> Result<BaseOptParams> {
        Ok(BaseOptParams {
            n_samples: self.n_samples,
            lambda_effort: self.lambda_effort,
            lambda_goal: self.lambda_goal,
            ee_points: default_ee_points(self.m)?,
            heading_starts: self.heading_starts,
            ik_seeds: self.ik_seeds,
            solver: self.solver(500),
        })
    }

    pub fn joint_params(&self, dt: f64) -> Result<JointOptParams> {
        let mut solver = self.solver(400);
        solver.inner.gradient_tolerance = 1e-9;
        Ok(JointOptParams {
            lambda: self.lambda,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            d_safe: self.d_safe,
            dt,
            standoff_distance: self.standoff,
            ee_points: default_ee_points(self.m)?,
            solver,
        })
    }

    pub fn hand_options(&self) -> HandRefineOptions {
        HandRefineOptions {
            lambda: self.hand_lambda,
            ..HandRefineOptions::default()
        }
    }

    pub fn transfer_options(&self) -> TransferOptions {
        TransferOptions {
            step: self.transfer_step,
            iterations: self.transfer_iterations,
            ..TransferOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_and_sigma_forms() {
        let c = PipelineConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"sigma\":\"T/4\""));
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let c: PipelineConfig = serde_json::from_str(r#"{"sigma": 12.5, "lambda": 15}"#).unwrap();
        assert_eq!(c.sigma, Sigma::Frames(12.5));
        assert_eq!(c.lambda, 15.0);
        assert_eq!(c.lambda1, 0.02);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sigma": "T/3"}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"lamda": 1}"#).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let c = PipelineConfig { d_safe: 0.0, ..PipelineConfig::default() };
        assert!(c.validate().is_err());
        let c = PipelineConfig { lambda: -1.0, ..PipelineConfig::default() };
        assert!(c.validate().is_err());
        let c = PipelineConfig { dt: Some(0.0), ..PipelineConfig::default() };
        assert!(c.validate().is_err());
    }
}
