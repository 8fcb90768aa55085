//! Translation refinement for a regressed hand mesh against a depth cloud.
//!
//! The objective balances a one-directional nearest-neighbour distance from
//! the translated vertices to the observed cloud against the pixel
//! discrepancy between the mesh as the regressor saw it (virtual camera,
//! initial translation) and as the real camera would see it.

use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{points_serde, vec3_serde, Vec3};
use crate::io;
use crate::optim::{adam_minimize, AdamConfig};
use crate::spatial::PointIndex;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = CameraIntrinsics { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::validation("focal lengths must be positive"));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::non_finite("principal point"));
        }
        Ok(())
    }
}

/// Pinhole projection of a camera-frame point.
pub fn project(k: &CameraIntrinsics, p: &Vec3) -> Result<Vector2<f64>> {
    if !(p.z > 0.0) {
        return Err(Error::NonPositiveDepth(p.z));
    }
    Ok(Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandObservation {
    #[serde(with = "points_serde")]
    pub vertices: Vec<Vec3>,
    #[serde(with = "vec3_serde")]
    pub t_init: Vec3,
    pub k_virtual: CameraIntrinsics,
    pub k_real: CameraIntrinsics,
    #[serde(with = "points_serde")]
    pub hand_cloud: Vec<Vec3>,
    /// Optical centre shared by both cameras; points are projected relative
    /// to it. Zero for a cloud already in the camera frame.
    #[serde(default = "Vec3::zeros", with = "vec3_serde")]
    pub camera_origin: Vec3,
}

impl HandObservation {
    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 4 {
            return Err(Error::validation("hand mesh needs at least 4 vertices"));
        }
        if self.hand_cloud.is_empty() {
            return Err(Error::validation("hand cloud is empty"));
        }
        let finite = |p: &Vec3| p.iter().all(|v| v.is_finite());
        if !self.vertices.iter().chain(&self.hand_cloud).all(finite)
            || !finite(&self.t_init)
            || !finite(&self.camera_origin)
        {
            return Err(Error::non_finite("hand observation"));
        }
        self.k_virtual.validate()?;
        self.k_real.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let obs: HandObservation = io::read_json(path)?;
        obs.validate()?;
        Ok(obs)
    }
}

/// `Σ_i min_p ‖v_i + t − p‖` over the indexed cloud.
pub fn distance_cost(vertices: &[Vec3], t: &Vec3, cloud: &PointIndex) -> f64 {
    vertices
        .iter()
        .filter_map(|v| cloud.nearest(&(v + t)).map(|(_, d)| d))
        .sum()
}

/// `Σ_i ‖proj(k_virtual, v_i + t_init) − proj(k_real, v_i + t)‖²`.
pub fn reprojection_cost(
    vertices: &[Vec3],
    t_init: &Vec3,
    k_virtual: &CameraIntrinsics,
    t: &Vec3,
    k_real: &CameraIntrinsics,
) -> Result<f64> {
    let mut total = 0.0;
    for v in vertices {
        let a = project(k_virtual, &(v + t_init))?;
        let b = project(k_real, &(v + t))?;
        total += (a - b).norm_squared();
    }
    Ok(total)
}

/// The refinement objective with nearest-neighbour assignments held fixed.
pub struct HandObjective<'a> {
    obs: &'a HandObservation,
    lambda: f64,
    targets: Vec<Vec3>,
    observed_pixels: Vec<Vector2<f64>>,
}

impl<'a> HandObjective<'a> {
    /// Freezes each vertex's nearest cloud point at translation `t`.
    pub fn frozen_at(obs: &'a HandObservation, cloud: &PointIndex, lambda: f64, t: &Vec3) -> Result<Self> {
        let targets = obs
            .vertices
            .iter()
            .map(|v| {
                let (i, _) = cloud.nearest(&(v + t)).ok_or_else(|| Error::validation("hand cloud is empty"))?;
                Ok(cloud.points()[i])
            })
            .collect::<Result<Vec<_>>>()?;
        let observed_pixels = obs
            .vertices
            .iter()
            .map(|v| project(&obs.k_virtual, &(v + obs.t_init - obs.camera_origin)))
            .collect::<Result<Vec<_>>>()?;
        Ok(HandObjective {
            obs,
            lambda,
            targets,
            observed_pixels,
        })
    }

    /// Objective value and gradient with respect to the translation.
    pub fn evaluate(&self, t: &Vec3) -> Result<(f64, Vec3)> {
        let k = &self.obs.k_real;
        let mut value = 0.0;
        let mut grad = Vec3::zeros();
        for ((v, target), observed) in self.obs.vertices.iter().zip(&self.targets).zip(&self.observed_pixels) {
            let w = v + t;
            let diff = w - target;
            let d = diff.norm();
            value += self.lambda * d;
            if d > 0.0 {
                grad += diff * (self.lambda / d);
            }
            let p = w - self.obs.camera_origin;
            if !(p.z > 0.0) {
                return Err(Error::NonPositiveDepth(p.z));
            }
            let inv_z = 1.0 / p.z;
            let pixel = Vector2::new(k.fx * p.x * inv_z + k.cx, k.fy * p.y * inv_z + k.cy);
            let r = pixel - observed;
            value += r.norm_squared();
            // d(pixel)/dp rows: (fx/z, 0, -fx x/z²), (0, fy/z, -fy y/z²)
            grad.x += 2.0 * r.x * k.fx * inv_z;
            grad.y += 2.0 * r.y * k.fy * inv_z;
            grad.z -= 2.0 * (r.x * k.fx * p.x + r.y * k.fy * p.y) * inv_z * inv_z;
        }
        Ok((value, grad))
    }
}

/// Full objective with fresh nearest neighbours, `λ·distance + reprojection`.
pub fn hand_objective(obs: &HandObservation, cloud: &PointIndex, lambda: f64, t: &Vec3) -> Result<f64> {
    let o = obs.camera_origin;
    let shifted: Vec<Vec3> = obs.vertices.iter().map(|v| v - o).collect();
    let reproj = reprojection_cost(&shifted, &obs.t_init, &obs.k_virtual, t, &obs.k_real)?;
    Ok(lambda * distance_cost(&obs.vertices, t, cloud) + reproj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HandRefineOptions {
    pub lambda: f64,
    /// Nearest-neighbour refreshes.
    pub outer_iterations: usize,
    /// Adam steps between refreshes.
    pub inner_iterations: usize,
    /// Initial Adam step, meters.
    pub step: f64,
    /// Step size at the end of the last outer iteration relative to `step`.
    pub final_step_ratio: f64,
}

impl Default for HandRefineOptions {
    fn default() -> Self {
        HandRefineOptions {
            lambda: 1.0,
            outer_iterations: 30,
            inner_iterations: 100,
            step: 5e-3,
            final_step_ratio: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HandRefineOutcome {
    #[serde(with = "vec3_serde")]
    pub t: Vec3,
    pub objective: f64,
    pub initial_objective: f64,
    pub outer_iterations: usize,
}

/// Refined translation with the default schedule and the given `lambda`.
pub fn refine_hand_translation(obs: &HandObservation, lambda: f64) -> Result<Vec3> {
    let options = HandRefineOptions {
        lambda,
        ..HandRefineOptions::default()
    };
    Ok(refine_hand_translation_with(obs, &options)?.t)
}

pub fn refine_hand_translation_with(obs: &HandObservation, options: &HandRefineOptions) -> Result<HandRefineOutcome> {
    obs.validate()?;
    if !(options.lambda >= 0.0) || !options.lambda.is_finite() {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    if options.outer_iterations == 0 || options.inner_iterations == 0 {
        return Err(Error::invalid("iteration counts must be at least 1"));
    }
    let cloud = PointIndex::new(obs.hand_cloud.clone());
    let initial_objective = hand_objective(obs, &cloud, options.lambda, &obs.t_init)?;
    let mut best_t = obs.t_init;
    let mut best = initial_objective;
    let mut t = obs.t_init;
    let per_outer = options.final_step_ratio.powf(1.0 / options.outer_iterations as f64);
    let mut step = options.step;
    let mut performed = 0;

    for _ in 0..options.outer_iterations {
        performed += 1;
        let frozen = HandObjective::frozen_at(obs, &cloud, options.lambda, &t)?;
        let mut failure = None;
        let config = AdamConfig::new(step, options.inner_iterations).with_decay(per_outer);
        let out = adam_minimize(
            |x, g| match frozen.evaluate(&Vec3::new(x[0], x[1], x[2])) {
                Ok((f, grad)) => {
                    g.copy_from_slice(grad.as_slice());
                    f
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    g.iter_mut().for_each(|v| *v = 0.0);
                    f64::NAN
                }
            },
            t.as_slice(),
            &config,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let out = out?;
        let next = Vec3::new(out.x[0], out.x[1], out.x[2]);
        step *= per_outer;
        let value = hand_objective(obs, &cloud, options.lambda, &next)?;
        if value < best {
            best = value;
            best_t = next;
        }
        let moved = (next - t).norm();
        t = next;
        if moved == 0.0 {
            break;
        }
    }

    Ok(HandRefineOutcome {
        t: best_t,
        objective: best,
        initial_objective,
        outer_iterations: performed,
    })
}
