use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::base_opt::{base_transform, BaseConfig};
use crate::error::{Error, Result};
use crate::geometry::{Trajectory, BASE_FRAME};
use crate::joint_opt::JointTrajectory;
use crate::kinematics::{forward_kinematics, KinematicChain};

/// Odometry error model: the base settles at the commanded pose plus one
/// Gaussian draw per replay, `std` in meters for x, y and radians for θ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdomNoise {
    pub std: f64,
    pub seed: u64,
}

/// The base actually reached under `noise`.
pub fn perturbed_base(base: &BaseConfig, noise: Option<OdomNoise>) -> Result<BaseConfig> {
    let Some(n) = noise else { return Ok(*base) };
    if !(n.std >= 0.0) || !n.std.is_finite() {
        return Err(Error::invalid("odometry noise std must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(n.seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let (dx, dy, dt) = (draw(), draw(), draw());
    Ok(BaseConfig::new(base.x + n.std * dx, base.y + n.std * dy, base.theta + n.std * dt))
}

/// End-effector poses reached by executing `jt` from `base`, in the frame
/// the base was planned in.
pub fn replay(
    chain: &KinematicChain,
    jt: &JointTrajectory,
    base: &BaseConfig,
    noise: Option<OdomNoise>,
) -> Result<Trajectory> {
    let b = base_transform(&perturbed_base(base, noise)?);
    let poses = jt
        .q
        .iter()
        .map(|q| Ok(b.compose(&forward_kinematics(chain, q)?)))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(BASE_FRAME, poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::tracking_error;
    use crate::kinematics::lift_pitch_roll;

    fn jt() -> JointTrajectory {
        let q: Vec<Vec<f64>> = (0..5).map(|i| vec![0.1 * i as f64, 0.2, -0.1 * i as f64]).collect();
        JointTrajectory { dt: 0.1, qd: vec![vec![0.0; 3]; q.len()], q }
    }

    #[test]
    fn identity_base_is_pure_fk() {
        let chain = lift_pitch_roll();
        let out = replay(&chain, &jt(), &BaseConfig::default(), None).unwrap();
        for (p, q) in out.poses().iter().zip(&jt().q) {
            assert_eq!(*p, forward_kinematics(&chain, q).unwrap());
        }
        let zero = Some(OdomNoise { std: 0.0, seed: 3 });
        assert_eq!(replay(&chain, &jt(), &BaseConfig::default(), zero).unwrap(), out);
    }

    #[test]
    fn noise_is_seeded_and_grows_with_std() {
        let chain = lift_pitch_roll();
        let base = BaseConfig::new(0.3, -0.1, 0.2);
        let clean = replay(&chain, &jt(), &base, None).unwrap();
        let noisy = |std| replay(&chain, &jt(), &base, Some(OdomNoise { std, seed: 11 })).unwrap();
        assert_eq!(noisy(1e-3), noisy(1e-3));
        let errs: Vec<f64> = [0.0, 1e-3, 5e-3].iter().map(|s| tracking_error(&noisy(*s), &clean).unwrap().e_trans).collect();
        assert_eq!(errs[0], 0.0);
        assert!(errs[0] < errs[1] && errs[1] < errs[2]);
    }
}
