//! Places the base of the three-joint test arm for a path recorded from an
//! unknown base pose, and compares the result with that pose.
//!
//! Usage: cargo run --example base_placement -- [seed]

use hrt1::base_opt::{base_transform, optimize_base, sample_waypoints, BaseConfig, BaseOptParams};
use hrt1::geometry::BASE_FRAME;
use hrt1::kinematics::{forward_kinematics, lift_pitch_roll};
use hrt1::{Trajectory, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> hrt1::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain = lift_pitch_roll();
    let truth = BaseConfig::new(rng.gen_range(0.2..0.6), rng.gen_range(-0.3..0.3), rng.gen_range(-0.5..0.5));

    let a: Vec<f64> = chain.joints.iter().map(|j| rng.gen_range(j.lower..j.upper)).collect();
    let b: Vec<f64> = a.iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
    let poses = (0..60)
        .map(|i| {
            let s = i as f64 / 59.0;
            let q: Vec<f64> = a
                .iter()
                .zip(&b)
                .zip(&chain.joints)
                .map(|((x, y), j)| (x + s * (y - x)).clamp(j.lower, j.upper))
                .collect();
            Ok(base_transform(&truth).compose(&forward_kinematics(&chain, &q)?))
        })
        .collect::<hrt1::Result<Vec<_>>>()?;
    let traj = Trajectory::new(BASE_FRAME, poses)?;

    // A table in front of the robot bounds where the base may go.
    let table: Vec<Vec3> = (0..900)
        .map(|k| Vec3::new(truth.x + 0.3 + 0.03 * (k / 30) as f64, truth.y - 0.45 + 0.03 * (k % 30) as f64, 0.3))
        .collect();

    let params = BaseOptParams::default();
    let waypoints = sample_waypoints(&traj, params.n_samples)?;
    let sol = optimize_base(&waypoints, &chain, &table, &params)?;
    println!("true base      x {:.4}  y {:.4}  theta {:.4}", truth.x, truth.y, truth.theta);
    println!("found base     x {:.4}  y {:.4}  theta {:.4}", sol.base.x, sol.base.y, sol.base.theta);
    println!("objective      {:.4e} (from {:.4e})", sol.report.objective_value, sol.initial_objective);
    println!("converged      {}", sol.report.converged);
    Ok(())
}
