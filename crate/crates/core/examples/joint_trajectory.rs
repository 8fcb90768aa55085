//! Solves a joint trajectory for a reachable end-effector path on the
//! Fetch-like arm, with a small obstacle cloud beside the path.
//!
//! Usage: cargo run --example joint_trajectory -- [frames]

use std::time::Instant;

use hrt1::geometry::BASE_FRAME;
use hrt1::joint_opt::{optimize_joint_trajectory, JointOptParams};
use hrt1::kinematics::{fetch_like, forward_kinematics};
use hrt1::{Trajectory, Vec3};

fn main() -> hrt1::Result<()> {
    let frames: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(120);
    let chain = fetch_like();
    let start = [0.2, 0.3, 0.4, -0.5, 1.2, 0.2, 0.6, 0.0];
    let end = [0.25, -0.4, 0.1, -0.2, 1.5, -0.3, 0.9, 0.4];

    let path: Vec<Vec<f64>> = (0..frames)
        .map(|i| {
            let s = i as f64 / (frames - 1).max(1) as f64;
            let u = s * s * (3.0 - 2.0 * s);
            start.iter().zip(&end).map(|(a, b)| a + u * (b - a)).collect()
        })
        .collect();
    let poses = path
        .iter()
        .map(|q| forward_kinematics(&chain, q))
        .collect::<hrt1::Result<Vec<_>>>()?;
    let reference = Trajectory::new(BASE_FRAME, poses)?;

    let obstacle: Vec<Vec3> = (0..200)
        .map(|k| Vec3::new(0.9 + 0.002 * (k % 20) as f64, -0.6, 0.2 + 0.01 * (k / 20) as f64))
        .collect();

    let params = JointOptParams::default();
    let t0 = Instant::now();
    let sol = optimize_joint_trajectory(&chain, &reference, &obstacle, &params, &start)?;
    let elapsed = t0.elapsed();

    let mut worst: f64 = 0.0;
    for (q, target) in sol.trajectory.q.iter().zip(reference.poses()) {
        let p = forward_kinematics(&chain, q)?;
        worst = worst.max((p.translation - target.translation).norm());
    }
    sol.trajectory.validate(&chain, 1e-8)?;
    println!("frames               {frames}");
    println!("solve time           {:.2} s", elapsed.as_secs_f64());
    println!("converged            {}", sol.report.converged);
    println!("outer iterations     {}", sol.report.iterations);
    println!("objective            {:.6e}", sol.report.objective_value);
    println!("kinematic residual   {:.3e}", sol.trajectory.dynamics_residual());
    println!("worst position error {:.3e} m", worst);
    Ok(())
}
