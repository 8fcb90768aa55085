//! Maps a human-hand grasp onto the parallel-jaw gripper and onto the
//! articulated jaw through their shared surface labels.
//!
//! Usage: cargo run --example grasp_transfer

use hrt1::geometry::geodesic_angle;
use hrt1::grasp_transfer::{
    articulated_test_gripper, hand_to_gripper, parallel_jaw_gripper, synthetic_hand, GraspConfig, GraspTransfer,
};
use hrt1::{Pose, Rotation, Vec3};

fn main() -> hrt1::Result<()> {
    let hand = synthetic_hand();
    let hand_pose = Pose::new(
        Rotation::from_axis_angle(&Vec3::z_axis(), 0.7),
        Vec3::new(0.2, -0.1, 0.8),
    );
    let source = GraspConfig::rigid(hand_pose);
    // The gripper pose the hand grasp corresponds to, by construction.
    let expected = hand_pose.compose(&hand_to_gripper());

    for target in [parallel_jaw_gripper(), articulated_test_gripper()] {
        let transfer = GraspTransfer::new(&hand, &target)?;
        let init = GraspConfig {
            pose: hand_pose,
            joints: target.mid_joints(),
        };
        let out = transfer.transfer(&source, &init)?;
        let pose = out.config.pose;
        println!("target {:<16} pairs {:>3}", format!("`{}`", target.name), transfer.pairs().len());
        println!("  objective      {:.3e} -> {:.3e}", out.initial_objective, out.objective);
        println!(
            "  pose error     {:.3e} m, {:.3e} rad",
            (pose.translation - expected.translation).norm(),
            geodesic_angle(&pose.rotation, &expected.rotation)
        );
        if !out.config.joints.is_empty() {
            println!("  finger joints  {:?}", out.config.joints.iter().map(|j| format!("{j:.4}")).collect::<Vec<_>>());
        }
    }
    Ok(())
}
