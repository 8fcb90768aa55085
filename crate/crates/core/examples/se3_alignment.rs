//! Moves a demonstrated gripper path into a new scene: one object moved
//! (single-object alignment), then a second object moved differently
//! (Gaussian blend between the two aligned copies).
//!
//! Usage: cargo run --example se3_alignment

use hrt1::geometry::{geodesic_angle, rot_z, CAMERA_FRAME};
use hrt1::traj_align::{apply_delta, blend_dual, blend_weights, object_delta, refine, BlendParams, RefineParams};
use hrt1::{Pose, Rotation, Trajectory, Vec3};

fn main() -> hrt1::Result<()> {
    // A pick-and-carry demo: approach, then sweep sideways while rising.
    let poses: Vec<Pose> = (0..80)
        .map(|i| {
            let s = i as f64 / 79.0;
            Pose::new(
                Rotation::from_axis_angle(&Vec3::y_axis(), 1.2 + 0.3 * s),
                Vec3::new(0.1 - 0.2 * s, 0.05 * (3.0 * s).sin(), 0.9 - 0.1 * s),
            )
        })
        .collect();
    let demo = Trajectory::new(CAMERA_FRAME, poses)?;

    // Object poses seen by the camera during the demo and at execution.
    let mug_demo = Pose::from_translation(Vec3::new(0.1, 0.0, 0.9));
    let mug_exe = Pose::new(rot_z(0.3), Vec3::new(0.15, -0.05, 0.92));
    let shelf_demo = Pose::from_translation(Vec3::new(-0.1, 0.1, 0.8));
    let shelf_exe = Pose::new(rot_z(-0.2), Vec3::new(-0.05, 0.2, 0.8));
    let d1 = object_delta(&mug_demo, &mug_exe);
    let d2 = object_delta(&shelf_demo, &shelf_exe);

    let cleaned = refine(&demo, &RefineParams::default());
    let single = apply_delta(&cleaned, &d1);
    let p = BlendParams::quarter_length(cleaned.len())?;
    let dual = blend_dual(&single, &apply_delta(&cleaned, &d2), &p)?;
    let w = blend_weights(cleaned.len(), &p);

    println!("demo frames {} -> {} after clean-up, sigma {:.1}", demo.len(), cleaned.len(), p.sigma());
    println!("{:>5} {:>6} {:>28} {:>28}", "frame", "alpha", "single-object xyz", "dual-object xyz");
    for i in (0..cleaned.len()).step_by(10).chain([cleaned.len() - 1]) {
        let (a, b) = (single.poses()[i].translation, dual.poses()[i].translation);
        println!(
            "{i:>5} {:>6.3}  ({:>7.4}, {:>7.4}, {:>7.4})  ({:>7.4}, {:>7.4}, {:>7.4})",
            w[i], a.x, a.y, a.z, b.x, b.y, b.z
        );
    }
    let last = cleaned.len() - 1;
    println!(
        "first pose follows the mug exactly: {}",
        dual.poses()[0] == single.poses()[0]
    );
    println!(
        "last pose rotation gap to the shelf-aligned copy: {:.4} rad",
        geodesic_angle(&dual.poses()[last].rotation, &apply_delta(&cleaned, &d2).poses()[last].rotation)
    );
    Ok(())
}
