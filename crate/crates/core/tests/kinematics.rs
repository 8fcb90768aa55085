use hrt1::kinematics::{
    fetch_like, forward_kinematics, lift_pitch_roll, pose_jacobian, robot_points, JointKind, JointSpec, KinematicChain,
    LinkPoint,
};
use hrt1::{Pose, Rotation, Vec3};
use nalgebra::{Matrix4, Rotation3, Translation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unit(r: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        if v.norm() > 0.1 {
            return v.normalize();
        }
    }
}

/// Seven joints with random axes and offsets; the fourth is prismatic.
fn random_chain(r: &mut ChaCha8Rng) -> KinematicChain {
    let joints = (0..7)
        .map(|k| JointSpec {
            kind: if k == 3 { JointKind::Prismatic } else { JointKind::Revolute },
            axis: random_unit(r),
            origin: Pose::new(
                Rotation::from_axis_angle(&Unit::new_normalize(random_unit(r)), r.gen_range(-1.0..1.0)),
                Vec3::new(r.gen_range(-0.2..0.2), r.gen_range(-0.2..0.2), r.gen_range(0.0..0.3)),
            ),
            lower: -2.0,
            upper: 2.0,
            vel_limit: 1.0,
        })
        .collect();
    KinematicChain {
        name: "random".into(),
        base_frame: "base".into(),
        joints,
        ee_offset: Pose::from_translation(Vec3::new(0.05, 0.0, 0.1)),
        link_points: (0..7)
            .map(|k| vec![LinkPoint { xyz: Vec3::new(0.01 * k as f64, 0.02, -0.03), r: 0.04 }])
            .collect(),
    }
}

/// Homogeneous-matrix product of every joint's origin and motion, up to and
/// including joint `upto`.
fn matrix_chain(chain: &KinematicChain, q: &[f64], upto: usize) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    for (j, qj) in chain.joints.iter().zip(q).take(upto + 1) {
        m *= j.origin.matrix();
        m *= match j.kind {
            JointKind::Revolute => Rotation3::from_axis_angle(&Unit::new_normalize(j.axis), *qj).to_homogeneous(),
            JointKind::Prismatic => Translation3::from(j.axis * *qj).to_homogeneous(),
        };
    }
    m
}

fn random_q(chain: &KinematicChain, r: &mut ChaCha8Rng) -> Vec<f64> {
    chain.joints.iter().map(|j| r.gen_range(j.lower..=j.upper)).collect()
}

#[test]
fn fk_matches_the_matrix_chain_oracle() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let chain = random_chain(&mut r);
        for _ in 0..10 {
            let q = random_q(&chain, &mut r);
            let oracle = matrix_chain(&chain, &q, 6) * chain.ee_offset.matrix();
            let fk = forward_kinematics(&chain, &q).unwrap().matrix();
            assert!((fk - oracle).abs().max() < 1e-12, "{}", (fk - oracle).abs().max());
        }
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let chains = [random_chain(&mut r), fetch_like(), lift_pitch_roll()];
    let h = 1e-6;
    for i in 0..100 {
        let chain = &chains[i % chains.len()];
        let q = random_q(chain, &mut r);
        let jac = pose_jacobian(chain, &q).unwrap();
        assert_eq!(jac.ncols(), chain.dof());
        for k in 0..chain.dof() {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[k] += h;
            qm[k] -= h;
            let (fp, fm) = (forward_kinematics(chain, &qp).unwrap(), forward_kinematics(chain, &qm).unwrap());
            let lin = (fp.translation - fm.translation) / (2.0 * h);
            // Small relative rotation: angle·axis ≈ 2 sign(w) v.
            let drot = *fp.rotation.compose(&fm.rotation.inverse()).quaternion();
            let ang = drot.imag() * (2.0 * drot.w.signum()) / (2.0 * h);
            for a in 0..3 {
                assert!((jac[(a, k)] - lin[a]).abs() < 1e-7, "linear {i} {k}");
                assert!((jac[(3 + a, k)] - ang[a]).abs() < 1e-7, "angular {i} {k}");
            }
        }
    }
}

#[test]
fn robot_points_match_per_link_fk() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for chain in [random_chain(&mut r), fetch_like(), lift_pitch_roll()] {
        for _ in 0..10 {
            let q = random_q(&chain, &mut r);
            let pts = robot_points(&chain, &q).unwrap();
            let mut expected = Vec::new();
            for (link, lps) in chain.link_points.iter().enumerate() {
                let m = matrix_chain(&chain, &q, link);
                for lp in lps {
                    expected.push((m.transform_point(&lp.xyz.into()).coords, lp.r, link));
                }
            }
            assert_eq!(pts.len(), expected.len());
            for (p, (e, radius, link)) in pts.iter().zip(&expected) {
                assert!((p.position - e).norm() < 1e-10);
                assert_eq!((p.radius, p.link), (*radius, *link));
            }
        }
    }
}

#[test]
fn fk_is_lipschitz_in_small_steps() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for chain in [fetch_like(), lift_pitch_roll()] {
        // Reach bound: sum of joint offsets plus the tool offset, plus one
        // unit per prismatic joint.
        let reach: f64 = chain.joints.iter().map(|j| j.origin.translation.norm()).sum::<f64>()
            + chain.ee_offset.translation.norm()
            + chain.joints.iter().filter(|j| j.kind == JointKind::Prismatic).count() as f64;
        for _ in 0..200 {
            let q = random_q(&chain, &mut r);
            let dq: Vec<f64> = q.iter().map(|_| r.gen_range(-1e-4..1e-4) / (chain.dof() as f64).sqrt()).collect();
            let q2: Vec<f64> = q.iter().zip(&dq).map(|(a, b)| a + b).collect();
            let step = dq.iter().map(|v| v * v).sum::<f64>().sqrt();
            let moved = (forward_kinematics(&chain, &q2).unwrap().translation
                - forward_kinematics(&chain, &q).unwrap().translation)
                .norm();
            assert!(moved <= reach * step + 1e-15);
        }
    }
}

#[test]
fn wrong_length_configuration_is_rejected() {
    let chain = lift_pitch_roll();
    assert!(forward_kinematics(&chain, &[0.0, 0.0]).is_err());
    assert!(forward_kinematics(&chain, &[0.0, f64::NAN, 0.0]).is_err());
}
