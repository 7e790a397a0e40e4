use proptest::prelude::*;

use robot_mirror::evaluation::nmae;
use robot_mirror::kinematics::{
    forward_kinematics, inverse_kinematics, Arm, BodyModel, IkConfig, JointAngles, Vec3, NUM_JOINTS,
};
use robot_mirror::vae::{loss, loss_and_grad, NormalizedPose, VaeParams};

fn dist(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn pose_in_limits() -> impl Strategy<Value = JointAngles> {
    let body = BodyModel::default();
    let ranges: Vec<_> = body.limits.iter().map(|r| r.min..=r.max).collect();
    ranges.prop_map(|v| JointAngles(v.try_into().unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bone_lengths_are_preserved(pose in pose_in_limits()) {
        let body = BodyModel::default();
        let kp = forward_kinematics(&pose, &body).unwrap();
        for arm in [&kp.left, &kp.right] {
            prop_assert!((dist(arm.shoulder, arm.elbow) - body.upper_arm).abs() < 1e-12);
            prop_assert!((dist(arm.elbow, arm.wrist) - body.forearm).abs() < 1e-12);
        }
    }

    #[test]
    fn swapped_blocks_mirror_the_body(pose in pose_in_limits()) {
        let body = BodyModel::default();
        let a = forward_kinematics(&pose, &body).unwrap();
        let b = forward_kinematics(&pose.mirrored(), &body).unwrap();
        let flip = |p: Vec3| [-p[0], p[1], p[2]];
        for (x, y) in [(a.left, b.right), (a.right, b.left)] {
            prop_assert!(dist(flip(x.shoulder), y.shoulder) < 1e-12);
            prop_assert!(dist(flip(x.elbow), y.elbow) < 1e-12);
            prop_assert!(dist(flip(x.wrist), y.wrist) < 1e-12);
        }
    }

    #[test]
    fn nmae_is_symmetric_and_monotone(
        a in pose_in_limits(),
        b in pose_in_limits(),
        j in 0..NUM_JOINTS,
        extra in 0.0f64..10.0,
    ) {
        let ranges = BodyModel::default().ranges();
        let ab = nmae(&a, &b, &ranges).unwrap();
        prop_assert_eq!(ab, nmae(&b, &a, &ranges).unwrap());
        prop_assert_eq!(nmae(&a, &a, &ranges).unwrap(), 0.0);
        let mut c = b;
        c.0[j] += if b.0[j] >= a.0[j] { extra } else { -extra };
        prop_assert!(nmae(&a, &c, &ranges).unwrap() >= ab);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ik_reaches_forward_kinematics_targets(pose in pose_in_limits(), right in any::<bool>(), seed in any::<u64>()) {
        let body = BodyModel::default();
        let arm = if right { Arm::Right } else { Arm::Left };
        // only the solved arm's first four joints move
        let mut p = body.rest_pose();
        for k in 0..4 {
            p.0[arm.offset() + k] = pose.0[arm.offset() + k];
        }
        let kp = forward_kinematics(&p, &body).unwrap();
        let target = kp.arm(arm).wrist;
        let cfg = IkConfig { restarts: 4, ..IkConfig::default() };
        let sol = inverse_kinematics(target, arm, &body, &cfg, seed);
        prop_assert!(sol.is_some());
        let sol = sol.unwrap();
        prop_assert!(body.within_limits(&sol));
        let got = forward_kinematics(&sol, &body).unwrap().arm(arm).wrist;
        prop_assert!(dist(got, target) <= cfg.tolerance, "miss {}", dist(got, target));
        let rest = body.rest_pose();
        prop_assert_eq!(sol.arm(arm.other()), rest.arm(arm.other()));
    }

    #[test]
    fn vae_gradient_matches_finite_differences(
        seed in any::<u64>(),
        shift in prop::collection::vec(-0.3f64..0.3, 182),
        xs in prop::collection::vec(-0.9f64..0.9, 10..=40),
        eta in prop::collection::vec(-2.0f64..2.0, 8),
        beta in 0.0f64..2.0,
    ) {
        let mut p = VaeParams::init(seed);
        let flat: Vec<f64> = p.to_flat().iter().zip(&shift).map(|(w, s)| w + s).collect();
        p.set_flat(&flat);
        let batch: Vec<NormalizedPose> = xs
            .chunks_exact(10)
            .map(|c| NormalizedPose(c.try_into().unwrap()))
            .collect();
        let noise: Vec<[f64; 2]> = (0..batch.len()).map(|i| [eta[2 * i], eta[2 * i + 1]]).collect();
        let (_, g) = loss_and_grad(&p, &batch, &noise, beta);
        let g = g.to_flat();
        let h = 1e-5;
        for i in 0..flat.len() {
            let mut f = flat.clone();
            let mut q = p.clone();
            f[i] += h;
            q.set_flat(&f);
            let lp = loss(&q, &batch, &noise, beta);
            f[i] -= 2.0 * h;
            q.set_flat(&f);
            let lm = loss(&q, &batch, &noise, beta);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
            prop_assert!(rel < 1e-4, "param {}: analytic {} fd {}", i, g[i], fd);
        }
    }
}
