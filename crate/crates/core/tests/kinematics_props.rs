use std::f64::consts::PI;

use harvestplan::kinematics::*;
use proptest::prelude::*;

fn arm() -> (ScaraGeometry, JointLimits) {
    (ScaraGeometry::harvester(), JointLimits::harvester())
}

fn config_in(limits: &JointLimits) -> impl Strategy<Value = JointConfig> {
    let [a, b, c, d] = limits.joints().map(|j| j.range_lo..=j.range_hi);
    (a, b, c, d).prop_map(|(q1, q2, q3, q4)| JointConfig::new(q1, q2, q3, q4))
}

fn pose_close(a: &TargetPose, b: &TargetPose, tol: f64) -> bool {
    let dpsi = normalize_angle(a.psi - b.psi).abs();
    (a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol && (a.z - b.z).abs() < tol && dpsi < tol
}

/// Distance covered by the symmetric profile `v(t) = min(a·t, v_max, a·(T-t))`
/// over `[0, T]`, by the composite trapezoid rule.
fn profile_distance(v_max: f64, a: f64, total: f64) -> f64 {
    const STEPS: usize = 20_000;
    let h = total / STEPS as f64;
    let v = |t: f64| (a * t).min(v_max).min(a * (total - t)).max(0.0);
    let inner: f64 = (1..STEPS).map(|k| v(k as f64 * h)).sum();
    h * (inner + 0.5 * (v(0.0) + v(total)))
}

/// Shortest `T` whose profile covers `d`, by bisection.
fn integrated_time(spec: &JointSpec, d: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while profile_distance(spec.max_speed, spec.max_accel, hi) < d {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if profile_distance(spec.max_speed, spec.max_accel, mid) < d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ik_recovers_forward_pose(q in config_in(&JointLimits::harvester())) {
        let (g, l) = arm();
        let pose = forward_kinematics(&g, &q);
        let back = inverse_kinematics(&g, &l, &pose).expect("pose of an admissible config is reachable");
        prop_assert!(l.admits(&back));
        prop_assert!(pose_close(&forward_kinematics(&g, &back), &pose, 1e-9));
    }

    #[test]
    fn ik_solution_unique_up_to_branch(q in config_in(&JointLimits::harvester())) {
        let (g, l) = arm();
        let pose = forward_kinematics(&g, &q);
        let back = inverse_kinematics(&g, &l, &pose).unwrap();
        prop_assert!((back.q1 - q.q1).abs() < 1e-9);
        // one of at most two elbow branches
        prop_assert!((back.q3.abs() - q.q3.abs()).abs() < 1e-6);
    }

    #[test]
    fn ik_rejects_only_unreachable(x in -0.6f64..0.6, y in -0.6f64..0.6, z in -0.2f64..0.7, psi in -PI..PI) {
        let (g, l) = arm();
        let target = TargetPose::new(x, y, z, psi);
        if let Ok(q) = inverse_kinematics(&g, &l, &target) {
            prop_assert!(l.admits(&q));
            prop_assert!(pose_close(&forward_kinematics(&g, &q), &target, 1e-9));
        }
    }

    #[test]
    fn motion_time_monotone(d1 in 0.0f64..5.0, d2 in 0.0f64..5.0) {
        let l = JointLimits::harvester();
        for j in l.joints() {
            let (a, b) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(joint_motion_time(j, a) <= joint_motion_time(j, b));
        }
    }

    #[test]
    fn move_time_is_slowest_joint(a in config_in(&JointLimits::harvester()), b in config_in(&JointLimits::harvester())) {
        let l = JointLimits::harvester();
        let t = config_move_time(&l, &a, &b);
        let per: Vec<f64> = l
            .joints()
            .iter()
            .zip(a.as_array().iter().zip(b.as_array()))
            .map(|(j, (x, y))| joint_motion_time(j, (y - x).abs()))
            .collect();
        prop_assert!(per.iter().all(|&p| p <= t));
        prop_assert!(per.contains(&t));
        prop_assert_eq!(t, config_move_time(&l, &b, &a));
    }
}

#[test]
fn motion_time_continuous_at_switch_distance() {
    for j in JointLimits::harvester().joints() {
        let d = j.max_speed * j.max_speed / j.max_accel;
        let below = joint_motion_time(j, d * (1.0 - 1e-12));
        let at = joint_motion_time(j, d);
        let above = joint_motion_time(j, d * (1.0 + 1e-12));
        assert!((below - at).abs() < 1e-9 && (above - at).abs() < 1e-9);
        assert!((at - 2.0 * j.max_speed / j.max_accel).abs() < 1e-12);
    }
}

#[test]
fn motion_time_matches_integrated_profile() {
    let limits = JointLimits::harvester();
    for j in limits.joints() {
        let switch = j.max_speed * j.max_speed / j.max_accel;
        for frac in [0.01, 0.3, 0.99, 1.0, 1.01, 2.0, 7.5] {
            let d = switch * frac;
            let closed = joint_motion_time(j, d);
            let numeric = integrated_time(j, d);
            assert!((closed - numeric).abs() < 1e-6, "d={d}: {closed} vs {numeric}");
        }
    }
}
