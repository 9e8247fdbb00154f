use grasp_ssl::pose::{
    loss_gradients, normalize_quaternion, orientation_loss, position_loss, total_loss, total_loss_raw, GraspPose,
    LossWeights, UnitQuaternion, Vec3,
};
use grasp_ssl::sensing::{stability_metric, Wrench};
use grasp_ssl::world::{grasp_quality, ContactPoint};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn raw4() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0..1.0f64).prop_filter("away from zero", |r| r.iter().map(|c| c * c).sum::<f64>() > 1e-2)
}

fn unit() -> impl Strategy<Value = UnitQuaternion> {
    raw4().prop_map(|r| normalize_quaternion(r).quaternion)
}

fn negated(q: UnitQuaternion) -> [f64; 4] {
    q.to_array().map(|c| -c)
}

/// Dot product computed from raw components, without the crate's helpers.
fn raw_dot(a: [f64; 4], b: [f64; 4]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn orientation_loss_bounded_and_double_cover(r in raw4(), t in unit()) {
        let q = normalize_quaternion(r).quaternion;
        let minus = normalize_quaternion(r.map(|c| -c)).quaternion;
        let l = orientation_loss(q, t);
        prop_assert!((0.0..=1.0).contains(&l));
        prop_assert_eq!(l, orientation_loss(minus, t));
        prop_assert_eq!(l, orientation_loss(-q, t));
        prop_assert_eq!(l, orientation_loss(q, -t));
        prop_assert_eq!(l, orientation_loss(t, q));
        let oracle = 1.0 - raw_dot(negated(q), t.to_array()).abs();
        prop_assert!((l - oracle).abs() < 1e-15);
    }

    #[test]
    fn position_loss_symmetric(p in vec3(), t in vec3()) {
        prop_assert_eq!(position_loss(p, t), position_loss(t, p));
        prop_assert_eq!(position_loss(p, p), 0.0);
        if p != t {
            prop_assert!(position_loss(p, t) > 0.0);
        }
    }

    #[test]
    fn total_loss_monotone_in_lambda(p in vec3(), t in vec3(), q in unit(), s in unit(), a in 0.0..5.0f64, b in 0.0..5.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let g = GraspPose::new(p, q);
        let target = GraspPose::new(t, s);
        let l_lo = total_loss(&g, &target, LossWeights::new(lo).unwrap());
        let l_hi = total_loss(&g, &target, LossWeights::new(hi).unwrap());
        prop_assert!(l_lo <= l_hi);
    }

    #[test]
    fn normalization_idempotent(r in raw4()) {
        let once = normalize_quaternion(r).quaternion;
        let twice = normalize_quaternion(once.to_array()).quaternion;
        for (a, b) in once.to_array().iter().zip(twice.to_array()) {
            prop_assert!((a - b).abs() < 1e-15);
        }
        prop_assert!((once.norm() - 1.0).abs() < 1e-12);
        prop_assert!(once.w() >= 0.0);
    }

    #[test]
    fn stability_is_six_term_sum(c in prop::array::uniform6(-50.0..50.0f64), flips in prop::array::uniform6(any::<bool>())) {
        let w = Wrench { fx: c[0], fy: c[1], fz: c[2], tx: c[3], ty: c[4], tz: c[5] };
        let oracle = c[0].powi(2) + c[1].powi(2) + c[2].powi(2) + c[3].powi(2) + c[4].powi(2) + c[5].powi(2);
        prop_assert!((stability_metric(&w) - oracle).abs() <= 1e-12 * oracle.max(1.0));
        let s: Vec<f64> = c.iter().zip(flips).map(|(v, f)| if f { -v } else { *v }).collect();
        let flipped = Wrench { fx: s[0], fy: s[1], fz: s[2], tx: s[3], ty: s[4], tz: s[5] };
        prop_assert_eq!(stability_metric(&flipped), stability_metric(&w));
    }

    #[test]
    fn quality_additive_and_homogeneous(
        forces in prop::collection::vec((0.0..20.0f64, 1e-5..1e-3f64), 0..16),
        split in 0usize..16,
        k in 0.0..10.0f64,
    ) {
        let contacts: Vec<ContactPoint> = forces
            .iter()
            .map(|&(f, dc)| ContactPoint { location: Vec3::ZERO, normal: Vec3::X, f_grip: f, dc })
            .collect();
        let cut = split.min(contacts.len());
        let whole = grasp_quality(&contacts);
        let parts = grasp_quality(&contacts[..cut]) + grasp_quality(&contacts[cut..]);
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1.0));
        let scaled: Vec<ContactPoint> = contacts.iter().map(|c| ContactPoint { f_grip: k * c.f_grip, ..*c }).collect();
        prop_assert!((grasp_quality(&scaled) - k * whole).abs() <= 1e-12 * (k * whole).max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn loss_gradients_match_central_differences(p in vec3(), r in raw4(), t in vec3(), s in unit(), lambda in 0.0..3.0f64) {
        let target = GraspPose::new(t, s);
        let w = LossWeights::new(lambda).unwrap();
        let g = loss_gradients(p, r, &target, w);
        let h = 1e-6;
        let f = |p: Vec3, r: [f64; 4]| total_loss_raw(p, r, &target, w);
        let analytic_p = g.position.to_array();
        for i in 0..3 {
            let mut a = p.to_array();
            let mut b = p.to_array();
            a[i] += h;
            b[i] -= h;
            let num = (f(Vec3::new(a[0], a[1], a[2]), r) - f(Vec3::new(b[0], b[1], b[2]), r)) / (2.0 * h);
            prop_assert!((num - analytic_p[i]).abs() <= 1e-6 * (1.0 + num.abs()));
        }
        // |<q, t>| has a kink where the dot product vanishes.
        let q = normalize_quaternion(r).quaternion;
        prop_assume!(raw_dot(q.to_array(), s.to_array()).abs() > 1e-3);
        for i in 0..4 {
            let mut a = r;
            let mut b = r;
            a[i] += h;
            b[i] -= h;
            let num = (f(p, a) - f(p, b)) / (2.0 * h);
            prop_assert!((num - g.raw_orientation[i]).abs() <= 1e-6 * (1.0 + num.abs()));
        }
    }
}
