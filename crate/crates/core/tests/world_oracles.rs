use grasp_ssl::pose::{UnitQuaternion, Vec3};
use grasp_ssl::rng;
use grasp_ssl::world::{grasp_quality, patch_points, step_object, ContactPoint, MotionPattern, ObjectState, Shape};

fn cube() -> Shape {
    Shape::Box {
        half_extents: Vec3::new(0.04, 0.04, 0.04),
    }
}

#[test]
fn euler_trajectory_matches_closed_form() {
    let mut s = ObjectState::at_rest(Vec3::new(-0.1, 0.05, 0.04), cube());
    let v = Vec3::new(0.13, -0.07, 0.0);
    s.linear_velocity = v;
    let start = s.position;
    let dt = 1e-3;
    let mut r = rng::stream(1, "motion", 0);
    for n in 1..=10_000u32 {
        s = step_object(&s, &MotionPattern::Linear { speed: v.norm() }, dt, &mut r);
        if n % 1000 == 0 {
            let t = n as f64 * dt;
            let exact = [start.x + v.x * t, start.y + v.y * t, start.z + v.z * t];
            for (a, b) in s.position.to_array().iter().zip(exact) {
                assert!((a - b).abs() < 1e-9, "step {n}: {a} vs {b}");
            }
        }
    }
    assert_eq!(s.linear_velocity, v);
}

#[test]
fn static_pattern_is_identity() {
    let mut s = ObjectState::at_rest(Vec3::new(0.02, -0.03, 0.04), cube());
    s.orientation = UnitQuaternion::from_axis_angle(Vec3::Z, 0.4);
    s.linear_velocity = Vec3::new(1.0, 2.0, 0.0);
    let mut r = rng::stream(1, "motion", 0);
    let mut next = s;
    for _ in 0..10_000 {
        next = step_object(&next, &MotionPattern::Static, 0.05, &mut r);
    }
    assert_eq!(next, s);
}

/// Smooth pad force profiles in pad coordinates `(a, b)` over `[-1/2, 1/2]²`.
fn profiles() -> Vec<(&'static str, Box<dyn Fn(f64, f64) -> f64>)> {
    vec![
        ("constant", Box::new(|_, _| 8.0)),
        ("tilted", Box::new(|a, b| 10.0 * (1.0 + 0.4 * a - 0.3 * b))),
        ("bump", Box::new(|a, b| 10.0 * (1.0 - 0.2 * (a * a + b * b)))),
        (
            "wave",
            Box::new(|a, b| 6.0 + (std::f64::consts::PI * a).cos() * 0.5 + 0.3 * b * a),
        ),
    ]
}

/// 100 × 100 midpoint quadrature over the pad, independent of the crate.
fn quadrature(side: f64, f: &dyn Fn(f64, f64) -> f64) -> f64 {
    let n = 100;
    let cell = side * side / (n * n) as f64;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let a = (i as f64 + 0.5) / n as f64 - 0.5;
            let b = (j as f64 + 0.5) / n as f64 - 0.5;
            sum += f(a, b) * cell;
        }
    }
    sum
}

fn discretized(side: f64, k: usize, f: &dyn Fn(f64, f64) -> f64) -> f64 {
    let contacts: Vec<ContactPoint> = patch_points(Vec3::ZERO, Vec3::X, Vec3::Y, side, k)
        .into_iter()
        .map(|(p, dc)| ContactPoint {
            location: p,
            normal: Vec3::Z,
            f_grip: f(p.x / side, p.y / side),
            dc,
        })
        .collect();
    grasp_quality(&contacts)
}

#[test]
fn quality_converges_to_quadrature() {
    let side = 0.02;
    for (name, f) in profiles() {
        let oracle = quadrature(side, f.as_ref());
        let k8 = discretized(side, 8, f.as_ref());
        let k64 = discretized(side, 64, f.as_ref());
        assert!((k8 - oracle).abs() / oracle < 0.01, "{name}: K=8 {k8} vs {oracle}");
        assert!((k64 - oracle).abs() / oracle < 0.01, "{name}: K=64 {k64} vs {oracle}");
        assert!((k8 - k64).abs() / k64 < 0.01, "{name}");
    }
}

#[test]
fn empty_contacts_have_zero_quality() {
    assert_eq!(grasp_quality(&[]), 0.0);
}
