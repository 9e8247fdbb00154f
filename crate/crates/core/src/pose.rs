//! Grasp poses, quaternion algebra and the pose losses.
//!
//! Quaternions are stored as `(w, x, y, z)`. Constructed unit quaternions are
//! reduced to the canonical hemisphere `w >= 0` (ties at `w == 0` are broken on
//! the first nonzero vector component) so that logs and comparisons are stable.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Raw quaternions at or below this norm fall back to the identity.
pub const QUATERNION_EPSILON: f64 = 1e-8;

/// Orientation weight used when the config does not override it.
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction; `None` for (near) zero vectors.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 1e-12).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

/// Result of [`normalize_quaternion`]; `fallback` marks a degenerate input
/// that was replaced by the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalized {
    pub quaternion: UnitQuaternion,
    pub fallback: bool,
}

/// Project a raw 4-vector onto the unit sphere in canonical sign.
pub fn normalize_quaternion(raw: [f64; 4]) -> Normalized {
    let norm = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(norm > QUATERNION_EPSILON) {
        return Normalized {
            quaternion: UnitQuaternion::IDENTITY,
            fallback: true,
        };
    }
    let q = raw.map(|c| c / norm);
    let flip = if q[0] != 0.0 {
        q[0] < 0.0
    } else {
        q[1..].iter().find(|c| **c != 0.0).is_some_and(|c| *c < 0.0)
    };
    let s = if flip { -1.0 } else { 1.0 };
    Normalized {
        quaternion: UnitQuaternion {
            w: s * q[0],
            x: s * q[1],
            y: s * q[2],
            z: s * q[3],
        },
        fallback: false,
    }
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Components that are already unit-norm and canonical.
    pub(crate) const fn from_unit_unchecked(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Normalizing constructor; degenerate input yields the identity.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        normalize_quaternion([w, x, y, z]).quaternion
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        match axis.normalized() {
            Some(a) => {
                let (s, c) = (0.5 * angle).sin_cos();
                UnitQuaternion::new(c, a.x * s, a.y * s, a.z * s)
            }
            None => UnitQuaternion::IDENTITY,
        }
    }

    /// Rotation by `|v|` radians about `v`.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        UnitQuaternion::from_axis_angle(v, v.norm())
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(self, other: UnitQuaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Hamilton product `self ⊗ rhs` (apply `rhs` first, then `self`).
    pub fn compose(self, rhs: UnitQuaternion) -> UnitQuaternion {
        let (a, b) = (self, rhs);
        UnitQuaternion::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    pub fn inverse(self) -> UnitQuaternion {
        UnitQuaternion::new(self.w, -self.x, -self.y, -self.z)
    }
}

impl Neg for UnitQuaternion {
    type Output = UnitQuaternion;
    /// Antipodal representative of the same rotation (not re-canonicalized).
    fn neg(self) -> UnitQuaternion {
        UnitQuaternion {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = String;
    fn try_from(a: [f64; 4]) -> Result<Self, String> {
        let n = normalize_quaternion(a);
        if n.fallback || a.iter().any(|c| !c.is_finite()) {
            return Err(format!("degenerate quaternion {a:?}"));
        }
        // Already-unit canonical input is kept bit-exact so logs roundtrip.
        let norm = a.iter().map(|c| c * c).sum::<f64>().sqrt();
        let flipped = n.quaternion.to_array().iter().zip(&a).any(|(q, r)| q * r < 0.0);
        if (norm - 1.0).abs() <= 1e-12 && !flipped {
            return Ok(UnitQuaternion {
                w: a[0],
                x: a[1],
                y: a[2],
                z: a[3],
            });
        }
        Ok(n.quaternion)
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub position: Vec3,
    pub orientation: UnitQuaternion,
}

impl GraspPose {
    pub fn new(position: Vec3, orientation: UnitQuaternion) -> Self {
        Self { position, orientation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
}

impl LossWeights {
    pub fn new(lambda: f64) -> crate::Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(crate::Error::Config(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA }
    }
}

/// Squared Euclidean distance.
pub fn position_loss(p: Vec3, target: Vec3) -> f64 {
    (p - target).norm_squared()
}

/// `1 - |<q, q*>|`, insensitive to the quaternion double cover.
pub fn orientation_loss(q: UnitQuaternion, target: UnitQuaternion) -> f64 {
    (1.0 - q.dot(target).abs()).clamp(0.0, 1.0)
}

pub fn total_loss(pose: &GraspPose, target: &GraspPose, weights: LossWeights) -> f64 {
    position_loss(pose.position, target.position)
        + weights.lambda * orientation_loss(pose.orientation, target.orientation)
}

/// Rotation angle between two orientations, in `[0, pi]`.
pub fn geodesic_angle(q: UnitQuaternion, target: UnitQuaternion) -> f64 {
    2.0 * q.dot(target).abs().clamp(0.0, 1.0).acos()
}

/// Gradient of [`total_loss`] with respect to the predicted position and the
/// raw (pre-normalization) quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseLossGradient {
    pub position: Vec3,
    pub raw_orientation: [f64; 4],
}

/// Analytic loss gradient. The orientation part chains through the
/// normalization Jacobian `(I - q qᵀ) / |r|`; degenerate raw quaternions have
/// a constant (identity) output and hence zero gradient.
pub fn loss_gradients(
    position: Vec3,
    raw_orientation: [f64; 4],
    target: &GraspPose,
    weights: LossWeights,
) -> PoseLossGradient {
    let d_position = (position - target.position) * 2.0;

    let norm = raw_orientation.iter().map(|c| c * c).sum::<f64>().sqrt();
    let mut d_raw = [0.0; 4];
    if norm > QUATERNION_EPSILON && weights.lambda != 0.0 {
        let q = raw_orientation.map(|c| c / norm);
        let t = target.orientation.to_array();
        let d: f64 = q.iter().zip(&t).map(|(a, b)| a * b).sum();
        // d/dq of -|d| is -sign(d) t; sign(0) taken as +1.
        let sign = if d < 0.0 { -1.0 } else { 1.0 };
        for i in 0..4 {
            d_raw[i] = -weights.lambda * sign * (t[i] - d * q[i]) / norm;
        }
    }
    PoseLossGradient {
        position: d_position,
        raw_orientation: d_raw,
    }
}

/// [`total_loss`] evaluated on a raw quaternion; the finite-difference target
/// for [`loss_gradients`].
pub fn total_loss_raw(position: Vec3, raw_orientation: [f64; 4], target: &GraspPose, weights: LossWeights) -> f64 {
    let pose = GraspPose::new(position, normalize_quaternion(raw_orientation).quaternion);
    total_loss(&pose, target, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalize_examples() {
        let n = normalize_quaternion([2.0, 0.0, 0.0, 0.0]);
        assert_eq!(n.quaternion.to_array(), [1.0, 0.0, 0.0, 0.0]);
        assert!(!n.fallback);

        let n = normalize_quaternion([0.0; 4]);
        assert_eq!(n.quaternion, UnitQuaternion::IDENTITY);
        assert!(n.fallback);

        let n = normalize_quaternion([1.0, 1.0, 1.0, 1.0]);
        assert_eq!(n.quaternion.to_array(), [0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn normalize_below_epsilon_falls_back() {
        assert!(normalize_quaternion([1e-9, 0.0, 0.0, 0.0]).fallback);
        assert!(!normalize_quaternion([1e-7, 0.0, 0.0, 0.0]).fallback);
        assert!(normalize_quaternion([f64::NAN, 0.0, 0.0, 0.0]).fallback);
    }

    #[test]
    fn canonical_sign() {
        let q = UnitQuaternion::new(-1.0, 0.5, 0.0, 0.0);
        assert!(q.w() > 0.0);
        let q = UnitQuaternion::new(0.0, -1.0, 0.0, 0.0);
        assert_eq!(q.to_array(), [0.0, 1.0, 0.0, 0.0]);
        let q = UnitQuaternion::new(0.0, 0.0, 0.0, -2.0);
        assert_eq!(q.to_array(), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let q = UnitQuaternion::new(
            0.0013927578769621757,
            -0.9999533948514028,
            0.006222692380717937,
            -0.0072,
        );
        let back: UnitQuaternion = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(back, q);
        let fixed: UnitQuaternion = serde_json::from_str("[0.0, -2.0, 0.0, 0.0]").unwrap();
        assert_eq!(fixed.to_array(), [0.0, 1.0, 0.0, 0.0]);
        assert!(serde_json::from_str::<UnitQuaternion>("[0.0, 0.0, 0.0, 0.0]").is_err());
    }

    #[test]
    fn position_loss_examples() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(position_loss(p, p), 0.0);
        assert_eq!(position_loss(Vec3::ZERO, Vec3::X), 1.0);
        assert_eq!(position_loss(Vec3::ZERO, Vec3::new(1.0, 2.0, 2.0)), 9.0);
    }

    #[test]
    fn orientation_loss_examples() {
        let q = UnitQuaternion::new(0.3, -0.2, 0.9, 0.1);
        assert!(close(orientation_loss(q, q), 0.0, 1e-15));
        let i = UnitQuaternion::IDENTITY;
        let x = UnitQuaternion::new(0.0, 1.0, 0.0, 0.0);
        assert_eq!(orientation_loss(i, x), 1.0);
        assert!(close(orientation_loss(q, -q), 0.0, 1e-15));
    }

    #[test]
    fn total_loss_examples() {
        let g = GraspPose::new(Vec3::new(0.1, 0.2, 0.3), UnitQuaternion::new(1.0, 2.0, 3.0, 4.0));
        assert!(close(total_loss(&g, &g, LossWeights { lambda: 3.0 }), 0.0, 1e-15));

        let a = GraspPose::new(Vec3::ZERO, UnitQuaternion::IDENTITY);
        let b = GraspPose::new(Vec3::X, UnitQuaternion::new(0.0, 1.0, 0.0, 0.0));
        assert_eq!(total_loss(&a, &b, LossWeights { lambda: 1.0 }), 2.0);
        assert_eq!(total_loss(&a, &b, LossWeights { lambda: 0.5 }), 1.5);
    }

    #[test]
    fn lambda_must_be_nonnegative() {
        assert!(LossWeights::new(-0.1).is_err());
        assert!(LossWeights::new(f64::INFINITY).is_err());
        assert!(LossWeights::new(0.0).is_ok());
    }

    #[test]
    fn geodesic_angle_examples() {
        let q = UnitQuaternion::new(0.3, -0.2, 0.9, 0.1);
        assert!(close(geodesic_angle(q, q), 0.0, 1e-7));
        assert!(close(geodesic_angle(q, -q), 0.0, 1e-7));
        let rz = UnitQuaternion::from_axis_angle(Vec3::Z, PI / 2.0);
        assert!(close(geodesic_angle(UnitQuaternion::IDENTITY, rz), PI / 2.0, 1e-12));
    }

    #[test]
    fn rotate_matches_axis_angle() {
        let rz = UnitQuaternion::from_axis_angle(Vec3::Z, PI / 2.0);
        let v = rz.rotate(Vec3::X);
        assert!(close(v.x, 0.0, 1e-15) && close(v.y, 1.0, 1e-15) && close(v.z, 0.0, 1e-15));
    }

    #[test]
    fn gradient_zero_at_target_position() {
        let g = GraspPose::new(Vec3::new(0.1, 0.2, 0.3), UnitQuaternion::new(1.0, 0.2, 0.0, 0.0));
        let grad = loss_gradients(g.position, [1.0, 0.3, 0.0, 0.1], &g, LossWeights::default());
        assert_eq!(grad.position, Vec3::ZERO);
    }

    #[test]
    fn lambda_zero_kills_orientation_gradient() {
        let g = GraspPose::new(Vec3::ZERO, UnitQuaternion::new(1.0, 0.2, 0.0, 0.0));
        let grad = loss_gradients(Vec3::X, [0.1, 0.3, -0.7, 0.1], &g, LossWeights { lambda: 0.0 });
        assert_eq!(grad.raw_orientation, [0.0; 4]);
    }

    #[test]
    fn degenerate_raw_has_zero_orientation_gradient() {
        let g = GraspPose::new(Vec3::ZERO, UnitQuaternion::new(0.0, 1.0, 0.0, 0.0));
        let grad = loss_gradients(Vec3::ZERO, [0.0; 4], &g, LossWeights::default());
        assert_eq!(grad.raw_orientation, [0.0; 4]);
    }
}
