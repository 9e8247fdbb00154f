//! Object kinematics, the grasp-execution oracle, contact synthesis and the
//! contact-integral grasp quality.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::pose::{geodesic_angle, GraspPose, UnitQuaternion, Vec3};
use crate::sensing::{sense_wrench, stability_metric, ContactSummary, NoiseModel, Wrench};

/// Top-down gripper: half turn about x, so the gripper z axis points at the table.
pub const TOP_DOWN: UnitQuaternion = UnitQuaternion::from_unit_unchecked(0.0, 1.0, 0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    Box { half_extents: Vec3 },
}

impl Shape {
    pub fn is_valid(&self) -> bool {
        match *self {
            Shape::Sphere { radius } => radius > 0.0 && radius.is_finite(),
            Shape::Box { half_extents: h } => h.x > 0.0 && h.y > 0.0 && h.z > 0.0 && h.is_finite(),
        }
    }

    /// Height of the center above a supporting table.
    pub fn rest_height(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Box { half_extents } => half_extents.z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    /// Outward surface normal in world coordinates.
    pub normal: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub position: Vec3,
    pub orientation: UnitQuaternion,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
    pub shape: Shape,
    /// Time since the last sliding direction change.
    pub since_redraw: f64,
}

impl ObjectState {
    pub fn at_rest(position: Vec3, shape: Shape) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::IDENTITY,
            linear_velocity: Vec3::ZERO,
            angular_velocity: Vec3::ZERO,
            shape,
            since_redraw: 0.0,
        }
    }

    pub fn speed(&self) -> f64 {
        self.linear_velocity.norm()
    }

    /// Nearest intersection along a unit-direction ray, if in front of `origin`.
    pub fn ray_intersect(&self, origin: Vec3, dir: Vec3) -> Option<RayHit> {
        match self.shape {
            Shape::Sphere { radius } => {
                let oc = origin - self.position;
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = if -b - sq > 1e-12 { -b - sq } else { -b + sq };
                (t > 1e-12).then(|| {
                    let p = origin + dir * t;
                    RayHit {
                        distance: t,
                        normal: (p - self.position) * (1.0 / radius),
                    }
                })
            }
            Shape::Box { half_extents } => {
                let inv = self.orientation.inverse();
                let o = inv.rotate(origin - self.position).to_array();
                let d = inv.rotate(dir).to_array();
                let h = half_extents.to_array();
                let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
                let mut axis = 0;
                let mut sign = 1.0;
                for i in 0..3 {
                    if d[i].abs() < 1e-15 {
                        if o[i].abs() > h[i] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (-h[i] - o[i]) / d[i];
                    let t2 = (h[i] - o[i]) / d[i];
                    let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                    if lo > t_near {
                        t_near = lo;
                        axis = i;
                        sign = -d[i].signum();
                    }
                    t_far = t_far.min(hi);
                }
                if t_near > t_far || t_near <= 1e-12 {
                    return None;
                }
                let mut n = [0.0; 3];
                n[axis] = sign;
                Some(RayHit {
                    distance: t_near,
                    normal: self.orientation.rotate(Vec3::from(n)),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionPattern {
    Static,
    /// Constant velocity of the given speed; the direction is fixed at spawn.
    Linear {
        speed: f64,
    },
    /// Horizontal velocity whose direction is redrawn every `change_interval` seconds.
    Sliding {
        speed: f64,
        change_interval: f64,
    },
    /// Spin in place about the vertical axis.
    Rotating {
        rate: f64,
    },
}

impl MotionPattern {
    pub fn speed(&self) -> f64 {
        match *self {
            MotionPattern::Linear { speed } | MotionPattern::Sliding { speed, .. } => speed,
            _ => 0.0,
        }
    }
}

/// One explicit Euler step. The static pattern is an exact identity.
pub fn step_object<R: Rng + ?Sized>(state: &ObjectState, pattern: &MotionPattern, dt: f64, rng: &mut R) -> ObjectState {
    if let MotionPattern::Static = pattern {
        return *state;
    }
    let mut next = *state;
    next.position = state.position + state.linear_velocity * dt;
    if state.angular_velocity != Vec3::ZERO {
        next.orientation = UnitQuaternion::from_rotation_vector(state.angular_velocity * dt).compose(state.orientation);
    }
    if let MotionPattern::Sliding { speed, change_interval } = *pattern {
        next.since_redraw = state.since_redraw + dt;
        if next.since_redraw >= change_interval - 1e-12 {
            next.since_redraw -= change_interval;
            let heading = rng.random_range(0.0..TAU);
            next.linear_velocity = Vec3::new(heading.cos(), heading.sin(), 0.0) * speed;
        }
    }
    next
}

/// Canonical top-down grasp: above the center by `approach_offset`, gripper
/// frame following the object orientation.
pub fn oracle_grasp_pose(state: &ObjectState, approach_offset: f64) -> GraspPose {
    GraspPose::new(
        state.position + Vec3::new(0.0, 0.0, approach_offset),
        state.orientation.compose(TOP_DOWN),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub location: Vec3,
    /// Direction the finger pushes on the object (inward surface normal).
    pub normal: Vec3,
    pub f_grip: f64,
    /// Patch measure carried by this point.
    pub dc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub r_pos: f64,
    pub r_ang: f64,
    pub tau_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GripperModel {
    pub approach_offset: f64,
    pub base_grip_force: f64,
    pub contact_points: usize,
    /// Side length of each square finger pad.
    pub patch_side: f64,
    pub grip_force_sigma: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            approach_offset: 0.02,
            base_grip_force: 10.0,
            contact_points: 8,
            patch_side: 0.02,
            grip_force_sigma: 0.0,
        }
    }
}

impl GripperModel {
    /// Area of both pads.
    pub fn total_patch_area(&self) -> f64 {
        2.0 * self.patch_side * self.patch_side
    }
}

/// Midpoint discretization of a square pad of side `side` centered at
/// `center`, spanned by unit axes `u` and `v`, into `n` cells.
pub fn patch_points(center: Vec3, u: Vec3, v: Vec3, side: f64, n: usize) -> Vec<(Vec3, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let rows = (1..=n)
        .take_while(|r| r * r <= n)
        .filter(|r| n.is_multiple_of(*r))
        .last()
        .unwrap_or(1);
    let cols = n / rows;
    let cell = side * side / n as f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..rows {
        for j in 0..cols {
            let a = ((i as f64 + 0.5) / rows as f64 - 0.5) * side;
            let b = ((j as f64 + 0.5) / cols as f64 - 0.5) * side;
            out.push((center + u * a + v * b, cell));
        }
    }
    out
}

/// Synthesize finger contacts for a closure at `grasp` on `state`.
///
/// Fingers close along the gripper x axis through the point `approach_offset`
/// below the gripper origin. Each pad touching the object contributes
/// `contact_points / 2` points pushing along the inward normal at the pad
/// center, with force `base × max(1 − e/r_pos, 0.1)` plus noise.
pub fn contact_forces<R: Rng + ?Sized>(
    grasp: &GraspPose,
    state: &ObjectState,
    gripper: &GripperModel,
    r_pos: f64,
    rng: &mut R,
) -> Vec<ContactPoint> {
    let oracle = oracle_grasp_pose(state, gripper.approach_offset);
    let error = (grasp.position - oracle.position).norm();
    let factor = (1.0 - error / r_pos).max(0.1);
    let mean_force = gripper.base_grip_force * factor;
    let noise = Normal::new(0.0, gripper.grip_force_sigma.max(0.0)).ok();

    let q = grasp.orientation;
    let (axis, u, v) = (q.rotate(Vec3::X), q.rotate(Vec3::Y), q.rotate(Vec3::Z));
    let mid = grasp.position + v * gripper.approach_offset;
    let per_pad = gripper.contact_points / 2;
    let dc_total = gripper.total_patch_area();
    let reach = 1.0;

    let mut contacts = Vec::with_capacity(gripper.contact_points);
    for side in [1.0, -1.0] {
        let origin = mid + axis * (side * reach);
        let Some(hit) = state.ray_intersect(origin, axis * -side) else {
            continue;
        };
        let center = origin + axis * (-side * hit.distance);
        for (location, _) in patch_points(center, u, v, gripper.patch_side, per_pad) {
            let jitter = match noise {
                Some(n) if gripper.grip_force_sigma > 0.0 => n.sample(rng),
                _ => 0.0,
            };
            contacts.push(ContactPoint {
                location,
                normal: -hit.normal,
                f_grip: (mean_force + jitter).max(0.0),
                dc: dc_total / gripper.contact_points as f64,
            });
        }
    }
    contacts
}

/// `Q(G) = Σ f_grip(c_i) dc_i`, the midpoint rule for the contact integral.
pub fn grasp_quality(contacts: &[ContactPoint]) -> f64 {
    contacts.iter().map(|c| c.f_grip * c.dc).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptOutcome {
    pub success: bool,
    pub position_error: f64,
    pub orientation_error: f64,
    pub contacts: Vec<ContactPoint>,
    pub wrench: Wrench,
    pub stability: f64,
    pub quality: f64,
}

/// Whether logged errors and stability satisfy the success criterion.
pub fn success_criterion(position_error: f64, orientation_error: f64, stability: f64, tol: &Tolerances) -> bool {
    position_error <= tol.r_pos && orientation_error <= tol.r_ang && stability <= tol.tau_threshold
}

/// Close the gripper at `grasp` on the object state at closure time.
pub fn execute_grasp<R: Rng + ?Sized>(
    grasp: &GraspPose,
    state_at_closure: &ObjectState,
    tol: &Tolerances,
    gripper: &GripperModel,
    noise: &NoiseModel,
    rng: &mut R,
) -> AttemptOutcome {
    let oracle = oracle_grasp_pose(state_at_closure, gripper.approach_offset);
    let position_error = (grasp.position - oracle.position).norm();
    let orientation_error = geodesic_angle(grasp.orientation, oracle.orientation);
    let geometric = position_error <= tol.r_pos && orientation_error <= tol.r_ang;
    let contacts = if geometric {
        contact_forces(grasp, state_at_closure, gripper, tol.r_pos, rng)
    } else {
        Vec::new()
    };
    let wrench = sense_wrench(
        ContactSummary {
            reference: grasp.position,
            contacts: &contacts,
        },
        noise,
        rng,
    );
    let stability = stability_metric(&wrench);
    AttemptOutcome {
        success: success_criterion(position_error, orientation_error, stability, tol),
        position_error,
        orientation_error,
        quality: grasp_quality(&contacts),
        contacts,
        wrench,
        stability,
    }
}

/// Perturb an intended pose by actuation noise (position per axis, orientation
/// as a small random rotation vector).
pub fn actuate<R: Rng + ?Sized>(intended: &GraspPose, position_sigma: f64, angle_sigma: f64, rng: &mut R) -> GraspPose {
    let mut draw = |sigma: f64| {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        z * sigma
    };
    let dp = Vec3::new(draw(position_sigma), draw(position_sigma), draw(position_sigma));
    let dr = Vec3::new(draw(angle_sigma), draw(angle_sigma), draw(angle_sigma));
    GraspPose::new(
        intended.position + dp,
        UnitQuaternion::from_rotation_vector(dr).compose(intended.orientation),
    )
}
