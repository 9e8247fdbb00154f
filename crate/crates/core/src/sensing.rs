//! Synthetic depth camera, gripper force/torque sensing and the wrench
//! stability metric.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::pose::Vec3;
use crate::world::{ContactPoint, ObjectState};

pub const DEFAULT_RESOLUTION: usize = 32;

/// Row-major depth grid in meters. Pixels without geometry read `far_value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub far_value: f64,
    pub depths: Vec<f64>,
}

impl DepthImage {
    pub fn filled(width: usize, height: usize, far_value: f64) -> Self {
        Self {
            width,
            height,
            far_value,
            depths: vec![far_value; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.depths[row * self.width + col]
    }

    pub fn min_depth(&self) -> f64 {
        self.depths.iter().copied().fold(self.far_value, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl Wrench {
    pub fn from_parts(force: Vec3, torque: Vec3) -> Self {
        Self {
            fx: force.x,
            fy: force.y,
            fz: force.z,
            tx: torque.x,
            ty: torque.y,
            tz: torque.z,
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.fx, self.fy, self.fz, self.tx, self.ty, self.tz]
    }

    pub fn force(self) -> Vec3 {
        Vec3::new(self.fx, self.fy, self.fz)
    }

    pub fn torque(self) -> Vec3 {
        Vec3::new(self.tx, self.ty, self.tz)
    }
}

/// Pinhole camera. `fov` is the full horizontal and vertical field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub position: Vec3,
    pub direction: Vec3,
    pub fov: f64,
    pub width: usize,
    pub height: usize,
    pub far_value: f64,
}

impl CameraModel {
    pub fn new(
        position: Vec3,
        direction: Vec3,
        fov: f64,
        width: usize,
        height: usize,
        far_value: f64,
    ) -> crate::Result<Self> {
        let direction = direction
            .normalized()
            .ok_or_else(|| crate::Error::Config("camera direction must be nonzero".into()))?;
        if !(fov > 0.0 && fov < std::f64::consts::PI) {
            return Err(crate::Error::Config(format!(
                "camera fov must be in (0, pi), got {fov}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(crate::Error::Config("camera resolution must be >= 1".into()));
        }
        if !(far_value > 0.0) {
            return Err(crate::Error::Config("camera far_value must be > 0".into()));
        }
        Ok(Self {
            position,
            direction,
            fov,
            width,
            height,
            far_value,
        })
    }

    /// Unit ray direction through the center of pixel `(row, col)`.
    pub fn pixel_ray(&self, row: usize, col: usize) -> Vec3 {
        let forward = self.direction;
        let hint = if forward.cross(Vec3::Y).norm() > 1e-6 {
            Vec3::Y
        } else {
            Vec3::X
        };
        let right = forward.cross(hint).normalized().unwrap_or(Vec3::X);
        let up = right.cross(forward);
        let half = (0.5 * self.fov).tan();
        let u = ((col as f64 + 0.5) / self.width as f64 * 2.0 - 1.0) * half;
        let v = (1.0 - (row as f64 + 0.5) / self.height as f64 * 2.0) * half;
        (forward + right * u + up * v).normalized().unwrap_or(forward)
    }
}

/// Per-component Gaussian sensor noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub depth_sigma: f64,
    pub wrench_sigma: f64,
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// Ray-cast every pixel against every object and keep the nearest hit.
///
/// Noise is drawn for every pixel (hit or not) so the stream position does not
/// depend on scene content; results are clamped to `(0, far_value]`.
pub fn render_depth<R: Rng + ?Sized>(
    objects: &[ObjectState],
    camera: &CameraModel,
    noise: &NoiseModel,
    rng: &mut R,
) -> DepthImage {
    let mut image = DepthImage::filled(camera.width, camera.height, camera.far_value);
    for row in 0..camera.height {
        for col in 0..camera.width {
            let ray = camera.pixel_ray(row, col);
            let hit = objects
                .iter()
                .filter_map(|o| o.ray_intersect(camera.position, ray).map(|h| h.distance))
                .fold(f64::INFINITY, f64::min);
            let n = gaussian(rng, noise.depth_sigma);
            let depth = if hit.is_finite() && hit <= camera.far_value {
                hit + n
            } else {
                camera.far_value
            };
            image.depths[row * camera.width + col] = depth.clamp(f64::MIN_POSITIVE, camera.far_value);
        }
    }
    image
}

/// `S_F = ‖F‖²` over all six wrench components.
pub fn stability_metric(f: &Wrench) -> f64 {
    f.fx * f.fx + f.fy * f.fy + f.fz * f.fz + f.tx * f.tx + f.ty * f.ty + f.tz * f.tz
}

/// Regrasp rule: strictly exceeding the threshold.
pub fn needs_adjustment(s_f: f64, tau_threshold: f64) -> bool {
    s_f > tau_threshold
}

/// Contacts seen by the wrist sensor; torques are taken about `reference`.
#[derive(Debug, Clone, Copy)]
pub struct ContactSummary<'a> {
    pub reference: Vec3,
    pub contacts: &'a [ContactPoint],
}

/// Net contact wrench plus per-axis noise. Six noise samples are always drawn.
pub fn sense_wrench<R: Rng + ?Sized>(summary: ContactSummary<'_>, noise: &NoiseModel, rng: &mut R) -> Wrench {
    let mut force = Vec3::ZERO;
    let mut torque = Vec3::ZERO;
    for c in summary.contacts {
        let f = c.normal * c.f_grip;
        force += f;
        torque += (c.location - summary.reference).cross(f);
    }
    let mut w = Wrench::from_parts(force, torque);
    w.fx += gaussian(rng, noise.wrench_sigma);
    w.fy += gaussian(rng, noise.wrench_sigma);
    w.fz += gaussian(rng, noise.wrench_sigma);
    w.tx += gaussian(rng, noise.wrench_sigma);
    w.ty += gaussian(rng, noise.wrench_sigma);
    w.tz += gaussian(rng, noise.wrench_sigma);
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::world::Shape;

    fn down_camera(res: usize) -> CameraModel {
        CameraModel::new(Vec3::ZERO, -Vec3::Z, 0.6, res, res, 2.0).unwrap()
    }

    /// Independent ray-sphere oracle: smallest positive root of
    /// |o + t d - c|² = r².
    fn sphere_oracle(o: Vec3, d: Vec3, c: Vec3, r: f64) -> Option<f64> {
        let oc = o - c;
        let b = oc.dot(d);
        let disc = b * b - (oc.norm_squared() - r * r);
        (disc >= 0.0).then(|| -b - disc.sqrt()).filter(|t| *t > 0.0)
    }

    #[test]
    fn empty_scene_is_far() {
        let cam = down_camera(8);
        let img = render_depth(&[], &cam, &NoiseModel::default(), &mut rng::stream(0, "t", 0));
        assert!(img.depths.iter().all(|d| *d == 2.0));
        assert_eq!(img.depths.len(), 64);
    }

    #[test]
    fn sphere_on_axis_center_pixel() {
        let cam = down_camera(33);
        let sphere = ObjectState::at_rest(Vec3::new(0.0, 0.0, -1.0), Shape::Sphere { radius: 0.1 });
        let img = render_depth(&[sphere], &cam, &NoiseModel::default(), &mut rng::stream(0, "t", 0));
        assert!((img.get(16, 16) - 0.9).abs() < 1e-12);

        // Off-center pixels of an even grid agree with the analytic oracle.
        let cam = down_camera(32);
        let img = render_depth(&[sphere], &cam, &NoiseModel::default(), &mut rng::stream(0, "t", 0));
        for (r, c) in [(16, 16), (15, 17), (13, 18), (0, 0)] {
            let ray = cam.pixel_ray(r, c);
            let expected = sphere_oracle(cam.position, ray, sphere.position, 0.1).unwrap_or(2.0);
            assert!((img.get(r, c) - expected).abs() < 1e-12, "pixel {r},{c}");
        }
    }

    #[test]
    fn render_is_deterministic_and_bounded() {
        let cam = down_camera(16);
        let noise = NoiseModel {
            depth_sigma: 0.5,
            wrench_sigma: 0.0,
        };
        let objs = [ObjectState::at_rest(
            Vec3::new(0.05, 0.0, -1.0),
            Shape::Sphere { radius: 0.2 },
        )];
        let a = render_depth(&objs, &cam, &noise, &mut rng::stream(3, "depth", 1));
        let b = render_depth(&objs, &cam, &noise, &mut rng::stream(3, "depth", 1));
        assert_eq!(a, b);
        assert!(a.depths.iter().all(|d| *d > 0.0 && *d <= 2.0));
    }

    #[test]
    fn stability_examples() {
        assert_eq!(stability_metric(&Wrench::default()), 0.0);
        let ones = Wrench {
            fx: 1.0,
            fy: 1.0,
            fz: 1.0,
            tx: 1.0,
            ty: 1.0,
            tz: 1.0,
        };
        assert_eq!(stability_metric(&ones), 6.0);
        let w = Wrench {
            fx: 3.0,
            fy: 4.0,
            ..Wrench::default()
        };
        assert_eq!(stability_metric(&w), 25.0);
    }

    #[test]
    fn adjustment_is_strict() {
        assert!(needs_adjustment(25.0, 10.0));
        assert!(!needs_adjustment(0.0, 10.0));
        assert!(!needs_adjustment(10.0, 10.0));
    }

    #[test]
    fn wrench_examples() {
        let quiet = NoiseModel::default();
        let none = ContactSummary {
            reference: Vec3::ZERO,
            contacts: &[],
        };
        assert_eq!(
            sense_wrench(none, &quiet, &mut rng::stream(0, "w", 0)),
            Wrench::default()
        );

        let c = ContactPoint {
            location: Vec3::new(0.1, -0.2, 0.3),
            normal: Vec3::new(0.0, 0.6, 0.8),
            f_grip: 5.0,
            dc: 1e-4,
        };
        let single = ContactSummary {
            reference: c.location,
            contacts: std::slice::from_ref(&c),
        };
        let w = sense_wrench(single, &quiet, &mut rng::stream(0, "w", 0));
        assert_eq!(w.force(), Vec3::new(0.0, 3.0, 4.0));
        assert_eq!(w.torque(), Vec3::ZERO);

        let noisy = NoiseModel {
            depth_sigma: 0.0,
            wrench_sigma: 0.3,
        };
        let a = sense_wrench(single, &noisy, &mut rng::stream(5, "w", 2));
        let b = sense_wrench(single, &noisy, &mut rng::stream(5, "w", 2));
        assert_eq!(a, b);
        assert_ne!(a, w);
    }

    #[test]
    fn camera_validation() {
        assert!(CameraModel::new(Vec3::ZERO, Vec3::ZERO, 0.5, 4, 4, 1.0).is_err());
        assert!(CameraModel::new(Vec3::ZERO, Vec3::Z, 3.5, 4, 4, 1.0).is_err());
        assert!(CameraModel::new(Vec3::ZERO, Vec3::Z, 0.5, 0, 4, 1.0).is_err());
    }
}
