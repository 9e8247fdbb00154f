//! Central finite differences over [`ModelParams`], and the seeded gradient
//! check used by tests and the `gradcheck` command.

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::{
    grad_pose_loss, grad_success_objective, init_params, pose_objective, success_objective, Architecture,
    FeatureVector, ModelParams,
};
use crate::pose::{GraspPose, LossWeights, UnitQuaternion, Vec3};
use crate::rng;
use crate::Result;

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Denominator floor for the relative error. Components smaller than this
/// are compared on an absolute scale, where central-difference rounding noise
/// (about `1e-16 / step`) would otherwise dominate.
pub const GRADIENT_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR)
}

/// Central-difference derivative of `objective` along one coordinate.
pub fn finite_diff_coordinate<F>(objective: &F, params: &mut ModelParams, index: usize, step: f64) -> f64
where
    F: Fn(&ModelParams) -> f64,
{
    let original = params.values()[index];
    params.values_mut()[index] = original + step;
    let plus = objective(params);
    params.values_mut()[index] = original - step;
    let minus = objective(params);
    params.values_mut()[index] = original;
    (plus - minus) / (2.0 * step)
}

/// Full central-difference gradient; cost is two objective calls per parameter.
pub fn finite_diff_gradient<F>(objective: F, params: &ModelParams, step: f64) -> super::Gradient
where
    F: Fn(&ModelParams) -> f64,
{
    let mut work = params.clone();
    let values = (0..params.len())
        .map(|i| finite_diff_coordinate(&objective, &mut work, i, step))
        .collect();
    super::Gradient { values }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    PoseLoss,
    SuccessObjective,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstComponent {
    pub instance: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub objective: Objective,
    pub instances: usize,
    pub components_checked: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub worst: Option<WorstComponent>,
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub architecture: Architecture,
    pub instances: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Trunk coordinates sampled per instance; `None` checks every parameter.
    /// Head parameters are always checked in full.
    pub trunk_samples: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::for_resolution(crate::sensing::DEFAULT_RESOLUTION),
            instances: 50,
            seed: 0,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            trunk_samples: Some(192),
        }
    }
}

/// One random `(params, input, target, λ, feedback)` draw.
pub struct Instance {
    pub params: ModelParams,
    pub input: FeatureVector,
    pub target: GraspPose,
    pub weights: LossWeights,
    pub feedback: f64,
}

pub fn random_instance(arch: &Architecture, seed: u64, index: usize) -> Result<Instance> {
    let mut r = rng::stream(seed, "gradcheck", index as u64);
    let mut params = init_params(arch, &mut r)?;
    for (_, _, b) in params.layout().named() {
        for i in b.range() {
            params.values_mut()[i] = r.random_range(-0.5..0.5);
        }
    }
    let image = arch.input.saturating_sub(super::EXTRA_FEATURES);
    let input = FeatureVector(
        (0..arch.input)
            .map(|i| {
                if i < image {
                    r.random_range(0.3..1.0)
                } else {
                    r.random_range(-1.0..1.0)
                }
            })
            .collect(),
    );
    let target = GraspPose::new(
        Vec3::new(
            r.random_range(-0.3..0.3),
            r.random_range(-0.3..0.3),
            r.random_range(-0.3..0.3),
        ),
        UnitQuaternion::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        ),
    );
    Ok(Instance {
        params,
        input,
        target,
        weights: LossWeights {
            lambda: r.random_range(0.1..2.0),
        },
        feedback: if r.random_bool(0.5) { 1.0 } else { 0.0 },
    })
}

fn coordinates(params: &ModelParams, trunk_samples: Option<usize>, seed: u64, index: usize) -> Vec<usize> {
    let layout = params.layout();
    let heads_start = layout.position.0.offset;
    match trunk_samples {
        None => (0..params.len()).collect(),
        Some(n) => {
            let mut r = rng::stream(seed, "gradcheck-coords", index as u64);
            let n = n.min(heads_start);
            let mut coords: Vec<usize> = sample(&mut r, heads_start, n).into_iter().collect();
            coords.sort_unstable();
            coords.extend(heads_start..params.len());
            coords
        }
    }
}

/// Analytic gradients of both objectives against central differences.
pub fn run_gradcheck(config: &GradCheckConfig) -> Result<[GradCheckReport; 2]> {
    let mut reports = [Objective::PoseLoss, Objective::SuccessObjective].map(|objective| GradCheckReport {
        objective,
        instances: config.instances,
        components_checked: 0,
        max_relative_error: 0.0,
        tolerance: config.tolerance,
        passed: true,
        worst: None,
    });

    for i in 0..config.instances {
        let inst = random_instance(&config.architecture, config.seed, i)?;
        let coords = coordinates(&inst.params, config.trunk_samples, config.seed, i);
        let analytic = [
            grad_pose_loss(&inst.params, &inst.input, &inst.target, inst.weights)?,
            grad_success_objective(&inst.params, &inst.input, inst.feedback)?,
        ];
        let pose = |p: &ModelParams| pose_objective(p, &inst.input, &inst.target, inst.weights).expect("shape checked");
        let success = |p: &ModelParams| success_objective(p, &inst.input, inst.feedback).expect("shape checked");
        let mut work = inst.params.clone();

        for (k, report) in reports.iter_mut().enumerate() {
            for &c in &coords {
                let numeric = if k == 0 {
                    finite_diff_coordinate(&pose, &mut work, c, config.step)
                } else {
                    finite_diff_coordinate(&success, &mut work, c, config.step)
                };
                let a = analytic[k].values[c];
                let err = relative_error(a, numeric);
                report.components_checked += 1;
                if report.worst.is_none() || err > report.max_relative_error {
                    report.max_relative_error = err;
                    report.worst = Some(WorstComponent {
                        instance: i,
                        index: c,
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    for r in &mut reports {
        r.passed = r.max_relative_error < r.tolerance;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_objective_has_zero_gradient() {
        let arch = Architecture::new(3, vec![2]).unwrap();
        let p = init_params(&arch, &mut rng::stream(0, "t", 0)).unwrap();
        let g = finite_diff_gradient(|_| 4.2, &p, DEFAULT_STEP);
        assert!(g.is_zero());
    }

    #[test]
    fn quadratic_objective() {
        let arch = Architecture::new(1, vec![1]).unwrap();
        let mut p = ModelParams::zeros(&arch).unwrap();
        p.values_mut()[0] = 3.0;
        let g = finite_diff_gradient(|p| 0.5 * p.values()[0].powi(2), &p, DEFAULT_STEP);
        assert!((g.values[0] - 3.0).abs() < 1e-6);
        assert!(g.values[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn full_check_on_small_network() {
        let config = GradCheckConfig {
            architecture: Architecture::new(20, vec![7, 5]).unwrap(),
            instances: 50,
            trunk_samples: None,
            ..GradCheckConfig::default()
        };
        let [pose, success] = run_gradcheck(&config).unwrap();
        assert!(pose.passed, "{pose:?}");
        assert!(success.passed, "{success:?}");
        let total = ModelParams::zeros(&config.architecture).unwrap().len() * 50;
        assert_eq!(pose.components_checked, total);
    }
}
