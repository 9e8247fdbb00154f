//! JSON run configuration. Unknown keys are rejected with their name.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::learner::{Hyperparams, LearnerKind};
use crate::pose::Vec3;
use crate::predictor::Architecture;
use crate::sensing::{CameraModel, NoiseModel, DEFAULT_RESOLUTION};
use crate::world::{GripperModel, MotionPattern};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Static,
    DynamicLinear,
    DynamicSliding,
    DynamicRotating,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Static,
        Scenario::DynamicLinear,
        Scenario::DynamicSliding,
        Scenario::DynamicRotating,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Static => "static",
            Scenario::DynamicLinear => "dynamic_linear",
            Scenario::DynamicSliding => "dynamic_sliding",
            Scenario::DynamicRotating => "dynamic_rotating",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown scenario '{s}' (expected static|dynamic_linear|dynamic_sliding|dynamic_rotating)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeChoice {
    Mixed,
    Sphere,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub dt: f64,
    /// Closure latency between prediction and gripper closure (seconds).
    pub latency: f64,
    /// Sim time from spawn to the first observation.
    pub observe_after: f64,
    /// Spawn positions are uniform in `[-h, h]²`.
    pub workspace_half_extent: f64,
    pub shape: ShapeChoice,
    pub size_min: f64,
    pub size_max: f64,
    /// Linear speed for the moving scenarios; `None` uses the scenario default.
    pub speed: Option<f64>,
    /// Direction of travel for linear motion in radians from +x; `None`
    /// draws a fresh heading every episode.
    pub linear_heading: Option<f64>,
    pub rotation_rate: f64,
    pub change_interval: f64,
    pub r_pos: f64,
    pub r_ang: f64,
    /// Fixed regrasp threshold; `None` calibrates it from static grasps.
    pub tau_threshold: Option<f64>,
    pub tau_calibration_factor: f64,
    pub calibration_grasps: usize,
    pub depth_sigma: f64,
    pub wrench_sigma: f64,
    pub actuation_position_sigma: f64,
    pub actuation_angle_sigma: f64,
    pub resolution: usize,
    pub camera_height: f64,
    pub fov: f64,
    pub far: f64,
    pub gripper: GripperModel,
}

pub const DEFAULT_SPEED: f64 = 0.15;

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            latency: 0.15,
            observe_after: 0.25,
            workspace_half_extent: 0.15,
            shape: ShapeChoice::Mixed,
            size_min: 0.035,
            size_max: 0.05,
            speed: None,
            linear_heading: Some(0.0),
            rotation_rate: 0.5,
            change_interval: 1.0,
            r_pos: 0.03,
            r_ang: 0.35,
            tau_threshold: None,
            tau_calibration_factor: 4.0,
            calibration_grasps: 100,
            depth_sigma: 0.002,
            wrench_sigma: 0.05,
            actuation_position_sigma: 0.008,
            actuation_angle_sigma: 0.05,
            resolution: DEFAULT_RESOLUTION,
            camera_height: 1.0,
            fov: 0.6,
            far: 1.5,
            gripper: GripperModel::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("world.{name} must be > 0, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("world.{name} must be >= 0, got {v}")))
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        positive("dt", self.dt)?;
        non_negative("latency", self.latency)?;
        non_negative("observe_after", self.observe_after)?;
        non_negative("workspace_half_extent", self.workspace_half_extent)?;
        positive("size_min", self.size_min)?;
        positive("size_max", self.size_max)?;
        if self.size_min > self.size_max {
            return Err(Error::Config("world.size_min must be <= world.size_max".into()));
        }
        if let Some(h) = self.linear_heading {
            if !h.is_finite() {
                return Err(Error::Config(format!("world.linear_heading must be finite, got {h}")));
            }
        }
        if let Some(s) = self.speed {
            non_negative("speed", s)?;
        }
        non_negative("rotation_rate", self.rotation_rate)?;
        positive("change_interval", self.change_interval)?;
        positive("r_pos", self.r_pos)?;
        positive("r_ang", self.r_ang)?;
        if let Some(t) = self.tau_threshold {
            non_negative("tau_threshold", t)?;
        }
        positive("tau_calibration_factor", self.tau_calibration_factor)?;
        if self.tau_threshold.is_none() && self.calibration_grasps == 0 {
            return Err(Error::Config(
                "world.calibration_grasps must be >= 1 without tau_threshold".into(),
            ));
        }
        non_negative("depth_sigma", self.depth_sigma)?;
        non_negative("wrench_sigma", self.wrench_sigma)?;
        non_negative("actuation_position_sigma", self.actuation_position_sigma)?;
        non_negative("actuation_angle_sigma", self.actuation_angle_sigma)?;
        if self.resolution == 0 {
            return Err(Error::Config("world.resolution must be >= 1".into()));
        }
        positive("camera_height", self.camera_height)?;
        positive("far", self.far)?;
        let g = &self.gripper;
        non_negative("gripper.approach_offset", g.approach_offset)?;
        non_negative("gripper.base_grip_force", g.base_grip_force)?;
        positive("gripper.patch_side", g.patch_side)?;
        non_negative("gripper.grip_force_sigma", g.grip_force_sigma)?;
        if g.contact_points < 2 || !g.contact_points.is_multiple_of(2) {
            return Err(Error::Config(
                "world.gripper.contact_points must be even and >= 2".into(),
            ));
        }
        self.camera()?;
        Ok(())
    }

    pub fn camera(&self) -> Result<CameraModel> {
        CameraModel::new(
            Vec3::new(0.0, 0.0, self.camera_height),
            -Vec3::Z,
            self.fov,
            self.resolution,
            self.resolution,
            self.far,
        )
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            depth_sigma: self.depth_sigma,
            wrench_sigma: self.wrench_sigma,
        }
    }

    pub fn motion(&self, scenario: Scenario) -> MotionPattern {
        let speed = self.speed.unwrap_or(DEFAULT_SPEED);
        match scenario {
            Scenario::Static => MotionPattern::Static,
            Scenario::DynamicLinear => MotionPattern::Linear { speed },
            Scenario::DynamicSliding => MotionPattern::Sliding {
                speed,
                change_interval: self.change_interval,
            },
            Scenario::DynamicRotating => MotionPattern::Rotating {
                rate: self.rotation_rate,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 32] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub rolling_window: usize,
    pub first_window: usize,
    pub final_window: usize,
    pub adaptation_rate: f64,
    pub adaptation_window: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            rolling_window: 50,
            first_window: 100,
            final_window: 100,
            adaptation_rate: 0.7,
            adaptation_window: 50,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rolling_window == 0 || self.first_window == 0 || self.final_window == 0 || self.adaptation_window == 0 {
            return Err(Error::Config("metrics windows must be >= 1".into()));
        }
        if !(self.adaptation_rate > 0.0 && self.adaptation_rate <= 1.0) {
            return Err(Error::Config(format!(
                "metrics.adaptation_rate must be in (0, 1], got {}",
                self.adaptation_rate
            )));
        }
        Ok(())
    }
}

/// Everything needed to reproduce one experiment, plus the lists used by
/// `compare` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub episodes: usize,
    pub seed: u64,
    pub learner: LearnerKind,
    pub hyperparams: Hyperparams,
    pub world: WorldConfig,
    pub model: ModelConfig,
    pub metrics: MetricsConfig,
    /// Static-scenario samples used for supervised pretraining.
    pub pretrain_samples: usize,
    pub log_observations: bool,
    pub log_wall_time: bool,
    pub seeds: Vec<u64>,
    pub learners: Vec<LearnerKind>,
    pub speeds: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::DynamicLinear,
            episodes: 500,
            seed: 0,
            learner: LearnerKind::SslOnline,
            hyperparams: Hyperparams::default(),
            world: WorldConfig::default(),
            model: ModelConfig::default(),
            metrics: MetricsConfig::default(),
            pretrain_samples: 256,
            log_observations: false,
            log_wall_time: false,
            seeds: (0..10).collect(),
            learners: LearnerKind::ALL.to_vec(),
            speeds: vec![0.0, 0.05, 0.1, 0.15, 0.2],
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be >= 1".into()));
        }
        if self.pretrain_samples == 0 {
            return Err(Error::Config("pretrain_samples must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.learners.is_empty() {
            return Err(Error::Config("learners must not be empty".into()));
        }
        if let Some(s) = self.speeds.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("speeds must be >= 0, got {s}")));
        }
        self.hyperparams.validate()?;
        self.world.validate()?;
        self.metrics.validate()?;
        self.architecture()?;
        Ok(())
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Architecture::new(
            self.world.resolution * self.world.resolution + crate::predictor::EXTRA_FEATURES,
            self.model.hidden.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
        assert_eq!(ScenarioConfig::default().architecture().unwrap().input, 1036);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ScenarioConfig::from_json(r#"{"episodes": 3, "bogus_key": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = ScenarioConfig::from_json(r#"{"world": {"latncy": 0.1}}"#).unwrap_err();
        assert!(err.to_string().contains("latncy"), "{err}");
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = ScenarioConfig::from_json(
            r#"{"scenario": "static", "learner": "supervised", "hyperparams": {"eta": 0.01}}"#,
        )
        .unwrap();
        assert_eq!(c.scenario, Scenario::Static);
        assert_eq!(c.learner, LearnerKind::SupervisedFrozen);
        assert_eq!(c.hyperparams.eta, 0.01);
        assert_eq!(c.hyperparams.lambda, 1.0);
        assert_eq!(c.world, WorldConfig::default());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"episodes": 0}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"scenario": "orbit"}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"world": {"dt": 0}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"speeds": [0.1, -1]}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"model": {"hidden": []}}"#).is_err());
    }

    #[test]
    fn roundtrip() {
        let c = ScenarioConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn scenario_names() {
        for s in Scenario::ALL {
            assert_eq!(s.as_str().parse::<Scenario>().unwrap(), s);
        }
        assert_eq!(WorldConfig::default().motion(Scenario::Static), MotionPattern::Static);
    }
}
