//! One episode: spawn, observe, predict, close after the latency, optionally
//! regrasp once, then update the learner.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Scenario, ShapeChoice, WorldConfig};
use crate::learner::{AttemptFeedback, Learner};
use crate::pose::{orientation_loss, position_loss, total_loss, GraspPose, Vec3};
use crate::predictor::{featurize, forward, FeatureVector};
use crate::rng::{self, StreamRng};
use crate::sensing::{
    needs_adjustment, render_depth, sense_wrench, CameraModel, ContactSummary, DepthImage, NoiseModel, Wrench,
};
use crate::world::{
    actuate, execute_grasp, oracle_grasp_pose, step_object, AttemptOutcome, MotionPattern, ObjectState, Shape,
    Tolerances,
};
use crate::Result;

/// A configured simulated world for one scenario.
#[derive(Debug, Clone)]
pub struct World {
    pub scenario: Scenario,
    pub config: WorldConfig,
    pub camera: CameraModel,
    pub noise: NoiseModel,
    pub motion: MotionPattern,
    pub tolerances: Tolerances,
}

impl World {
    pub fn new(scenario: Scenario, config: WorldConfig, tau_threshold: f64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            scenario,
            camera: config.camera()?,
            noise: config.noise(),
            motion: config.motion(scenario),
            tolerances: Tolerances {
                r_pos: config.r_pos,
                r_ang: config.r_ang,
                tau_threshold,
            },
            config,
        })
    }

    /// Seeded object for episode `episode`. The same number of draws is made
    /// in every scenario so spawns line up across scenarios and speeds.
    pub fn spawn(&self, seed: u64, stream: &str, episode: usize) -> ObjectState {
        let mut r = rng::stream(seed, stream, episode as u64);
        let c = &self.config;
        let h = c.workspace_half_extent;
        let x = h * (2.0 * r.random::<f64>() - 1.0);
        let y = h * (2.0 * r.random::<f64>() - 1.0);
        let kind_draw: f64 = r.random();
        let size = c.size_min + (c.size_max - c.size_min) * r.random::<f64>();
        let heading = std::f64::consts::TAU * r.random::<f64>();
        let phase: f64 = r.random();

        let sphere = match c.shape {
            ShapeChoice::Sphere => true,
            ShapeChoice::Box => false,
            ShapeChoice::Mixed => kind_draw < 0.5,
        };
        let shape = if sphere {
            Shape::Sphere { radius: size }
        } else {
            Shape::Box {
                half_extents: Vec3::new(size, size, size),
            }
        };
        let mut state = ObjectState::at_rest(Vec3::new(x, y, shape.rest_height()), shape);
        let direction = Vec3::new(heading.cos(), heading.sin(), 0.0);
        match self.motion {
            MotionPattern::Static => {}
            MotionPattern::Linear { speed } => {
                let heading = c.linear_heading.unwrap_or(heading);
                state.linear_velocity = Vec3::new(heading.cos(), heading.sin(), 0.0) * speed;
            }
            MotionPattern::Sliding { speed, change_interval } => {
                state.linear_velocity = direction * speed;
                state.since_redraw = phase * change_interval;
            }
            MotionPattern::Rotating { rate } => state.angular_velocity = Vec3::new(0.0, 0.0, rate),
        }
        state
    }

    /// Integrate for `duration` seconds in whole `dt` steps.
    pub fn advance<R: Rng + ?Sized>(&self, state: &ObjectState, duration: f64, rng: &mut R) -> ObjectState {
        let steps = (duration / self.config.dt).round() as usize;
        (0..steps).fold(*state, |s, _| step_object(&s, &self.motion, self.config.dt, rng))
    }

    pub fn observe<R: Rng + ?Sized>(&self, object: &ObjectState, wrench: Wrench, rng: &mut R) -> Observation {
        let depth = render_depth(std::slice::from_ref(object), &self.camera, &self.noise, rng);
        let features = featurize(&depth, &wrench, object);
        Observation {
            depth,
            wrench,
            object: *object,
            features,
        }
    }

    /// Wrist reading with nothing in the gripper.
    pub fn idle_wrench<R: Rng + ?Sized>(&self, rng: &mut R) -> Wrench {
        sense_wrench(
            ContactSummary {
                reference: Vec3::ZERO,
                contacts: &[],
            },
            &self.noise,
            rng,
        )
    }
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub depth: DepthImage,
    pub wrench: Wrench,
    pub object: ObjectState,
    pub features: FeatureVector,
}

/// Per-episode random streams, keyed by episode index so that learners and
/// scenarios see aligned randomness.
pub struct EpisodeStreams {
    pub motion: StreamRng,
    pub sense: StreamRng,
    pub actuate: StreamRng,
    pub contact: StreamRng,
    pub learner: StreamRng,
}

impl EpisodeStreams {
    pub fn new(seed: u64, episode: usize) -> Self {
        let e = episode as u64;
        Self {
            motion: rng::stream(seed, "motion", e),
            sense: rng::stream(seed, "sense", e),
            actuate: rng::stream(seed, "actuate", e),
            contact: rng::stream(seed, "contact", e),
            learner: rng::stream(seed, "learner", e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub position: f64,
    pub orientation: f64,
    pub pose: f64,
    pub success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub predicted: GraspPose,
    pub executed: GraspPose,
    pub oracle: GraspPose,
    pub success: bool,
    pub position_error: f64,
    pub orientation_error: f64,
    pub stability: f64,
    pub quality: f64,
    pub contacts: usize,
    pub wrench: Wrench,
    pub success_prob: f64,
    pub losses: Losses,
    pub pseudo_label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub shape: Shape,
    pub speed: f64,
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSummary {
    pub min_depth: f64,
    pub mean_depth: f64,
    pub wrench: Wrench,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<Vec<f64>>,
}

/// Top-level fields describe the final attempt; `attempts` holds all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub object: ObjectSummary,
    pub observation: ObservationSummary,
    pub predicted: GraspPose,
    pub executed: GraspPose,
    pub oracle: GraspPose,
    pub success: bool,
    pub retries: u32,
    pub position_error: f64,
    pub orientation_error: f64,
    pub stability: f64,
    pub quality: f64,
    pub wrench: Wrench,
    pub success_prob: f64,
    pub losses: Losses,
    pub pseudo_label: bool,
    pub attempts: Vec<AttemptRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EpisodeOptions {
    pub log_observations: bool,
    pub log_wall_time: bool,
}

struct Attempt {
    features: FeatureVector,
    predicted: GraspPose,
    executed: GraspPose,
    oracle: GraspPose,
    outcome: AttemptOutcome,
    success_prob: f64,
}

fn summarize_observation(obs: &Observation, keep_depth: bool) -> ObservationSummary {
    let d = &obs.depth.depths;
    ObservationSummary {
        min_depth: obs.depth.min_depth(),
        mean_depth: d.iter().sum::<f64>() / d.len() as f64,
        wrench: obs.wrench,
        depth: keep_depth.then(|| d.clone()),
    }
}

/// Run episode `index` and apply the learner's updates. Grasp failures are
/// recorded outcomes, so errors only arise from internal shape mismatches.
pub fn run_episode(
    learner: &mut Learner,
    world: &World,
    seed: u64,
    index: usize,
    options: EpisodeOptions,
) -> Result<EpisodeRecord> {
    let started = options.log_wall_time.then(Instant::now);
    let mut streams = EpisodeStreams::new(seed, index);
    let spawned = world.spawn(seed, "spawn", index);
    let mut state = world.advance(&spawned, world.config.observe_after, &mut streams.motion);
    let mut wrench = world.idle_wrench(&mut streams.sense);

    let first_obs = world.observe(&state, wrench, &mut streams.sense);
    let observation = summarize_observation(&first_obs, options.log_observations);
    let object = ObjectSummary {
        shape: state.shape,
        speed: state.speed(),
        position: state.position,
        velocity: state.linear_velocity,
    };

    let mut attempts: Vec<Attempt> = Vec::with_capacity(2);
    let mut obs = first_obs;
    loop {
        let out = forward(&learner.params, &obs.features)?;
        let predicted = out.pose();
        let c = &world.config;
        let executed = actuate(
            &predicted,
            c.actuation_position_sigma,
            c.actuation_angle_sigma,
            &mut streams.actuate,
        );
        let closure = world.advance(&state, c.latency, &mut streams.motion);
        let oracle = oracle_grasp_pose(&closure, c.gripper.approach_offset);
        let outcome = execute_grasp(
            &executed,
            &closure,
            &world.tolerances,
            &c.gripper,
            &world.noise,
            &mut streams.contact,
        );
        let retry = attempts.is_empty() && needs_adjustment(outcome.stability, world.tolerances.tau_threshold);
        wrench = outcome.wrench;
        attempts.push(Attempt {
            features: obs.features,
            predicted,
            executed,
            oracle,
            outcome,
            success_prob: out.success_prob,
        });
        if !retry {
            break;
        }
        state = closure;
        obs = world.observe(&state, wrench, &mut streams.sense);
    }

    let weights = learner.hyper.weights();
    let mut records = Vec::with_capacity(attempts.len());
    for a in &attempts {
        let labelled = learner.learn(
            &AttemptFeedback {
                input: &a.features,
                executed_pose: a.executed,
                outcome: &a.outcome,
                episode: index,
            },
            &mut streams.learner,
        )?;
        let feedback = if a.outcome.success { 1.0 } else { 0.0 };
        records.push(AttemptRecord {
            predicted: a.predicted,
            executed: a.executed,
            oracle: a.oracle,
            success: a.outcome.success,
            position_error: a.outcome.position_error,
            orientation_error: a.outcome.orientation_error,
            stability: a.outcome.stability,
            quality: a.outcome.quality,
            contacts: a.outcome.contacts.len(),
            wrench: a.outcome.wrench,
            success_prob: a.success_prob,
            losses: Losses {
                position: position_loss(a.predicted.position, a.oracle.position),
                orientation: orientation_loss(a.predicted.orientation, a.oracle.orientation),
                pose: total_loss(&a.predicted, &a.oracle, weights),
                success: (a.success_prob - feedback).powi(2),
            },
            pseudo_label: labelled,
        });
    }

    let last = records.last().cloned().expect("at least one attempt");
    Ok(EpisodeRecord {
        index,
        object,
        observation,
        predicted: last.predicted,
        executed: last.executed,
        oracle: last.oracle,
        success: last.success,
        retries: (records.len() - 1) as u32,
        position_error: last.position_error,
        orientation_error: last.orientation_error,
        stability: last.stability,
        quality: last.quality,
        wrench: last.wrench,
        success_prob: last.success_prob,
        losses: last.losses,
        pseudo_label: records.iter().any(|r| r.pseudo_label),
        attempts: records,
        wall_time_ms: started.map(|t| t.elapsed().as_secs_f64() * 1e3),
    })
}
