//! Learning strategies: self-supervised online updates, the frozen
//! supervised baseline and a simplified reward-gated baseline.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::pose::{GraspPose, LossWeights};
use crate::predictor::{grad_pose_loss, grad_success_objective, pose_objective, FeatureVector, ModelParams};
use crate::world::AttemptOutcome;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    pub eta: f64,
    pub lambda: f64,
    pub epsilon_explore: f64,
    pub pretrain_epochs: usize,
    /// Step size for the supervised pretraining passes.
    pub pretrain_eta: f64,
    /// Standard deviation of the reward baseline's head-weight perturbation.
    pub explore_sigma: f64,
    /// Zero the success-head weights before online learning starts.
    pub reset_success_head: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            lambda: crate::pose::DEFAULT_LAMBDA,
            epsilon_explore: 0.1,
            pretrain_epochs: 20,
            pretrain_eta: 1e-2,
            explore_sigma: 0.01,
            reset_success_head: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("hyperparams.eta must be > 0, got {}", self.eta)));
        }
        if !(self.pretrain_eta > 0.0 && self.pretrain_eta.is_finite()) {
            return Err(Error::Config(format!(
                "hyperparams.pretrain_eta must be > 0, got {}",
                self.pretrain_eta
            )));
        }
        LossWeights::new(self.lambda)?;
        if !(0.0..=1.0).contains(&self.epsilon_explore) {
            return Err(Error::Config(format!(
                "hyperparams.epsilon_explore must be in [0, 1], got {}",
                self.epsilon_explore
            )));
        }
        if !(self.explore_sigma >= 0.0) {
            return Err(Error::Config("hyperparams.explore_sigma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { lambda: self.lambda }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    #[serde(alias = "ssl")]
    SslOnline,
    #[serde(alias = "supervised")]
    SupervisedFrozen,
    #[serde(alias = "reward")]
    RewardBaseline,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [
        LearnerKind::SslOnline,
        LearnerKind::SupervisedFrozen,
        LearnerKind::RewardBaseline,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LearnerKind::SslOnline => "ssl_online",
            LearnerKind::SupervisedFrozen => "supervised_frozen",
            LearnerKind::RewardBaseline => "reward_baseline",
        }
    }

    /// Label used in tables and console output.
    pub fn display_name(&self) -> &'static str {
        match self {
            LearnerKind::SslOnline => "ssl_online",
            LearnerKind::SupervisedFrozen => "supervised_frozen",
            LearnerKind::RewardBaseline => "reward_baseline (simplified)",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssl" | "ssl_online" => Ok(LearnerKind::SslOnline),
            "supervised" | "supervised_frozen" => Ok(LearnerKind::SupervisedFrozen),
            "reward" | "reward_baseline" => Ok(LearnerKind::RewardBaseline),
            other => Err(Error::Config(format!(
                "unknown learner '{other}' (expected ssl|supervised|reward)"
            ))),
        }
    }
}

/// An executed pose promoted to a training target because its attempt succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub pose: GraspPose,
    pub episode: usize,
}

pub fn self_label(outcome: &AttemptOutcome, executed_pose: &GraspPose, episode: usize) -> Option<PseudoLabel> {
    outcome.success.then_some(PseudoLabel {
        pose: *executed_pose,
        episode,
    })
}

fn check_feedback(feedback: f64) -> Result<()> {
    if feedback == 0.0 || feedback == 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("feedback must be 0 or 1, got {feedback}")))
    }
}

/// In-place `θ ← θ − η ∇(S − feedback)²`.
pub fn ssl_step(params: &mut ModelParams, input: &FeatureVector, feedback: f64, eta: f64) -> Result<()> {
    check_feedback(feedback)?;
    if eta == 0.0 {
        return Ok(());
    }
    let g = grad_success_objective(params, input, feedback)?;
    params.step(&g, eta);
    Ok(())
}

pub fn ssl_update(params: &ModelParams, input: &FeatureVector, feedback: f64, eta: f64) -> Result<ModelParams> {
    let mut next = params.clone();
    ssl_step(&mut next, input, feedback, eta)?;
    Ok(next)
}

/// In-place pose-loss step towards `target` with step size `eta`.
pub fn pose_step(
    params: &mut ModelParams,
    input: &FeatureVector,
    target: &GraspPose,
    weights: LossWeights,
    eta: f64,
) -> Result<()> {
    if eta == 0.0 {
        return Ok(());
    }
    let g = grad_pose_loss(params, input, target, weights)?;
    params.step(&g, eta);
    Ok(())
}

pub fn pose_update(
    params: &ModelParams,
    input: &FeatureVector,
    label: &PseudoLabel,
    h: &Hyperparams,
) -> Result<ModelParams> {
    let mut next = params.clone();
    pose_step(&mut next, input, &label.pose, h.weights(), h.eta)?;
    Ok(next)
}

/// Mean pose loss over a labelled dataset.
pub fn dataset_loss(params: &ModelParams, dataset: &[(FeatureVector, GraspPose)], weights: LossWeights) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sum = 0.0;
    for (x, y) in dataset {
        sum += pose_objective(params, x, y, weights)?;
    }
    Ok(sum / dataset.len() as f64)
}

/// `pretrain_epochs` in-order passes of pose steps at `pretrain_eta`,
/// returning the parameters and the mean dataset loss before each epoch and
/// after the last one.
pub fn supervised_pretrain_with_history(
    params: &ModelParams,
    dataset: &[(FeatureVector, GraspPose)],
    h: &Hyperparams,
) -> Result<(ModelParams, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let weights = h.weights();
    let mut next = params.clone();
    let mut history = vec![dataset_loss(&next, dataset, weights)?];
    for _ in 0..h.pretrain_epochs {
        for (x, y) in dataset {
            pose_step(&mut next, x, y, weights, h.pretrain_eta)?;
        }
        history.push(dataset_loss(&next, dataset, weights)?);
    }
    Ok((next, history))
}

/// Set W_S to zero, leaving b_S and every other parameter as it is.
pub fn reset_success_head(params: &mut ModelParams) {
    let range = params.layout().success.0.range();
    params.values_mut()[range].fill(0.0);
}

pub fn supervised_pretrain(
    params: &ModelParams,
    dataset: &[(FeatureVector, GraspPose)],
    h: &Hyperparams,
) -> Result<ModelParams> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let weights = h.weights();
    let mut next = params.clone();
    for _ in 0..h.pretrain_epochs {
        for (x, y) in dataset {
            pose_step(&mut next, x, y, weights, h.pretrain_eta)?;
        }
    }
    Ok(next)
}

/// Reward-gated step: the success-objective step only when `feedback == 1`,
/// then with probability `epsilon_explore` Gaussian noise on the head weights.
pub fn reward_baseline_step<R: Rng + ?Sized>(
    params: &mut ModelParams,
    input: &FeatureVector,
    feedback: f64,
    h: &Hyperparams,
    rng: &mut R,
) -> Result<()> {
    check_feedback(feedback)?;
    if feedback == 1.0 {
        ssl_step(params, input, feedback, h.eta)?;
    }
    // The gate draw is unconditional so the stream stays aligned across settings.
    let explore = rng.random::<f64>() < h.epsilon_explore;
    if explore && h.explore_sigma > 0.0 {
        let noise = Normal::new(0.0, h.explore_sigma).map_err(|e| Error::Config(e.to_string()))?;
        let ranges = params.layout().head_weight_ranges();
        let values = params.values_mut();
        for range in ranges {
            for v in &mut values[range] {
                *v += noise.sample(rng);
            }
        }
    }
    Ok(())
}

pub fn reward_baseline_update<R: Rng + ?Sized>(
    params: &ModelParams,
    input: &FeatureVector,
    feedback: f64,
    h: &Hyperparams,
    rng: &mut R,
) -> Result<ModelParams> {
    let mut next = params.clone();
    reward_baseline_step(&mut next, input, feedback, h, rng)?;
    Ok(next)
}

/// What a learner sees after one grasp attempt.
#[derive(Debug, Clone)]
pub struct AttemptFeedback<'a> {
    pub input: &'a FeatureVector,
    pub executed_pose: GraspPose,
    pub outcome: &'a AttemptOutcome,
    pub episode: usize,
}

/// A learner owns its parameters and applies its strategy's updates.
#[derive(Debug, Clone)]
pub struct Learner {
    pub kind: LearnerKind,
    pub params: ModelParams,
    pub hyper: Hyperparams,
}

impl Learner {
    pub fn new(kind: LearnerKind, params: ModelParams, hyper: Hyperparams) -> Self {
        Self { kind, params, hyper }
    }

    /// Apply this strategy's update for one attempt; returns whether a
    /// pseudo-label was used.
    pub fn learn<R: Rng + ?Sized>(&mut self, attempt: &AttemptFeedback<'_>, rng: &mut R) -> Result<bool> {
        let feedback = if attempt.outcome.success { 1.0 } else { 0.0 };
        match self.kind {
            LearnerKind::SupervisedFrozen => Ok(false),
            LearnerKind::SslOnline => {
                let label = self_label(attempt.outcome, &attempt.executed_pose, attempt.episode);
                if let Some(label) = &label {
                    pose_step(
                        &mut self.params,
                        attempt.input,
                        &label.pose,
                        self.hyper.weights(),
                        self.hyper.eta,
                    )?;
                }
                ssl_step(&mut self.params, attempt.input, feedback, self.hyper.eta)?;
                Ok(label.is_some())
            }
            LearnerKind::RewardBaseline => {
                reward_baseline_step(&mut self.params, attempt.input, feedback, &self.hyper, rng)?;
                Ok(false)
            }
        }
    }
}
