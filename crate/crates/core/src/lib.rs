//! Self-supervised online grasp learning on a deterministic desk-scale simulator.
//!
//! The crate is organised bottom-up:
//!
//! - [`pose`]: grasp poses, quaternion algebra and the position/orientation losses.
//! - [`sensing`]: synthetic depth camera, force/torque sensing and the wrench stability metric.
//! - [`predictor`]: the fully connected grasp network with hand-written backpropagation.
//! - [`learner`]: self-supervised, frozen supervised and reward-gated learning strategies.
//! - [`world`]: object kinematics, the grasp-execution oracle and contact quality.
//! - [`harness`]: episode loop, experiments, metrics and log persistence.

pub mod error;
pub mod harness;
pub mod learner;
pub mod pose;
pub mod predictor;
pub mod rng;
pub mod sensing;
pub mod world;

pub use error::{Error, Result};
