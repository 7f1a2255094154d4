//! Three-lane highway simulator with a double DQN driving agent guarded by two
//! safety layers: a rule-based minimum-gap filter with a time-to-collision
//! fallback ladder, and a learned recurrent lookahead model that penalizes
//! actions whose predicted future states break the gap rule.
//!
//! Module map:
//!
//! - [`sim`]: vehicle dynamics, action semantics, traffic control, episodes
//! - [`affordance`]: the 20-component driving state and its normalization
//! - [`reward`]: shaped speed / lane / headway reward
//! - [`safety`]: gap rule, time to collision, fallback ladder, action filter
//! - [`neural`]: feedforward and recurrent networks, gradients, Adam, checkpoints
//! - [`agent`]: replay buffers, double-Q targets, the training loop
//! - [`lookahead`]: driving data, predictor training, horizon safety checks
//! - [`harness`]: the command-line workflows (train, evaluate, collect, ...)

pub mod affordance;
pub mod agent;
pub mod config;
pub mod error;
pub mod harness;
pub mod lookahead;
pub mod neural;
pub mod reward;
pub mod safety;
pub mod seeding;
pub mod sim;

pub use error::{Error, Result};
