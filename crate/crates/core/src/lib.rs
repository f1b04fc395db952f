//! Parameter-free online learning for strongly convex losses.
//!
//! A grid of SC-AdaGrad experts, each minimizing its own quadratic surrogate,
//! is combined by a tilted exponentially weighted meta learner. The
//! [`harness`] replays loss streams and checks every regret inequality of the
//! analysis round by round.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod environments;
pub mod error;
pub mod expert;
pub mod geometry;
pub mod harness;
pub mod meta;
pub mod output;
pub mod suite;
pub mod surrogate;

pub use config::{parse_config, ExperimentConfig, RawConfig};
pub use error::{Error, Result};
pub use geometry::{DecisionSet, DiagonalMatrix, ProblemConstants, RealVector};
pub use harness::{run_experiment, BoundReport, RunOutput};
pub use meta::{GridConfig, MetaState};
