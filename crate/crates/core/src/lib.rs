//! Learning data-sampling curricula over bins of training data: fixed-ratio grid
//! search, phase-wise pruned tree search and a contextual multi-arm bandit, run
//! against a pluggable trainee (in-process or over a line-delimited JSON protocol).

pub mod bandit;
pub mod cli;
pub mod config;
pub mod container;
pub mod error;
pub mod observer;
pub mod orchestrator;
pub mod policy;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod runner;
pub mod search;
pub mod trainee;
pub mod types;

pub use config::{RunConfig, Scale};
pub use error::{Error, Result};
pub use policy::CurriculumPolicy;
pub use report::RunReport;
pub use trainee::{Trainee, TraineeCheckpoint, TraineeFactory};
pub use types::{BinId, ObservationVector, SampleRef, Transition};
