//! Knowledge-tracing simulation environment.
//!
//! Simulated learners follow a monotone Elo learning model. Three tracer
//! families (BKT, PFA, DKT) are fitted on random-choice practice data and
//! then drive closed-loop teaching episodes: each step picks the task with
//! the highest expected learning gain and the tracer decides when to stop.
//!
//! Module map:
//! - [`scenario`], [`episode`], [`tracer`]: curriculum, episode records, tracer contract
//! - [`elo`]: ground-truth simulated student
//! - [`bkt`], [`pfa`], [`dkt`]: the tracer families and their fitters
//! - [`policy`]: expected-gain task selection and stopping
//! - [`training`]: dataset generation, fitting, held-out accuracy
//! - [`experiment`], [`stats`], [`report`]: batch replication and reporting
//! - [`session`]: interactive teaching sessions driven by a human

pub mod bkt;
pub mod dkt;
pub mod elo;
pub mod episode;
pub mod error;
pub mod experiment;
pub mod model;
pub mod pfa;
pub mod policy;
pub mod report;
pub mod scenario;
pub mod seed;
pub mod session;
pub mod stats;
pub mod tracer;
pub mod training;

pub use bkt::{BktModel, BktParams, BktTracer};
pub use dkt::{DktParams, DktTracer};
pub use elo::EloStudent;
pub use episode::{AttemptRecord, EpisodeLog, StopReason};
pub use error::{Error, Result};
pub use experiment::{run_condition, run_episode, ConditionResult, Controller, EpisodeOutcome};
pub use model::{Condition, ModelSet, TrainedModel};
pub use pfa::{PfaParams, PfaTracer};
pub use policy::{BktGainMode, GainVector};
pub use scenario::{Scenario, SkillId, TaskId};
pub use tracer::{AnyTracer, Tracer};
pub use training::Dataset;
