use std::io;

use thiserror::Error;

use crate::scenario::ScenarioViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {}", format_violations(.0))]
    InvalidScenario(Vec<ScenarioViolation>),

    #[error("task id {0} is out of range")]
    InvalidTask(usize),

    #[error("skill {skill} has no observation sequences to fit")]
    EmptySkillSequence { skill: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{model} fitting diverged at iteration {iteration}: loss is {loss}")]
    NonFiniteLoss {
        model: &'static str,
        iteration: usize,
        loss: f64,
    },

    #[error("{model} produced a non-finite gain for task {task}")]
    NonFiniteGain { model: String, task: usize },

    #[error("model does not match scenario: {0}")]
    ModelMismatch(String),

    #[error("wilcoxon test needs two samples of equal length >= 10 (got {left} and {right})")]
    InsufficientPairs { left: usize, right: usize },

    #[error("missing input: {0}")]
    Missing(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_violations(v: &[ScenarioViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
