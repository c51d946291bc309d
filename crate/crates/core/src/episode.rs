//! Per-attempt and per-episode records, plus JSONL persistence.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Condition;
use crate::scenario::TaskId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    /// 1-based step number.
    pub step: usize,
    pub task_id: TaskId,
    pub success: bool,
    /// Tracer predictions for every task at decision time.
    pub predicted_probs: Vec<f64>,
    /// Tracer ability estimates at decision time; absent for DKT.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ability_estimates: Option<Vec<f64>>,
    /// Teacher decision time, interactive sessions only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ModelPredictedMastery,
    StepCap,
    HumanStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub student_index: u64,
    pub rng_seed: u64,
    pub condition: Condition,
    pub records: Vec<AttemptRecord>,
    /// Ground-truth abilities before the first attempt and after every attempt.
    pub true_ability_trace: Vec<Vec<f64>>,
    pub stop_reason: StopReason,
    /// First step count at which every true ability reached the threshold;
    /// `None` when the episode ended first (censored).
    pub steps_to_true_mastery: Option<usize>,
}

impl EpisodeLog {
    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn tasks(&self) -> Vec<TaskId> {
        self.records.iter().map(|r| r.task_id).collect()
    }

    /// A stop decision (model or human) taken before the learner truly
    /// reached mastery. Hitting the step cap is never premature.
    pub fn premature(&self) -> bool {
        self.stop_reason != StopReason::StepCap && self.steps_to_true_mastery.is_none()
    }

    pub fn capped(&self) -> bool {
        self.stop_reason == StopReason::StepCap
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn append_jsonl<T: Serialize>(path: &Path, item: &T) -> Result<()> {
    let mut line = serde_json::to_vec(item)?;
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&line)?;
    f.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
