//! Closed-loop teaching episodes and batch runs per condition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elo::EloStudent;
use crate::episode::{AttemptRecord, EpisodeLog, StopReason};
use crate::error::{Error, Result};
use crate::model::{Condition, ModelSet};
use crate::policy::{oracle_gains, select_task, tracer_gains, BktGainMode};
use crate::scenario::{Scenario, TaskId};
use crate::seed::{derive_seed, Domain};
use crate::stats::median;
use crate::tracer::{AnyTracer, Tracer};

/// Decision-making side of an episode: what it believes, what it would pick
/// and when it would stop. The student is passed in so the oracle can read
/// ground truth; tracer-driven teachers ignore it.
pub trait Teacher {
    fn condition(&self) -> Condition;
    fn reset(&mut self);
    fn predictions(&self, student: &EloStudent, s: &Scenario) -> Vec<f64>;
    fn ability_estimates(&self, student: &EloStudent) -> Option<Vec<f64>>;
    fn gains(&self, student: &EloStudent, s: &Scenario) -> Vec<f64>;
    fn wants_stop(&self, student: &EloStudent, s: &Scenario) -> bool;
    fn observe(&mut self, task: TaskId, success: bool);
}

/// A fitted tracer with its gain rule, or the ground-truth oracle.
#[derive(Debug, Clone)]
pub enum Controller {
    Tracer { tracer: AnyTracer, mode: BktGainMode },
    EloOracle,
}

impl Controller {
    pub fn for_condition(models: &ModelSet, c: Condition, mode: BktGainMode) -> Self {
        match models.tracer(c) {
            Some(tracer) => Controller::Tracer { tracer, mode },
            None => Controller::EloOracle,
        }
    }
}

impl Teacher for Controller {
    fn condition(&self) -> Condition {
        match self {
            Controller::Tracer { tracer, .. } => tracer.condition(),
            Controller::EloOracle => Condition::EloOracle,
        }
    }

    fn reset(&mut self) {
        if let Controller::Tracer { tracer, .. } = self {
            tracer.reset();
        }
    }

    fn predictions(&self, student: &EloStudent, s: &Scenario) -> Vec<f64> {
        match self {
            Controller::Tracer { tracer, .. } => tracer.predict(),
            Controller::EloOracle => student.task_success_probs(s),
        }
    }

    fn ability_estimates(&self, student: &EloStudent) -> Option<Vec<f64>> {
        match self {
            Controller::Tracer { tracer, .. } => tracer.ability_estimates(),
            Controller::EloOracle => Some(student.abilities().to_vec()),
        }
    }

    fn gains(&self, student: &EloStudent, s: &Scenario) -> Vec<f64> {
        match self {
            Controller::Tracer { tracer, mode } => tracer_gains(tracer, *mode),
            Controller::EloOracle => oracle_gains(student, s),
        }
    }

    fn wants_stop(&self, student: &EloStudent, s: &Scenario) -> bool {
        match self {
            Controller::Tracer { tracer, .. } => tracer.mastery_predicted(),
            Controller::EloOracle => student.true_mastery(s),
        }
    }

    fn observe(&mut self, task: TaskId, success: bool) {
        if let Controller::Tracer { tracer, .. } = self {
            tracer.update(task, success);
        }
    }
}

/// Episode under construction; shared by batch runs, replays and
/// interactive sessions.
#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub student_index: u64,
    pub student: EloStudent,
    pub records: Vec<AttemptRecord>,
    pub true_ability_trace: Vec<Vec<f64>>,
    pub steps_to_true_mastery: Option<usize>,
}

impl EpisodeState {
    pub fn new(s: &Scenario, student_index: u64, seed: u64) -> Self {
        let student = EloStudent::new(s, seed);
        let steps_to_true_mastery = student.true_mastery(s).then_some(0);
        Self {
            student_index,
            true_ability_trace: vec![student.abilities().to_vec()],
            student,
            records: Vec::new(),
            steps_to_true_mastery,
        }
    }

    pub fn steps(&self) -> usize {
        self.records.len()
    }

    /// One attempt: record the teacher's view, sample the outcome, move the
    /// student, then let the teacher observe.
    pub fn attempt<T: Teacher>(
        &mut self,
        teacher: &mut T,
        s: &Scenario,
        task: TaskId,
        decision_ms: Option<u64>,
    ) -> Result<bool> {
        s.check_task(task)?;
        let predicted_probs = teacher.predictions(&self.student, s);
        let ability_estimates = teacher.ability_estimates(&self.student);
        let success = self.student.sample_attempt(task, s);
        self.student.apply_update(task, success, s);
        teacher.observe(task, success);
        self.records.push(AttemptRecord {
            step: self.records.len() + 1,
            task_id: task,
            success,
            predicted_probs,
            ability_estimates,
            decision_ms,
        });
        self.true_ability_trace.push(self.student.abilities().to_vec());
        if self.steps_to_true_mastery.is_none() && self.student.true_mastery(s) {
            self.steps_to_true_mastery = Some(self.records.len());
        }
        Ok(success)
    }

    pub fn finish(self, condition: Condition, stop_reason: StopReason) -> EpisodeLog {
        EpisodeLog {
            student_index: self.student_index,
            rng_seed: self.student.seed(),
            condition,
            records: self.records,
            true_ability_trace: self.true_ability_trace,
            stop_reason,
            steps_to_true_mastery: self.steps_to_true_mastery,
        }
    }
}

/// Runs one closed-loop episode. The stop rule is checked before every
/// attempt, including the first, and once more after the last.
pub fn run_episode<T: Teacher>(
    teacher: &mut T,
    s: &Scenario,
    student_index: u64,
    seed: u64,
) -> Result<EpisodeLog> {
    teacher.reset();
    let mut ep = EpisodeState::new(s, student_index, seed);
    let stop_reason = loop {
        if teacher.wants_stop(&ep.student, s) {
            break StopReason::ModelPredictedMastery;
        }
        if ep.steps() == s.max_steps {
            break StopReason::StepCap;
        }
        let gains = teacher.gains(&ep.student, s);
        let choice = select_task(&gains, teacher.condition().as_str())?;
        ep.attempt(teacher, s, choice.chosen_task, None)?;
    };
    Ok(ep.finish(teacher.condition(), stop_reason))
}

/// Re-runs a logged episode with the logged task choices and stop point.
/// Outcomes come from the logged seed, so a faithful engine reproduces the
/// log exactly.
pub fn replay_episode<T: Teacher>(teacher: &mut T, s: &Scenario, log: &EpisodeLog) -> Result<EpisodeLog> {
    if log.records.len() > s.max_steps {
        return Err(Error::ModelMismatch(format!(
            "log has {} attempts, cap is {}",
            log.records.len(),
            s.max_steps
        )));
    }
    teacher.reset();
    let mut ep = EpisodeState::new(s, log.student_index, log.rng_seed);
    for r in &log.records {
        ep.attempt(teacher, s, r.task_id, r.decision_ms)?;
    }
    Ok(ep.finish(teacher.condition(), log.stop_reason))
}

/// Seed of evaluation episode `i`. Independent of the condition so that
/// episode `i` of every condition draws the same outcome stream.
pub fn episode_seed(master_seed: u64, i: u64) -> u64 {
    derive_seed(master_seed, Domain::EpisodeOutcomes, i)
}

/// One row of the per-episode table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub condition: Condition,
    pub steps_to_stop: usize,
    /// Empty when the episode ended before true mastery.
    pub steps_to_mastery: Option<usize>,
    pub premature: bool,
    pub capped: bool,
}

impl EpisodeOutcome {
    pub fn from_log(log: &EpisodeLog) -> Self {
        Self {
            seed: log.rng_seed,
            condition: log.condition,
            steps_to_stop: log.steps(),
            steps_to_mastery: log.steps_to_true_mastery,
            premature: log.premature(),
            capped: log.capped(),
        }
    }

    /// Steps to mastery with censored episodes counted as `max_steps + 1`.
    pub fn imputed_mastery(&self, max_steps: usize) -> usize {
        self.steps_to_mastery.unwrap_or(max_steps + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub median_steps_to_stop: f64,
    /// Censored episodes imputed at `max_steps + 1`.
    pub median_steps_to_mastery: f64,
    pub censored: usize,
    pub premature_rate: f64,
    pub cap_rate: f64,
}

impl Summary {
    pub fn of(episodes: &[EpisodeOutcome], max_steps: usize) -> Self {
        let n = episodes.len().max(1) as f64;
        let stop: Vec<f64> = episodes.iter().map(|e| e.steps_to_stop as f64).collect();
        let mastery: Vec<f64> = episodes
            .iter()
            .map(|e| e.imputed_mastery(max_steps) as f64)
            .collect();
        Self {
            episodes: episodes.len(),
            median_steps_to_stop: median(&stop),
            median_steps_to_mastery: median(&mastery),
            censored: episodes.iter().filter(|e| e.steps_to_mastery.is_none()).count(),
            premature_rate: episodes.iter().filter(|e| e.premature).count() as f64 / n,
            cap_rate: episodes.iter().filter(|e| e.capped).count() as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub scenario_hash: String,
    pub master_seed: u64,
    pub max_steps: usize,
    pub episodes: Vec<EpisodeOutcome>,
    pub summary: Summary,
}

impl ConditionResult {
    pub fn from_outcomes(
        condition: Condition,
        s: &Scenario,
        master_seed: u64,
        episodes: Vec<EpisodeOutcome>,
    ) -> Self {
        Self {
            condition,
            scenario_hash: s.content_hash(),
            master_seed,
            max_steps: s.max_steps,
            summary: Summary::of(&episodes, s.max_steps),
            episodes,
        }
    }

    pub fn imputed_mastery(&self) -> Vec<f64> {
        self.episodes
            .iter()
            .map(|e| e.imputed_mastery(self.max_steps) as f64)
            .collect()
    }
}

/// Full logs of `n` seed-indexed episodes under condition `c`, in order.
pub fn simulate_condition(
    models: &ModelSet,
    c: Condition,
    n: usize,
    master_seed: u64,
    mode: BktGainMode,
) -> Result<Vec<EpisodeLog>> {
    let s = &*models.scenario;
    (0..n as u64)
        .into_par_iter()
        .map_init(
            || Controller::for_condition(models, c, mode),
            |teacher, i| run_episode(teacher, s, i, episode_seed(master_seed, i)),
        )
        .collect()
}

pub fn run_condition(
    models: &ModelSet,
    c: Condition,
    n: usize,
    master_seed: u64,
    mode: BktGainMode,
) -> Result<ConditionResult> {
    let logs = simulate_condition(models, c, n, master_seed, mode)?;
    Ok(ConditionResult::from_outcomes(
        c,
        &models.scenario,
        master_seed,
        logs.iter().map(EpisodeOutcome::from_log).collect(),
    ))
}
