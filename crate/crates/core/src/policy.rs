//! Expected-learning-gain task selection and stopping.
//!
//! Each family scores a candidate task by the expected change of its own
//! ability proxy: BKT mastery probabilities, PFA abilities, DKT predicted
//! success probabilities. The ground-truth oracle scores with the Elo model.

use serde::{Deserialize, Serialize};

use crate::bkt::BktTracer;
use crate::dkt::DktTracer;
use crate::elo::{skill_success_prob, EloStudent};
use crate::error::{Error, Result};
use crate::pfa::PfaTracer;
use crate::scenario::{Scenario, TaskId};
use crate::tracer::{AnyTracer, Tracer};

/// Whether the BKT gain takes the learning transition into account.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BktGainMode {
    /// Expected value of posterior-then-transition.
    #[default]
    WithTransition,
    /// Expected posterior only. Zero for single-skill tasks by the martingale property.
    PosteriorOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainVector {
    pub gains: Vec<f64>,
    pub chosen_task: TaskId,
    pub tie_broken: bool,
}

pub fn gain_bkt(t: &BktTracer, task: TaskId, mode: BktGainMode) -> f64 {
    let p = t.predict_task(task);
    t.scenario()
        .skills_of(task)
        .iter()
        .map(|&k| {
            let params = t.params(k);
            let theta = t.theta()[k.0];
            let next = |x| {
                let q = params.bayes_posterior(theta, x);
                match mode {
                    BktGainMode::WithTransition => params.advance(q),
                    BktGainMode::PosteriorOnly => q,
                }
            };
            p * next(true) + (1.0 - p) * next(false) - theta
        })
        .sum()
}

pub fn gain_pfa(t: &PfaTracer, task: TaskId) -> f64 {
    let p = t.predict_task(task);
    let params = t.params();
    t.scenario()
        .skills_of(task)
        .iter()
        .map(|k| p * params.gamma[k.0] + (1.0 - p) * params.rho[k.0])
        .sum()
}

pub fn gain_dkt(t: &DktTracer, task: TaskId) -> f64 {
    let p = t.predict()[task.0];
    let (up, down) = t.hypothetical_deltas(task);
    up.iter()
        .zip(&down)
        .map(|(d1, d0)| p * d1 + (1.0 - p) * d0)
        .sum()
}

/// Expected ability gain under the true Elo dynamics.
pub fn gain_elo_true(student: &EloStudent, task: TaskId, s: &Scenario) -> f64 {
    let b = s.difficulty(task);
    let p_task = student.task_success_prob(task, s);
    s.skills_of(task)
        .iter()
        .map(|k| {
            let rest = 1.0 - skill_success_prob(student.abilities()[k.0], b, s.slope);
            p_task * s.kappa_success * rest + (1.0 - p_task) * s.kappa_failure * rest
        })
        .sum()
}

pub fn tracer_gains(t: &AnyTracer, mode: BktGainMode) -> Vec<f64> {
    let tasks = match t {
        AnyTracer::Bkt(b) => b.scenario().num_tasks,
        AnyTracer::Pfa(p) => p.scenario().num_tasks,
        AnyTracer::Dkt(d) => d.params().num_tasks,
    };
    (0..tasks)
        .map(TaskId)
        .map(|j| match t {
            AnyTracer::Bkt(b) => gain_bkt(b, j, mode),
            AnyTracer::Pfa(p) => gain_pfa(p, j),
            AnyTracer::Dkt(d) => gain_dkt(d, j),
        })
        .collect()
}

pub fn oracle_gains(student: &EloStudent, s: &Scenario) -> Vec<f64> {
    s.tasks().map(|j| gain_elo_true(student, j, s)).collect()
}

/// Argmax with ties going to the lowest task index.
pub fn select_task(gains: &[f64], model: &str) -> Result<GainVector> {
    if let Some(j) = gains.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGain {
            model: model.to_string(),
            task: j + 1,
        });
    }
    if gains.is_empty() {
        return Err(Error::InvalidTask(0));
    }
    let mut best = 0;
    for (j, &g) in gains.iter().enumerate().skip(1) {
        if g > gains[best] {
            best = j;
        }
    }
    let ties = gains.iter().filter(|&&g| g == gains[best]).count();
    Ok(GainVector {
        gains: gains.to_vec(),
        chosen_task: TaskId(best),
        tie_broken: ties > 1,
    })
}

pub fn should_stop(t: &AnyTracer) -> bool {
    t.mastery_predicted()
}
