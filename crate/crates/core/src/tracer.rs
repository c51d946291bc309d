//! The contract every knowledge-tracing model implements.

use crate::bkt::BktTracer;
use crate::dkt::DktTracer;
use crate::model::Condition;
use crate::pfa::PfaTracer;
use crate::scenario::{Scenario, TaskId};

pub trait Tracer {
    /// Returns to the state of a learner with no history.
    fn reset(&mut self);

    fn update(&mut self, task: TaskId, success: bool);

    /// Success probability for every task, each in `[0, 1]`.
    fn predict(&self) -> Vec<f64>;

    /// Per-skill ability estimates, when the model has them.
    fn ability_estimates(&self) -> Option<Vec<f64>>;

    fn mastery_predicted(&self) -> bool;
}

/// Mastery rule for tracers that only expose task probabilities: every task
/// must be predicted at least as likely as a threshold-level learner would
/// succeed on it.
pub fn probabilities_reach_mastery(probs: &[f64], scenario: &Scenario) -> bool {
    scenario
        .tasks()
        .zip(probs)
        .all(|(j, &p)| p >= scenario.mastery_bar(j))
}

#[derive(Debug, Clone)]
pub enum AnyTracer {
    Bkt(BktTracer),
    Pfa(PfaTracer),
    Dkt(DktTracer),
}

impl AnyTracer {
    pub fn condition(&self) -> Condition {
        match self {
            AnyTracer::Bkt(_) => Condition::Bkt,
            AnyTracer::Pfa(_) => Condition::Pfa,
            AnyTracer::Dkt(_) => Condition::Dkt,
        }
    }

    fn inner(&self) -> &dyn Tracer {
        match self {
            AnyTracer::Bkt(t) => t,
            AnyTracer::Pfa(t) => t,
            AnyTracer::Dkt(t) => t,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Tracer {
        match self {
            AnyTracer::Bkt(t) => t,
            AnyTracer::Pfa(t) => t,
            AnyTracer::Dkt(t) => t,
        }
    }
}

impl Tracer for AnyTracer {
    fn reset(&mut self) {
        self.inner_mut().reset()
    }

    fn update(&mut self, task: TaskId, success: bool) {
        self.inner_mut().update(task, success)
    }

    fn predict(&self) -> Vec<f64> {
        self.inner().predict()
    }

    fn ability_estimates(&self) -> Option<Vec<f64>> {
        self.inner().ability_estimates()
    }

    fn mastery_predicted(&self) -> bool {
        self.inner().mastery_predicted()
    }
}
