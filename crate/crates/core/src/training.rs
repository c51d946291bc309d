//! Random-choice training data, model fitting and held-out accuracy.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bkt::{fit_em, BktFit, EmConfig};
use crate::dkt::{fit_bptt, DktConfig, DktFit};
use crate::elo::EloStudent;
use crate::episode::{read_jsonl, write_jsonl};
use crate::error::{Error, Result};
use crate::model::{Condition, ModelSet};
use crate::pfa::{fit_mle, MleConfig, PfaFit};
use crate::scenario::{Scenario, TaskId};
use crate::seed::{derive_seed, stream, Domain};
use crate::tracer::Tracer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub task_id: TaskId,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub student_index: u64,
    /// Seed of the student's outcome stream.
    pub seed: u64,
    pub attempts: Vec<Attempt>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    /// Builds a dataset from 1-based `(task, success)` pairs.
    pub fn from_tasks(s: &Scenario, rows: &[Vec<(usize, bool)>]) -> Self {
        let trajectories = rows
            .iter()
            .enumerate()
            .map(|(i, row)| Trajectory {
                student_index: i as u64,
                seed: 0,
                attempts: row
                    .iter()
                    .map(|&(j, x)| {
                        let task_id = TaskId::from_one_based(j).expect("1-based task id");
                        assert!(task_id.0 < s.num_tasks, "task {j} out of range");
                        Attempt {
                            task_id,
                            success: x,
                        }
                    })
                    .collect(),
            })
            .collect();
        Self { trajectories }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn num_attempts(&self) -> usize {
        self.trajectories.iter().map(|t| t.attempts.len()).sum()
    }

    pub fn validate(&self, s: &Scenario) -> Result<()> {
        for tr in &self.trajectories {
            if tr.attempts.len() > s.max_steps {
                return Err(Error::ModelMismatch(format!(
                    "trajectory {} has {} attempts, cap is {}",
                    tr.student_index,
                    tr.attempts.len(),
                    s.max_steps
                )));
            }
            for a in &tr.attempts {
                s.check_task(a.task_id)?;
            }
        }
        Ok(())
    }

    /// Seed-stable split by student; `train_fraction` of the students go to
    /// the first part. Both parts keep student order.
    pub fn split(&self, seed: u64, train_fraction: f64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut stream(derive_seed(seed, Domain::Split, 0)));
        let n_train = (self.len() as f64 * train_fraction).round() as usize;
        let (a, b) = idx.split_at(n_train.min(self.len()));
        let pick = |ids: &[usize]| {
            let mut ids = ids.to_vec();
            ids.sort_unstable();
            Dataset {
                trajectories: ids.iter().map(|&i| self.trajectories[i].clone()).collect(),
            }
        };
        (pick(a), pick(b))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.trajectories)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self {
            trajectories: read_jsonl(path)?,
        })
    }
}

/// Simulates `n` students practising uniformly random tasks for exactly
/// `max_steps` attempts each.
pub fn generate_dataset(n: usize, s: &Scenario, master_seed: u64) -> Dataset {
    let trajectories = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, Domain::TrainingOutcomes, i);
            let mut choices = stream(derive_seed(master_seed, Domain::TrainingChoices, i));
            let mut student = EloStudent::new(s, seed);
            let attempts = (0..s.max_steps)
                .map(|_| {
                    let task = TaskId(choices.random_range(0..s.num_tasks));
                    let success = student.sample_attempt(task, s);
                    student.apply_update(task, success, s);
                    Attempt {
                        task_id: task,
                        success,
                    }
                })
                .collect();
            Trajectory {
                student_index: i,
                seed,
                attempts,
            }
        })
        .collect();
    Dataset { trajectories }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub em: EmConfig,
    pub mle: MleConfig,
    pub dkt: DktConfig,
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            em: EmConfig {
                seed,
                ..EmConfig::default()
            },
            mle: MleConfig::default(),
            dkt: DktConfig {
                seed,
                ..DktConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedSet {
    pub models: ModelSet,
    pub bkt: BktFit,
    pub pfa: PfaFit,
    pub dkt: DktFit,
}

/// Fits all three families on the same data.
pub fn train_all(train: &Dataset, s: &Scenario, cfg: &TrainConfig) -> Result<TrainedSet> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    train.validate(s)?;
    let (dkt, (bkt, pfa)) = rayon::join(
        || fit_bptt(train, s, &cfg.dkt),
        || {
            rayon::join(
                || fit_em(train, s, &cfg.em),
                || fit_mle(train, s, &cfg.mle),
            )
        },
    );
    let (bkt, pfa, dkt) = (bkt?, pfa?, dkt?);
    let models = ModelSet::new(
        s.clone(),
        bkt.model.clone(),
        pfa.params.clone(),
        dkt.params.clone(),
    )?;
    Ok(TrainedSet {
        models,
        bkt,
        pfa,
        dkt,
    })
}

/// Fraction of held-out attempts whose outcome matches the tracer's
/// prediction thresholded at 0.5 (ties predict success). Each prediction is
/// made before the tracer sees the outcome.
pub fn evaluate_accuracy<T: Tracer + Clone>(tracer: &T, test: &Dataset) -> Result<f64> {
    if test.num_attempts() == 0 {
        return Err(Error::EmptyDataset);
    }
    let correct: usize = test
        .trajectories
        .iter()
        .map(|tr| {
            let mut t = tracer.clone();
            t.reset();
            tr.attempts
                .iter()
                .filter(|a| {
                    let p = t.predict()[a.task_id.0];
                    let hit = (p >= 0.5) == a.success;
                    t.update(a.task_id, a.success);
                    hit
                })
                .count()
        })
        .sum();
    Ok(correct as f64 / test.num_attempts() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub condition: Condition,
    pub accuracy: f64,
    pub attempts: usize,
    pub base_success_rate: f64,
}

pub fn accuracy_reports(models: &ModelSet, test: &Dataset) -> Result<Vec<AccuracyReport>> {
    let successes = test
        .trajectories
        .iter()
        .flat_map(|t| &t.attempts)
        .filter(|a| a.success)
        .count();
    let base = successes as f64 / test.num_attempts().max(1) as f64;
    Condition::TRACERS
        .iter()
        .map(|&c| {
            let tracer = models.tracer(c).expect("tracer condition");
            Ok(AccuracyReport {
                condition: c,
                accuracy: evaluate_accuracy(&tracer, test)?,
                attempts: test.num_attempts(),
                base_success_rate: base,
            })
        })
        .collect()
}
