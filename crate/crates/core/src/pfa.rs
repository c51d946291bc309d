//! Performance Factors Analysis with a per-task difficulty intercept.
//!
//! Skill ability is `beta + gamma * successes + rho * failures`; a task's
//! logit is the sum of its skills' abilities minus the task difficulty.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{logistic, Scenario, SkillId, TaskId};
use crate::tracer::Tracer;
use crate::training::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfaParams {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
    /// Difficulty intercept per task, subtracted from the logit.
    pub difficulty: Vec<f64>,
}

impl PfaParams {
    pub fn zeros(s: &Scenario) -> Self {
        Self {
            beta: vec![0.0; s.num_skills],
            gamma: vec![0.0; s.num_skills],
            rho: vec![0.0; s.num_skills],
            difficulty: vec![0.0; s.num_tasks],
        }
    }

    pub fn check(&self, s: &Scenario) -> Result<()> {
        let k = s.num_skills;
        if self.beta.len() != k || self.gamma.len() != k || self.rho.len() != k {
            return Err(Error::ModelMismatch(format!(
                "PFA skill vectors do not have {k} entries"
            )));
        }
        if self.difficulty.len() != s.num_tasks {
            return Err(Error::ModelMismatch(format!(
                "PFA has {} difficulties, scenario has {} tasks",
                self.difficulty.len(),
                s.num_tasks
            )));
        }
        Ok(())
    }

    /// Flat layout `[beta, gamma, rho, difficulty]`.
    pub fn to_vec(&self) -> Vec<f64> {
        [&self.beta, &self.gamma, &self.rho, &self.difficulty]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    pub fn from_vec(w: &[f64], s: &Scenario) -> Self {
        let k = s.num_skills;
        Self {
            beta: w[..k].to_vec(),
            gamma: w[k..2 * k].to_vec(),
            rho: w[2 * k..3 * k].to_vec(),
            difficulty: w[3 * k..3 * k + s.num_tasks].to_vec(),
        }
    }

    pub fn ability(&self, k: SkillId, successes: u32, failures: u32) -> f64 {
        self.beta[k.0] + self.gamma[k.0] * successes as f64 + self.rho[k.0] * failures as f64
    }
}

#[derive(Debug, Clone)]
pub struct PfaTracer {
    params: Arc<PfaParams>,
    scenario: Arc<Scenario>,
    successes: Vec<u32>,
    failures: Vec<u32>,
}

impl PfaTracer {
    pub fn new(params: Arc<PfaParams>, scenario: Arc<Scenario>) -> Self {
        let k = scenario.num_skills;
        Self {
            params,
            scenario,
            successes: vec![0; k],
            failures: vec![0; k],
        }
    }

    pub fn params(&self) -> &PfaParams {
        &self.params
    }

    pub fn counts(&self, k: SkillId) -> (u32, u32) {
        (self.successes[k.0], self.failures[k.0])
    }

    pub fn set_counts(&mut self, successes: Vec<u32>, failures: Vec<u32>) {
        self.successes = successes;
        self.failures = failures;
    }

    pub fn ability(&self, k: SkillId) -> f64 {
        self.params
            .ability(k, self.successes[k.0], self.failures[k.0])
    }

    pub fn logit(&self, task: TaskId) -> f64 {
        let sum: f64 = self
            .scenario
            .skills_of(task)
            .iter()
            .map(|&k| self.ability(k))
            .sum();
        sum - self.params.difficulty[task.0]
    }

    pub fn predict_task(&self, task: TaskId) -> f64 {
        logistic(self.logit(task))
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }
}

impl Tracer for PfaTracer {
    fn reset(&mut self) {
        self.successes.iter_mut().for_each(|c| *c = 0);
        self.failures.iter_mut().for_each(|c| *c = 0);
    }

    fn update(&mut self, task: TaskId, success: bool) {
        for &k in self.scenario.skills_of(task) {
            if success {
                self.successes[k.0] += 1;
            } else {
                self.failures[k.0] += 1;
            }
        }
    }

    fn predict(&self) -> Vec<f64> {
        self.scenario.tasks().map(|j| self.predict_task(j)).collect()
    }

    fn ability_estimates(&self) -> Option<Vec<f64>> {
        Some(
            (0..self.scenario.num_skills)
                .map(|k| self.ability(SkillId(k)))
                .collect(),
        )
    }

    /// Skill abilities only; the task difficulties do not enter.
    fn mastery_predicted(&self) -> bool {
        (0..self.scenario.num_skills)
            .all(|k| self.ability(SkillId(k)) >= self.scenario.mastery_threshold)
    }
}

/// Penalised Bernoulli log-likelihood over a dataset, in the flat parameter
/// layout of [`PfaParams::to_vec`].
#[derive(Debug, Clone)]
pub struct PfaObjective {
    /// One feature row per attempt.
    features: Vec<Vec<f64>>,
    outcomes: Vec<f64>,
    pub l2: f64,
}

impl PfaObjective {
    pub fn new(data: &Dataset, s: &Scenario, l2: f64) -> Self {
        let k = s.num_skills;
        let dim = 3 * k + s.num_tasks;
        let mut features = Vec::new();
        let mut outcomes = Vec::new();
        for tr in &data.trajectories {
            let mut succ = vec![0.0; k];
            let mut fail = vec![0.0; k];
            for a in &tr.attempts {
                let mut row = vec![0.0; dim];
                for &sk in s.skills_of(a.task_id) {
                    row[sk.0] = 1.0;
                    row[k + sk.0] = succ[sk.0];
                    row[2 * k + sk.0] = fail[sk.0];
                }
                row[3 * k + a.task_id.0] = -1.0;
                features.push(row);
                outcomes.push(if a.success { 1.0 } else { 0.0 });
                for &sk in s.skills_of(a.task_id) {
                    if a.success {
                        succ[sk.0] += 1.0;
                    } else {
                        fail[sk.0] += 1.0;
                    }
                }
            }
        }
        Self {
            features,
            outcomes,
            l2,
        }
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let ll: f64 = self
            .features
            .iter()
            .zip(&self.outcomes)
            .map(|(row, &y)| {
                let z = dot(row, w);
                y * z - softplus(z)
            })
            .sum();
        ll - self.l2 * dot(w, w)
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = w.iter().map(|wi| -2.0 * self.l2 * wi).collect();
        for (row, &y) in self.features.iter().zip(&self.outcomes) {
            let r = y - logistic(dot(row, w));
            for (gi, xi) in g.iter_mut().zip(row) {
                *gi += r * xi;
            }
        }
        g
    }

    /// Negative Hessian, positive definite for any `l2 > 0`.
    fn neg_hessian(&self, w: &[f64]) -> DMatrix<f64> {
        let n = w.len();
        let mut h = DMatrix::<f64>::identity(n, n) * (2.0 * self.l2);
        for row in &self.features {
            let p = logistic(dot(row, w));
            let v = p * (1.0 - p);
            for i in 0..n {
                if row[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    h[(i, j)] += v * row[i] * row[j];
                }
            }
        }
        h
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MleConfig {
    pub l2: f64,
    pub max_iterations: usize,
    /// Stop once the gradient max-norm falls below this.
    pub gradient_tolerance: f64,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iterations: 1000,
            gradient_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PfaFit {
    pub params: PfaParams,
    /// Penalised log-likelihood after every accepted step (first entry is the start point).
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Maximises the penalised log-likelihood by ascent along the Newton
/// direction with Armijo backtracking, starting from zero.
pub fn fit_mle(data: &Dataset, s: &Scenario, cfg: &MleConfig) -> Result<PfaFit> {
    let obj = PfaObjective::new(data, s, cfg.l2);
    if obj.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut w = vec![0.0; obj.dim()];
    let mut f = obj.value(&w);
    let mut trace = vec![f];
    let mut grad = obj.gradient(&w);
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < cfg.gradient_tolerance {
            break;
        }
        iterations += 1;
        let g = DVector::from_column_slice(&grad);
        let dir = obj
            .neg_hessian(&w)
            .cholesky()
            .map(|c| c.solve(&g))
            .unwrap_or_else(|| g.clone());
        let slope = g.dot(&dir);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = w.iter().zip(dir.iter()).map(|(a, d)| a + step * d).collect();
            let fc = obj.value(&cand);
            if !fc.is_finite() {
                return Err(Error::NonFiniteLoss {
                    model: "pfa",
                    iteration: iterations,
                    loss: fc,
                });
            }
            if fc >= f + 1e-4 * step * slope {
                w = cand;
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No ascent left at machine precision.
            break;
        }
        trace.push(f);
        grad = obj.gradient(&w);
    }
    let gradient_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    Ok(PfaFit {
        params: PfaParams::from_vec(&w, s),
        objective: trace,
        iterations,
        gradient_norm,
    })
}
