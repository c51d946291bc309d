//! Bayesian Knowledge Tracing: one two-state HMM per skill.
//!
//! The hidden state is "skill mastered", which is absorbing. Observations are
//! noisy through guess and slip. Tasks that require several skills feed the
//! same outcome into every involved skill, and the task prediction is the
//! smallest of the per-skill predictions.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Scenario, SkillId, TaskId};
use crate::seed::{derive_seed, stream, Domain};
use crate::tracer::{probabilities_reach_mastery, Tracer};
use crate::training::Dataset;

const DEGENERATE_EPS: f64 = 1e-12;
const PARAM_MIN: f64 = 0.001;
const PARAM_MAX: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BktParams {
    pub p_start: f64,
    pub p_trans: f64,
    pub p_guess: f64,
    pub p_slip: f64,
}

impl BktParams {
    pub const fn new(p_start: f64, p_trans: f64, p_guess: f64, p_slip: f64) -> Self {
        Self {
            p_start,
            p_trans,
            p_guess,
            p_slip,
        }
    }

    pub fn is_valid(&self) -> bool {
        let open = |p: f64| p > 0.0 && p < 1.0;
        open(self.p_start)
            && open(self.p_trans)
            && open(self.p_guess)
            && open(self.p_slip)
            && self.p_guess + self.p_slip < 1.0
    }

    /// Probability of a correct answer given mastery probability `theta`.
    pub fn predict_skill(&self, theta: f64) -> f64 {
        theta * (1.0 - self.p_slip) + (1.0 - theta) * self.p_guess
    }

    /// Posterior mastery probability after observing `success`.
    pub fn bayes_posterior(&self, theta: f64, success: bool) -> f64 {
        let eval = |t: f64| {
            if success {
                let num = (1.0 - self.p_slip) * t;
                (num, num + self.p_guess * (1.0 - t))
            } else {
                let num = self.p_slip * t;
                (num, num + (1.0 - self.p_guess) * (1.0 - t))
            }
        };
        let (num, den) = eval(theta);
        if den > DEGENERATE_EPS && den.is_finite() {
            return num / den;
        }
        let (num, den) = eval(theta.clamp(DEGENERATE_EPS, 1.0 - DEGENERATE_EPS));
        if den > 0.0 {
            num / den
        } else {
            theta
        }
    }

    /// Learning transition applied after the posterior.
    pub fn advance(&self, q: f64) -> f64 {
        q + self.p_trans * (1.0 - q)
    }

    /// Posterior followed by the learning transition.
    pub fn step(&self, theta: f64, success: bool) -> f64 {
        self.advance(self.bayes_posterior(theta, success))
    }

    fn clamp_and_project(mut self) -> Self {
        for p in [
            &mut self.p_start,
            &mut self.p_trans,
            &mut self.p_guess,
            &mut self.p_slip,
        ] {
            *p = p.clamp(PARAM_MIN, PARAM_MAX);
        }
        let cap = 1.0 - PARAM_MIN;
        let excess = self.p_guess + self.p_slip - cap;
        if excess > 0.0 {
            self.p_guess = (self.p_guess - excess / 2.0).max(PARAM_MIN);
            self.p_slip = (cap - self.p_guess).max(PARAM_MIN);
        }
        self
    }
}

/// Fitted BKT parameters, one quadruple per skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BktModel {
    pub skills: Vec<BktParams>,
}

impl BktModel {
    pub fn check(&self, s: &Scenario) -> Result<()> {
        if self.skills.len() != s.num_skills {
            return Err(Error::ModelMismatch(format!(
                "BKT model has {} skills, scenario has {}",
                self.skills.len(),
                s.num_skills
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BktTracer {
    model: Arc<BktModel>,
    scenario: Arc<Scenario>,
    theta: Vec<f64>,
}

impl BktTracer {
    pub fn new(model: Arc<BktModel>, scenario: Arc<Scenario>) -> Self {
        let theta = model.skills.iter().map(|p| p.p_start).collect();
        Self {
            model,
            scenario,
            theta,
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) {
        assert_eq!(theta.len(), self.theta.len());
        self.theta = theta;
    }

    pub fn params(&self, k: SkillId) -> &BktParams {
        &self.model.skills[k.0]
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn predict_task(&self, task: TaskId) -> f64 {
        self.scenario
            .skills_of(task)
            .iter()
            .map(|&k| self.params(k).predict_skill(self.theta[k.0]))
            .fold(f64::INFINITY, f64::min)
    }
}

impl Tracer for BktTracer {
    fn reset(&mut self) {
        self.theta = self.model.skills.iter().map(|p| p.p_start).collect();
    }

    fn update(&mut self, task: TaskId, success: bool) {
        for &k in self.scenario.skills_of(task) {
            self.theta[k.0] = self.model.skills[k.0].step(self.theta[k.0], success);
        }
    }

    fn predict(&self) -> Vec<f64> {
        self.scenario.tasks().map(|j| self.predict_task(j)).collect()
    }

    fn ability_estimates(&self) -> Option<Vec<f64>> {
        Some(self.theta.clone())
    }

    fn mastery_predicted(&self) -> bool {
        probabilities_reach_mastery(&self.predict(), &self.scenario)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmConfig {
    pub init: BktParams,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Relative log-likelihood change that ends the iteration.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            init: BktParams::new(0.3, 0.2, 0.2, 0.1),
            restarts: 5,
            max_iterations: 200,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SkillFit {
    /// Parameters after clamping to the valid box.
    pub params: BktParams,
    /// Unclamped EM estimate of the winning restart.
    pub raw: BktParams,
    /// Log-likelihood evaluated at the start of every EM iteration.
    pub log_likelihood: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BktFit {
    pub model: BktModel,
    pub skills: Vec<SkillFit>,
}

/// Per-skill observation sequences: every attempt on a task involving the
/// skill contributes its outcome.
pub fn skill_sequences(data: &Dataset, s: &Scenario) -> Vec<Vec<Vec<bool>>> {
    (0..s.num_skills)
        .map(|k| {
            data.trajectories
                .iter()
                .map(|tr| {
                    tr.attempts
                        .iter()
                        .filter(|a| s.skills_of(a.task_id).contains(&SkillId(k)))
                        .map(|a| a.success)
                        .collect::<Vec<_>>()
                })
                .filter(|seq| !seq.is_empty())
                .collect()
        })
        .collect()
}

pub fn fit_em(data: &Dataset, s: &Scenario, cfg: &EmConfig) -> Result<BktFit> {
    let seqs = skill_sequences(data, s);
    let skills = seqs
        .par_iter()
        .enumerate()
        .map(|(k, seq)| {
            if seq.is_empty() {
                return Err(Error::EmptySkillSequence { skill: k + 1 });
            }
            Ok(fit_skill(seq, cfg, k as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BktFit {
        model: BktModel {
            skills: skills.iter().map(|f| f.params).collect(),
        },
        skills,
    })
}

/// Fits one skill from its observation sequences, keeping the best of
/// `cfg.restarts` EM runs (the first starts from `cfg.init`).
pub fn fit_skill(seqs: &[Vec<bool>], cfg: &EmConfig, skill: u64) -> SkillFit {
    let mut rng = stream(derive_seed(cfg.seed, Domain::BktRestarts, skill));
    let mut inits = vec![cfg.init];
    while inits.len() < cfg.restarts.max(1) {
        inits.push(BktParams::new(
            rng.random_range(0.05..0.5),
            rng.random_range(0.05..0.5),
            rng.random_range(0.05..0.4),
            rng.random_range(0.05..0.4),
        ));
    }
    let runs: Vec<_> = inits
        .into_par_iter()
        .map(|init| run_em(seqs, init, cfg.max_iterations, cfg.tolerance))
        .collect();
    let final_ll = |r: &(BktParams, Vec<f64>)| *r.1.last().unwrap_or(&f64::NEG_INFINITY);
    let identifiable = runs.iter().filter(|r| r.0.p_guess + r.0.p_slip < 1.0);
    let best = identifiable
        .max_by(|a, b| final_ll(a).total_cmp(&final_ll(b)))
        .or_else(|| runs.iter().max_by(|a, b| final_ll(a).total_cmp(&final_ll(b))))
        .expect("at least one restart")
        .clone();
    SkillFit {
        params: best.0.clamp_and_project(),
        raw: best.0,
        log_likelihood: best.1,
    }
}

#[derive(Default)]
struct Stats {
    ll: f64,
    start: f64,
    sequences: f64,
    trans_num: f64,
    trans_den: f64,
    guess_num: f64,
    guess_den: f64,
    slip_num: f64,
    slip_den: f64,
}

fn run_em(
    seqs: &[Vec<bool>],
    init: BktParams,
    max_iterations: usize,
    tolerance: f64,
) -> (BktParams, Vec<f64>) {
    let mut p = init;
    let mut trace = Vec::new();
    for _ in 0..max_iterations {
        let st = e_step(seqs, &p);
        let converged = trace
            .last()
            .is_some_and(|&prev: &f64| (st.ll - prev).abs() <= tolerance * prev.abs().max(1e-12));
        trace.push(st.ll);
        if converged {
            break;
        }
        let ratio = |num: f64, den: f64, old: f64| if den > 0.0 { num / den } else { old };
        p = BktParams {
            p_start: ratio(st.start, st.sequences, p.p_start),
            p_trans: ratio(st.trans_num, st.trans_den, p.p_trans),
            p_guess: ratio(st.guess_num, st.guess_den, p.p_guess),
            p_slip: ratio(st.slip_num, st.slip_den, p.p_slip),
        };
    }
    (p, trace)
}

/// Scaled forward-backward over every sequence, accumulating expected counts.
fn e_step(seqs: &[Vec<bool>], p: &BktParams) -> Stats {
    let mut st = Stats::default();
    let emit = |x: bool| -> [f64; 2] {
        if x {
            [p.p_guess, 1.0 - p.p_slip]
        } else {
            [1.0 - p.p_guess, p.p_slip]
        }
    };
    let mut alpha: Vec<[f64; 2]> = Vec::new();
    let mut scale: Vec<f64> = Vec::new();
    for obs in seqs {
        let n = obs.len();
        alpha.clear();
        scale.clear();
        let e0 = emit(obs[0]);
        let a0 = [(1.0 - p.p_start) * e0[0], p.p_start * e0[1]];
        let c0 = a0[0] + a0[1];
        alpha.push([a0[0] / c0, a0[1] / c0]);
        scale.push(c0);
        for &x in &obs[1..] {
            let e = emit(x);
            let prev = alpha[alpha.len() - 1];
            let a = [
                prev[0] * (1.0 - p.p_trans) * e[0],
                (prev[0] * p.p_trans + prev[1]) * e[1],
            ];
            let c = a[0] + a[1];
            alpha.push([a[0] / c, a[1] / c]);
            scale.push(c);
        }
        st.ll += scale.iter().map(|c| c.ln()).sum::<f64>();
        st.sequences += 1.0;

        let mut beta = [1.0, 1.0];
        for t in (0..n).rev() {
            let g = [alpha[t][0] * beta[0], alpha[t][1] * beta[1]];
            if t == 0 {
                st.start += g[1];
            }
            if obs[t] {
                st.guess_num += g[0];
            } else {
                st.slip_num += g[1];
            }
            st.guess_den += g[0];
            st.slip_den += g[1];
            if t + 1 < n {
                st.trans_den += g[0];
            }
            if t > 0 {
                let e = emit(obs[t]);
                let c = scale[t];
                let prev = alpha[t - 1];
                st.trans_num += prev[0] * p.p_trans * e[1] * beta[1] / c;
                beta = [
                    ((1.0 - p.p_trans) * e[0] * beta[0] + p.p_trans * e[1] * beta[1]) / c,
                    e[1] * beta[1] / c,
                ];
            }
        }
    }
    st
}

/// Total log-likelihood of `seqs` under `p`.
pub fn log_likelihood(seqs: &[Vec<bool>], p: &BktParams) -> f64 {
    e_step(seqs, p).ll
}
