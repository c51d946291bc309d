//! Deep Knowledge Tracing with a single GRU layer.
//!
//! An attempt `(task, outcome)` is one-hot encoded into `2m` inputs: index
//! `task` on success, `task + m` on failure. The hidden state feeds a sigmoid
//! output layer that predicts every task's success probability.

mod train;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{logistic, Scenario, TaskId};
use crate::tracer::{probabilities_reach_mastery, Tracer};

pub use train::{fit_bptt, init_params, sequence_gradient, sequence_loss, DktConfig, DktFit};

/// Output probabilities are kept strictly inside `(0, 1)`.
const PROB_FLOOR: f64 = 1e-12;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `out = self * x + bias`
    pub fn affine(&self, x: &[f64], bias: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .zip(bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// `out += self^T * y`
    pub fn accumulate_transpose(&self, y: &[f64], out: &mut [f64]) {
        for (row, &yi) in self.data.chunks_exact(self.cols).zip(y) {
            if yi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * yi;
            }
        }
    }

    /// `self += y * x^T`
    pub fn accumulate_outer(&mut self, y: &[f64], x: &[f64]) {
        for (row, &yi) in self.data.chunks_exact_mut(self.cols).zip(y) {
            if yi == 0.0 {
                continue;
            }
            for (w, v) in row.iter_mut().zip(x) {
                *w += yi * v;
            }
        }
    }
}

/// GRU weights. Gate matrices act on the concatenation `[h, x]`
/// (the candidate on `[r * h, x]`), so they are `H x (H + 2m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DktParams {
    pub num_tasks: usize,
    pub hidden: usize,
    /// Seed the weights were initialised and trained with.
    pub seed: u64,
    pub w_update: Dense,
    pub b_update: Vec<f64>,
    pub w_reset: Dense,
    pub b_reset: Vec<f64>,
    pub w_candidate: Dense,
    pub b_candidate: Vec<f64>,
    pub w_out: Dense,
    pub b_out: Vec<f64>,
}

pub(crate) struct StepCache {
    pub h_prev: Vec<f64>,
    pub input: Vec<f64>,
    pub update: Vec<f64>,
    pub reset: Vec<f64>,
    pub candidate: Vec<f64>,
}

impl DktParams {
    pub fn zeros(num_tasks: usize, hidden: usize) -> Self {
        let d = hidden + 2 * num_tasks;
        Self {
            num_tasks,
            hidden,
            seed: 0,
            w_update: Dense::zeros(hidden, d),
            b_update: vec![0.0; hidden],
            w_reset: Dense::zeros(hidden, d),
            b_reset: vec![0.0; hidden],
            w_candidate: Dense::zeros(hidden, d),
            b_candidate: vec![0.0; hidden],
            w_out: Dense::zeros(num_tasks, hidden),
            b_out: vec![0.0; num_tasks],
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.num_tasks
    }

    pub fn check(&self, s: &Scenario) -> Result<()> {
        let d = self.hidden + self.input_dim();
        let shapes_ok = self.num_tasks == s.num_tasks
            && [&self.w_update, &self.w_reset, &self.w_candidate]
                .iter()
                .all(|w| w.rows == self.hidden && w.cols == d && w.data.len() == w.rows * w.cols)
            && self.w_out.rows == self.num_tasks
            && self.w_out.cols == self.hidden
            && self.w_out.data.len() == self.num_tasks * self.hidden
            && [&self.b_update, &self.b_reset, &self.b_candidate]
                .iter()
                .all(|b| b.len() == self.hidden)
            && self.b_out.len() == self.num_tasks;
        if !shapes_ok {
            return Err(Error::ModelMismatch(format!(
                "DKT tensors inconsistent with {} tasks and hidden size {}",
                s.num_tasks, self.hidden
            )));
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::ModelMismatch("DKT weights are not finite".into()));
        }
        Ok(())
    }

    /// Parameter tensors in a fixed order, as flat slices.
    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            &self.w_update.data,
            &self.b_update,
            &self.w_reset.data,
            &self.b_reset,
            &self.w_candidate.data,
            &self.b_candidate,
            &self.w_out.data,
            &self.b_out,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.w_update.data,
            &mut self.b_update,
            &mut self.w_reset.data,
            &mut self.b_reset,
            &mut self.w_candidate.data,
            &mut self.b_candidate,
            &mut self.w_out.data,
            &mut self.b_out,
        ]
    }

    pub const TENSOR_NAMES: [&'static str; 8] = [
        "w_update",
        "b_update",
        "w_reset",
        "b_reset",
        "w_candidate",
        "b_candidate",
        "w_out",
        "b_out",
    ];

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.hidden]
    }

    pub(crate) fn forward(&self, h: &[f64], input: Vec<f64>) -> StepCache {
        let mut hx = Vec::with_capacity(h.len() + input.len());
        hx.extend_from_slice(h);
        hx.extend_from_slice(&input);
        let update: Vec<f64> = self
            .w_update
            .affine(&hx, &self.b_update)
            .into_iter()
            .map(logistic)
            .collect();
        let reset: Vec<f64> = self
            .w_reset
            .affine(&hx, &self.b_reset)
            .into_iter()
            .map(logistic)
            .collect();
        for i in 0..h.len() {
            hx[i] = reset[i] * h[i];
        }
        let candidate: Vec<f64> = self
            .w_candidate
            .affine(&hx, &self.b_candidate)
            .into_iter()
            .map(f64::tanh)
            .collect();
        StepCache {
            h_prev: h.to_vec(),
            input,
            update,
            reset,
            candidate,
        }
    }

    /// One recurrent step on an encoded attempt.
    pub fn step(&self, h: &[f64], task: TaskId, success: bool) -> Vec<f64> {
        self.forward(h, encode(task, success, self.num_tasks))
            .next_state()
    }

    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        self.w_out.affine(h, &self.b_out)
    }

    pub fn predict(&self, h: &[f64]) -> Vec<f64> {
        self.logits(h)
            .into_iter()
            .map(|z| logistic(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
            .collect()
    }
}

impl StepCache {
    pub fn next_state(&self) -> Vec<f64> {
        self.h_prev
            .iter()
            .zip(&self.update)
            .zip(&self.candidate)
            .map(|((h, z), c)| (1.0 - z) * h + z * c)
            .collect()
    }
}

/// One-hot attempt encoding of length `2 * num_tasks`.
pub fn encode(task: TaskId, success: bool, num_tasks: usize) -> Vec<f64> {
    let mut v = vec![0.0; 2 * num_tasks];
    let idx = if success { task.0 } else { task.0 + num_tasks };
    v[idx] = 1.0;
    v
}

#[derive(Debug, Clone)]
pub struct DktTracer {
    params: Arc<DktParams>,
    scenario: Arc<Scenario>,
    h: Vec<f64>,
}

impl DktTracer {
    pub fn new(params: Arc<DktParams>, scenario: Arc<Scenario>) -> Self {
        let h = params.initial_state();
        Self {
            params,
            scenario,
            h,
        }
    }

    pub fn hidden_state(&self) -> &[f64] {
        &self.h
    }

    pub fn params(&self) -> &DktParams {
        &self.params
    }

    /// Per-task probability changes after a hypothetical success and a
    /// hypothetical failure on `task`. The live state is left untouched.
    pub fn hypothetical_deltas(&self, task: TaskId) -> (Vec<f64>, Vec<f64>) {
        let now = self.params.predict(&self.h);
        let delta = |success| {
            let next = self.params.step(&self.h, task, success);
            self.params
                .predict(&next)
                .iter()
                .zip(&now)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>()
        };
        (delta(true), delta(false))
    }
}

impl Tracer for DktTracer {
    fn reset(&mut self) {
        self.h = self.params.initial_state();
    }

    fn update(&mut self, task: TaskId, success: bool) {
        self.h = self.params.step(&self.h, task, success);
    }

    fn predict(&self) -> Vec<f64> {
        self.params.predict(&self.h)
    }

    fn ability_estimates(&self) -> Option<Vec<f64>> {
        None
    }

    fn mastery_predicted(&self) -> bool {
        probabilities_reach_mastery(&self.predict(), &self.scenario)
    }
}
