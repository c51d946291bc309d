//! Backpropagation through time and Adam training for [`DktParams`].

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{encode, Dense, DktParams, StepCache};
use crate::error::{Error, Result};
use crate::scenario::{logistic, Scenario, TaskId};
use crate::seed::{derive_seed, stream, Domain, StreamRng};
use crate::training::Dataset;

#[derive(Debug, Clone, Copy)]
pub struct DktConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Fraction of training sequences held out for early stopping.
    pub validation_fraction: f64,
    /// Scale of the orthogonal recurrent blocks at initialisation.
    pub recurrent_scale: f64,
    pub seed: u64,
}

impl Default for DktConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            learning_rate: 1e-3,
            batch_size: 32,
            clip_norm: 5.0,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.1,
            recurrent_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DktFit {
    /// Weights from the epoch with the lowest held-out loss.
    pub params: DktParams,
    /// Mean training cross-entropy per epoch.
    pub train_loss: Vec<f64>,
    /// Mean held-out cross-entropy per epoch (empty without a held-out split).
    pub validation_loss: Vec<f64>,
    pub best_epoch: usize,
}

type Sequence = Vec<(TaskId, bool)>;

fn glorot(rows: usize, cols: usize, rng: &mut StreamRng) -> Dense {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Dense::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

/// Gate matrix with a scaled random orthogonal recurrent block and Glorot
/// input columns.
fn gate_init(hidden: usize, inputs: usize, scale: f64, rng: &mut StreamRng) -> Dense {
    let g = DMatrix::<f64>::from_fn(hidden, hidden, |_, _| rng.sample(StandardNormal));
    let q = g.qr().q();
    let inp = glorot(hidden, inputs, rng);
    Dense::from_fn(hidden, hidden + inputs, |i, j| {
        if j < hidden {
            scale * q[(i, j)]
        } else {
            inp.get(i, j - hidden)
        }
    })
}

pub fn init_params(num_tasks: usize, cfg: &DktConfig, rng: &mut StreamRng) -> DktParams {
    let h = cfg.hidden;
    let d = 2 * num_tasks;
    let mut p = DktParams::zeros(num_tasks, h);
    p.seed = cfg.seed;
    p.w_update = gate_init(h, d, cfg.recurrent_scale, rng);
    p.w_reset = gate_init(h, d, cfg.recurrent_scale, rng);
    p.w_candidate = gate_init(h, d, cfg.recurrent_scale, rng);
    p.w_out = glorot(num_tasks, h, rng);
    p
}

fn bce_with_logit(z: f64, y: bool) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    if y {
        softplus - z
    } else {
        softplus
    }
}

/// Summed next-attempt cross-entropy of one sequence. Every attempt is
/// predicted from the state before it, starting at the zero state.
pub fn sequence_loss(p: &DktParams, seq: &[(TaskId, bool)]) -> f64 {
    let mut h = p.initial_state();
    let mut loss = 0.0;
    for (t, &(j, x)) in seq.iter().enumerate() {
        loss += bce_with_logit(p.logits(&h)[j.0], x);
        if t + 1 < seq.len() {
            h = p.step(&h, j, x);
        }
    }
    loss
}

/// Adds the gradient of [`sequence_loss`] into `grad` and returns the loss.
pub fn sequence_gradient(p: &DktParams, seq: &[(TaskId, bool)], grad: &mut DktParams) -> f64 {
    let hidden = p.hidden;
    let mut caches: Vec<StepCache> = Vec::with_capacity(seq.len());
    let mut states = vec![p.initial_state()];
    for &(j, x) in &seq[..seq.len().saturating_sub(1)] {
        let cache = p.forward(states.last().unwrap(), encode(j, x, p.num_tasks));
        states.push(cache.next_state());
        caches.push(cache);
    }

    let mut loss = 0.0;
    // Output-layer gradient into each state.
    let mut dstate: Vec<Vec<f64>> = Vec::with_capacity(seq.len());
    for (t, &(j, x)) in seq.iter().enumerate() {
        let h = &states[t];
        let row = &p.w_out.data[j.0 * hidden..(j.0 + 1) * hidden];
        let z = p.b_out[j.0] + row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>();
        loss += bce_with_logit(z, x);
        let dz = logistic(z) - if x { 1.0 } else { 0.0 };
        grad.b_out[j.0] += dz;
        let grow = &mut grad.w_out.data[j.0 * hidden..(j.0 + 1) * hidden];
        for (g, v) in grow.iter_mut().zip(h) {
            *g += dz * v;
        }
        dstate.push(row.iter().map(|w| w * dz).collect());
    }

    let mut dh_next = dstate.pop().unwrap_or_default();
    for (t, c) in caches.iter().enumerate().rev() {
        let mut dh = dstate[t].clone();
        let n = hidden;
        let mut d_update = vec![0.0; n];
        let mut d_cand_pre = vec![0.0; n];
        for i in 0..n {
            let (z, cand, hp) = (c.update[i], c.candidate[i], c.h_prev[i]);
            d_update[i] = dh_next[i] * (cand - hp) * z * (1.0 - z);
            d_cand_pre[i] = dh_next[i] * z * (1.0 - cand * cand);
            dh[i] += dh_next[i] * (1.0 - z);
        }

        let mut hx: Vec<f64> = c.h_prev.clone();
        hx.extend_from_slice(&c.input);
        let mut rhx = hx.clone();
        for i in 0..n {
            rhx[i] = c.reset[i] * c.h_prev[i];
        }

        grad.w_candidate.accumulate_outer(&d_cand_pre, &rhx);
        add_into(&mut grad.b_candidate, &d_cand_pre);
        let mut d_rhx = vec![0.0; hx.len()];
        p.w_candidate.accumulate_transpose(&d_cand_pre, &mut d_rhx);
        let mut d_reset = vec![0.0; n];
        for i in 0..n {
            let r = c.reset[i];
            d_reset[i] = d_rhx[i] * c.h_prev[i] * r * (1.0 - r);
            dh[i] += d_rhx[i] * r;
        }

        grad.w_update.accumulate_outer(&d_update, &hx);
        add_into(&mut grad.b_update, &d_update);
        grad.w_reset.accumulate_outer(&d_reset, &hx);
        add_into(&mut grad.b_reset, &d_reset);
        let mut d_hx = vec![0.0; hx.len()];
        p.w_update.accumulate_transpose(&d_update, &mut d_hx);
        p.w_reset.accumulate_transpose(&d_reset, &mut d_hx);
        add_into(&mut dh, &d_hx[..n]);
        dh_next = dh;
    }
    loss
}

fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(p: &DktParams, lr: f64) -> Self {
        let shapes: Vec<Vec<f64>> = p.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: shapes.clone(),
            v: shapes,
            t: 0,
            lr,
        }
    }

    fn step(&mut self, p: &mut DktParams, g: &DktParams) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((w, gr), m), v) in p
            .tensors_mut()
            .into_iter()
            .zip(g.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..w.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * gr[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * gr[i] * gr[i];
                w[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

fn clip_global_norm(g: &mut DktParams, max_norm: f64) {
    let norm = g
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for t in g.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn mean_loss(p: &DktParams, seqs: &[Sequence]) -> f64 {
    let steps: usize = seqs.iter().map(Vec::len).sum();
    let total: f64 = seqs.iter().map(|s| sequence_loss(p, s)).sum();
    total / steps.max(1) as f64
}

pub fn fit_bptt(data: &Dataset, s: &Scenario, cfg: &DktConfig) -> Result<DktFit> {
    let mut seqs: Vec<Sequence> = data
        .trajectories
        .iter()
        .map(|tr| tr.attempts.iter().map(|a| (a.task_id, a.success)).collect())
        .filter(|s: &Sequence| !s.is_empty())
        .collect();
    if seqs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = stream(derive_seed(cfg.seed, Domain::DktTraining, 0));
    seqs.shuffle(&mut rng);
    let n_val = if seqs.len() >= 2 {
        ((seqs.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, seqs.len() - 1)
    } else {
        0
    };
    let val = seqs.split_off(seqs.len() - n_val);
    let train = seqs;

    let mut params = init_params(s.num_tasks, cfg, &mut rng);
    let mut adam = Adam::new(&params, cfg.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut train_loss = Vec::new();
    let mut validation_loss = Vec::new();
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut stale = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0usize;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut grad = DktParams::zeros(params.num_tasks, params.hidden);
            let mut loss = 0.0;
            let mut steps = 0usize;
            for &i in batch {
                loss += sequence_gradient(&params, &train[i], &mut grad);
                steps += train[i].len();
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    model: "dkt",
                    iteration: epoch,
                    loss,
                });
            }
            let inv = 1.0 / steps as f64;
            for t in grad.tensors_mut() {
                t.iter_mut().for_each(|v| *v *= inv);
            }
            clip_global_norm(&mut grad, cfg.clip_norm);
            adam.step(&mut params, &grad);
            epoch_loss += loss;
            epoch_steps += steps;
        }
        train_loss.push(epoch_loss / epoch_steps as f64);

        if val.is_empty() {
            best = (train_loss[epoch], params.clone(), epoch);
            continue;
        }
        let vl = mean_loss(&params, &val);
        if !vl.is_finite() {
            return Err(Error::NonFiniteLoss {
                model: "dkt",
                iteration: epoch,
                loss: vl,
            });
        }
        validation_loss.push(vl);
        if vl < best.0 {
            best = (vl, params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    Ok(DktFit {
        params: best.1,
        train_loss,
        validation_loss,
        best_epoch: best.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(m: usize, h: usize, seed: u64) -> DktParams {
        let mut rng = stream(seed);
        let mut p = DktParams::zeros(m, h);
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-0.8..0.8);
            }
        }
        p
    }

    fn relative_error(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = a
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let seq = vec![(TaskId(1), true), (TaskId(3), false), (TaskId(0), true)];
        for seed in 0..5 {
            let p = random_params(4, 4, seed);
            let mut grad = DktParams::zeros(4, 4);
            sequence_gradient(&p, &seq, &mut grad);
            let h = 1e-5;
            for (ti, name) in DktParams::TENSOR_NAMES.iter().enumerate() {
                let analytic = grad.tensors()[ti].to_vec();
                let numeric: Vec<f64> = (0..analytic.len())
                    .map(|i| {
                        let mut plus = p.clone();
                        plus.tensors_mut()[ti][i] += h;
                        let mut minus = p.clone();
                        minus.tensors_mut()[ti][i] -= h;
                        (sequence_loss(&plus, &seq) - sequence_loss(&minus, &seq)) / (2.0 * h)
                    })
                    .collect();
                let err = relative_error(&analytic, &numeric);
                assert!(err <= 1e-4, "{name}: relative error {err}");
            }
        }
    }

    #[test]
    fn gradient_loss_matches_forward_loss() {
        let p = random_params(4, 6, 3);
        let seq = vec![(TaskId(2), false), (TaskId(2), true), (TaskId(1), true), (TaskId(0), false)];
        let mut grad = DktParams::zeros(4, 6);
        let l = sequence_gradient(&p, &seq, &mut grad);
        assert!((l - sequence_loss(&p, &seq)).abs() < 1e-12);
    }

    #[test]
    fn recurrent_init_is_scaled_orthogonal() {
        let cfg = DktConfig::default();
        let mut rng = stream(1);
        let p = init_params(4, &cfg, &mut rng);
        let h = cfg.hidden;
        let block = DMatrix::from_fn(h, h, |i, j| p.w_update.get(i, j) / cfg.recurrent_scale);
        let prod = block.transpose() * &block;
        assert!((prod - DMatrix::<f64>::identity(h, h)).abs().max() < 1e-10);
        assert!(p.b_update.iter().chain(&p.b_out).all(|&b| b == 0.0));
    }
}
