//! Medians and the paired Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest number of non-zero differences handled by exact enumeration.
pub const EXACT_LIMIT: usize = 25;

/// Smallest paired sample accepted.
pub const MIN_PAIRS: usize = 10;

/// Median; the mean of the two middle values for even lengths, NaN if empty.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    NormalApproximation,
    /// Every difference was zero.
    NoDifferences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of positive differences `b - a`.
    pub statistic: f64,
    /// Pairs left after dropping zero differences.
    pub n_nonzero: usize,
    pub p_value: f64,
    pub method: WilcoxonMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
}

/// Ranks of `|d|` over the non-zero differences, ties averaged.
pub fn signed_ranks(diffs: &[f64]) -> Vec<(f64, bool)> {
    let mut nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut out = Vec::with_capacity(nz.len());
    let mut i = 0;
    while i < nz.len() {
        let mut j = i;
        while j + 1 < nz.len() && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        let rank = (i + j + 2) as f64 / 2.0;
        out.extend(nz[i..=j].iter().map(|&d| (rank, d > 0.0)));
        i = j + 1;
    }
    out
}

fn tie_groups(ranks: &[(f64, bool)]) -> Vec<usize> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < ranks.len() {
        let mut j = i;
        while j < ranks.len() && ranks[j].0 == ranks[i].0 {
            j += 1;
        }
        groups.push(j - i);
        i = j;
    }
    groups
}

/// Exact two-sided p-value of `W+` given the (possibly tied) ranks, by
/// counting sign assignments over doubled integer ranks.
fn exact_p(ranks: &[(f64, bool)], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let w = (2.0 * w_plus).round() as usize;
    let all: f64 = counts.iter().sum();
    let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
    let upper: f64 = counts[w..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Two-sided paired signed-rank test on `b - a`. Exact for up to
/// [`EXACT_LIMIT`] non-zero differences, otherwise the normal approximation
/// with tie-corrected variance and continuity correction.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() || a.len() < MIN_PAIRS {
        return Err(Error::InsufficientPairs {
            left: a.len(),
            right: b.len(),
        });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let ranks = signed_ranks(&diffs);
    let n = ranks.len();
    if n == 0 {
        log::warn!("wilcoxon: all {} differences are zero, reporting p = 1", a.len());
        return Ok(WilcoxonResult {
            statistic: 0.0,
            n_nonzero: 0,
            p_value: 1.0,
            method: WilcoxonMethod::NoDifferences,
            z: None,
        });
    }
    let w_plus: f64 = ranks.iter().filter(|r| r.1).map(|r| r.0).sum();
    if n <= EXACT_LIMIT {
        return Ok(WilcoxonResult {
            statistic: w_plus,
            n_nonzero: n,
            p_value: exact_p(&ranks, w_plus),
            method: WilcoxonMethod::Exact,
            z: None,
        });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let ties: f64 = tie_groups(&ranks)
        .into_iter()
        .map(|t| (t as f64).powi(3) - t as f64)
        .sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(WilcoxonResult {
        statistic: w_plus,
        n_nonzero: n,
        p_value: erfc(z / std::f64::consts::SQRT_2).min(1.0),
        method: WilcoxonMethod::NormalApproximation,
        z: Some(z * (w_plus - mean).signum()),
    })
}
