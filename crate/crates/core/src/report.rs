//! Per-episode CSV tables and the summary report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{ConditionResult, EpisodeOutcome, Summary};
use crate::model::Condition;
use crate::stats::{wilcoxon_signed_rank, WilcoxonResult};

pub const SUMMARY_FILE: &str = "summary.json";

pub fn csv_file_name(c: Condition) -> String {
    format!("{}.csv", c.as_str())
}

pub fn meta_file_name(c: Condition) -> String {
    format!("{}.meta.json", c.as_str())
}

pub fn write_episode_csv(path: &Path, episodes: &[EpisodeOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in episodes {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episode_csv(path: &Path) -> Result<Vec<EpisodeOutcome>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Everything in a [`ConditionResult`] except the per-episode rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMeta {
    pub condition: Condition,
    pub scenario_hash: String,
    pub master_seed: u64,
    pub max_steps: usize,
    pub episodes: usize,
}

/// Writes `<condition>.csv` and `<condition>.meta.json` into `dir`.
pub fn save_condition(dir: &Path, r: &ConditionResult) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(csv_file_name(r.condition));
    write_episode_csv(&csv_path, &r.episodes)?;
    let meta = ConditionMeta {
        condition: r.condition,
        scenario_hash: r.scenario_hash.clone(),
        master_seed: r.master_seed,
        max_steps: r.max_steps,
        episodes: r.episodes.len(),
    };
    std::fs::write(
        dir.join(meta_file_name(r.condition)),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(csv_path)
}

/// Loads every condition saved in `dir` by [`save_condition`].
pub fn load_conditions(dir: &Path) -> Result<Vec<ConditionResult>> {
    let mut out = Vec::new();
    for c in Condition::ALL {
        let meta_path = dir.join(meta_file_name(c));
        if !meta_path.exists() {
            continue;
        }
        let meta: ConditionMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?;
        let episodes = read_episode_csv(&dir.join(csv_file_name(c)))?;
        if episodes.len() != meta.episodes || episodes.iter().any(|e| e.condition != c) {
            return Err(Error::ModelMismatch(format!(
                "{} does not match {}",
                csv_file_name(c),
                meta_path.display()
            )));
        }
        out.push(ConditionResult {
            condition: c,
            scenario_hash: meta.scenario_hash,
            master_seed: meta.master_seed,
            max_steps: meta.max_steps,
            summary: Summary::of(&episodes, meta.max_steps),
            episodes,
        });
    }
    if out.is_empty() {
        return Err(Error::Missing(format!("condition results in {}", dir.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub master_seed: u64,
    #[serde(flatten)]
    pub summary: Summary,
}

/// Paired test on imputed steps to true mastery, `right - left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub left: Condition,
    pub right: Condition,
    pub median_difference: f64,
    #[serde(flatten)]
    pub test: WilcoxonResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario_hash: String,
    pub max_steps: usize,
    pub seeds: Vec<u64>,
    pub conditions: Vec<ConditionSummary>,
    pub pairwise: Vec<PairwiseTest>,
}

pub fn paired_test(a: &ConditionResult, b: &ConditionResult) -> Result<PairwiseTest> {
    if a.episodes.len() != b.episodes.len()
        || a.episodes.iter().zip(&b.episodes).any(|(x, y)| x.seed != y.seed)
    {
        return Err(Error::ModelMismatch(format!(
            "{} and {} episodes are not paired by seed",
            a.condition, b.condition
        )));
    }
    let (x, y) = (a.imputed_mastery(), b.imputed_mastery());
    Ok(PairwiseTest {
        left: a.condition,
        right: b.condition,
        median_difference: crate::stats::median(
            &x.iter().zip(&y).map(|(p, q)| q - p).collect::<Vec<_>>(),
        ),
        test: wilcoxon_signed_rank(&x, &y)?,
    })
}

pub fn build_report(results: &[ConditionResult]) -> Result<Report> {
    let first = results
        .first()
        .ok_or_else(|| Error::Missing("condition results".into()))?;
    if let Some(r) = results.iter().find(|r| r.scenario_hash != first.scenario_hash) {
        return Err(Error::ModelMismatch(format!(
            "{} was run on a different scenario",
            r.condition
        )));
    }
    let mut seeds: Vec<u64> = results.iter().map(|r| r.master_seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut pairwise = Vec::new();
    for (i, a) in results.iter().enumerate() {
        for b in &results[i + 1..] {
            pairwise.push(paired_test(a, b)?);
        }
    }
    Ok(Report {
        scenario_hash: first.scenario_hash.clone(),
        max_steps: first.max_steps,
        seeds,
        conditions: results
            .iter()
            .map(|r| ConditionSummary {
                condition: r.condition,
                master_seed: r.master_seed,
                summary: r.summary.clone(),
            })
            .collect(),
        pairwise,
    })
}

/// Writes `summary.json` plus one per-episode CSV per condition.
pub fn emit_report(results: &[ConditionResult], out: &Path) -> Result<Report> {
    let report = build_report(results)?;
    std::fs::create_dir_all(out)?;
    for r in results {
        write_episode_csv(&out.join(csv_file_name(r.condition)), &r.episodes)?;
    }
    std::fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}
