//! Trained-model files and the set of models a run or service works with.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bkt::{BktModel, BktTracer};
use crate::dkt::{DktParams, DktTracer};
use crate::error::{Error, Result};
use crate::pfa::{PfaParams, PfaTracer};
use crate::scenario::Scenario;
use crate::tracer::AnyTracer;

/// Experimental condition: a tracer family, or the ground-truth oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Bkt,
    Pfa,
    Dkt,
    EloOracle,
}

impl Condition {
    pub const TRACERS: [Condition; 3] = [Condition::Bkt, Condition::Pfa, Condition::Dkt];
    pub const ALL: [Condition; 4] = [
        Condition::Bkt,
        Condition::Pfa,
        Condition::Dkt,
        Condition::EloOracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Bkt => "bkt",
            Condition::Pfa => "pfa",
            Condition::Dkt => "dkt",
            Condition::EloOracle => "elo-oracle",
        }
    }

    /// Stable id used when deriving per-condition streams.
    pub fn id(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown condition {s:?} (expected bkt, pfa, dkt or elo-oracle)"))
    }
}

/// Contents of a trained-model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TrainedModel {
    Bkt(BktModel),
    Pfa(PfaParams),
    Dkt(DktParams),
}

impl TrainedModel {
    pub fn condition(&self) -> Condition {
        match self {
            TrainedModel::Bkt(_) => Condition::Bkt,
            TrainedModel::Pfa(_) => Condition::Pfa,
            TrainedModel::Dkt(_) => Condition::Dkt,
        }
    }

    pub fn check(&self, s: &Scenario) -> Result<()> {
        match self {
            TrainedModel::Bkt(m) => m.check(s),
            TrainedModel::Pfa(m) => m.check(s),
            TrainedModel::Dkt(m) => m.check(s),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// File name of a family's model inside a models directory.
pub fn model_file_name(c: Condition) -> String {
    format!("{}.json", c.as_str())
}

/// The three fitted tracers plus the scenario they were fitted for.
/// Immutable; tracers built from it share the weights.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub scenario: Arc<Scenario>,
    pub bkt: Arc<BktModel>,
    pub pfa: Arc<PfaParams>,
    pub dkt: Arc<DktParams>,
}

impl ModelSet {
    pub fn new(scenario: Scenario, bkt: BktModel, pfa: PfaParams, dkt: DktParams) -> Result<Self> {
        scenario.validate()?;
        bkt.check(&scenario)?;
        pfa.check(&scenario)?;
        dkt.check(&scenario)?;
        Ok(Self {
            scenario: Arc::new(scenario),
            bkt: Arc::new(bkt),
            pfa: Arc::new(pfa),
            dkt: Arc::new(dkt),
        })
    }

    /// Fresh tracer for `c`; `None` for the oracle condition.
    pub fn tracer(&self, c: Condition) -> Option<AnyTracer> {
        let s = self.scenario.clone();
        match c {
            Condition::Bkt => Some(AnyTracer::Bkt(BktTracer::new(self.bkt.clone(), s))),
            Condition::Pfa => Some(AnyTracer::Pfa(PfaTracer::new(self.pfa.clone(), s))),
            Condition::Dkt => Some(AnyTracer::Dkt(DktTracer::new(self.dkt.clone(), s))),
            Condition::EloOracle => None,
        }
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        TrainedModel::Bkt((*self.bkt).clone()).save(&dir.join(model_file_name(Condition::Bkt)))?;
        TrainedModel::Pfa((*self.pfa).clone()).save(&dir.join(model_file_name(Condition::Pfa)))?;
        TrainedModel::Dkt((*self.dkt).clone()).save(&dir.join(model_file_name(Condition::Dkt)))?;
        Ok(())
    }

    pub fn load_dir(dir: &Path, scenario: Scenario) -> Result<Self> {
        let load = |c: Condition| -> Result<TrainedModel> {
            let path: PathBuf = dir.join(model_file_name(c));
            if !path.exists() {
                return Err(Error::Missing(format!("model file {}", path.display())));
            }
            let m = TrainedModel::load(&path)?;
            if m.condition() != c {
                return Err(Error::ModelMismatch(format!(
                    "{} holds a {} model",
                    path.display(),
                    m.condition()
                )));
            }
            Ok(m)
        };
        let (TrainedModel::Bkt(bkt), TrainedModel::Pfa(pfa), TrainedModel::Dkt(dkt)) = (
            load(Condition::Bkt)?,
            load(Condition::Pfa)?,
            load(Condition::Dkt)?,
        ) else {
            unreachable!("families checked above")
        };
        Self::new(scenario, bkt, pfa, dkt)
    }
}
