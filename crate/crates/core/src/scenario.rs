//! Curriculum definition: tasks, skills, difficulties and learning rates.
//!
//! Task and skill ids are 0-based in memory and 1-based in every external
//! format (config files, logs, HTTP payloads). The [`TaskId`] and [`SkillId`]
//! newtypes do the shift in their serde impls.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

macro_rules! one_based_id {
    ($name:ident, $what:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }

            /// Builds an id from its external 1-based number.
            pub fn from_one_based(n: usize) -> Option<Self> {
                n.checked_sub(1).map(Self)
            }

            pub fn one_based(self) -> usize {
                self.0 + 1
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($what, " {}"), self.0 + 1)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_u64(self.0 as u64 + 1)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let n = u64::deserialize(d)?;
                Self::from_one_based(n as usize).ok_or_else(|| {
                    serde::de::Error::custom(concat!($what, " ids are 1-based; got 0"))
                })
            }
        }
    };
}

one_based_id!(TaskId, "task");
one_based_id!(SkillId, "skill");

/// Static curriculum shared by the simulator, the tracers and the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub num_tasks: usize,
    pub num_skills: usize,
    /// For each task, the skills it requires.
    pub skill_map: Vec<Vec<SkillId>>,
    pub difficulties: Vec<f64>,
    pub slope: f64,
    pub kappa_success: f64,
    pub kappa_failure: f64,
    /// Mastery bar in ability units.
    pub mastery_threshold: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioViolation {
    NoTasks,
    NoSkills,
    SkillMapLength { expected: usize, got: usize },
    DifficultiesLength { expected: usize, got: usize },
    EmptySkillSet(TaskId),
    UnknownSkill(TaskId, SkillId),
    DuplicateSkill(TaskId, SkillId),
    OrphanSkill(SkillId),
    NonPositiveLearningRate(&'static str, f64),
    NonPositiveSlope(f64),
    NonFinite(&'static str),
    ZeroMaxSteps,
}

impl fmt::Display for ScenarioViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ScenarioViolation::*;
        match self {
            NoTasks => write!(f, "scenario has no tasks"),
            NoSkills => write!(f, "scenario has no skills"),
            SkillMapLength { expected, got } => {
                write!(f, "skill_map has {got} entries, expected {expected}")
            }
            DifficultiesLength { expected, got } => {
                write!(f, "difficulties has {got} entries, expected {expected}")
            }
            EmptySkillSet(t) => write!(f, "empty skill set for {t}"),
            UnknownSkill(t, s) => write!(f, "{t} references unknown {s}"),
            DuplicateSkill(t, s) => write!(f, "{t} lists {s} twice"),
            OrphanSkill(s) => write!(f, "{s} is not trained by any task"),
            NonPositiveLearningRate(name, v) => {
                write!(f, "non-positive learning rate {name} = {v}")
            }
            NonPositiveSlope(v) => write!(f, "non-positive slope {v}"),
            NonFinite(name) => write!(f, "non-finite value in {name}"),
            ZeroMaxSteps => write!(f, "max_steps must be at least 1"),
        }
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Scenario {
    /// Four tasks over two skills: tasks 1 and 2 train one skill each, tasks
    /// 3 and 4 train both; task 3 is the easy one.
    pub fn default_scenario() -> Self {
        let s = |n| SkillId(n);
        Self {
            num_tasks: 4,
            num_skills: 2,
            skill_map: vec![vec![s(0)], vec![s(1)], vec![s(0), s(1)], vec![s(0), s(1)]],
            difficulties: vec![1.0, 1.0, 0.0, 1.0],
            slope: 1.0,
            kappa_success: 1.0,
            kappa_failure: 0.5,
            mastery_threshold: 1.5,
            max_steps: 30,
        }
    }

    /// Returns every invariant violation; an empty list means the scenario is usable.
    pub fn violations(&self) -> Vec<ScenarioViolation> {
        use ScenarioViolation::*;
        let mut out = Vec::new();
        if self.num_tasks == 0 {
            out.push(NoTasks);
        }
        if self.num_skills == 0 {
            out.push(NoSkills);
        }
        if self.skill_map.len() != self.num_tasks {
            out.push(SkillMapLength {
                expected: self.num_tasks,
                got: self.skill_map.len(),
            });
        }
        if self.difficulties.len() != self.num_tasks {
            out.push(DifficultiesLength {
                expected: self.num_tasks,
                got: self.difficulties.len(),
            });
        }
        let mut covered = vec![false; self.num_skills];
        for (j, skills) in self.skill_map.iter().enumerate() {
            let task = TaskId(j);
            if skills.is_empty() {
                out.push(EmptySkillSet(task));
            }
            for (i, &k) in skills.iter().enumerate() {
                if k.0 >= self.num_skills {
                    out.push(UnknownSkill(task, k));
                } else {
                    covered[k.0] = true;
                }
                if skills[..i].contains(&k) {
                    out.push(DuplicateSkill(task, k));
                }
            }
        }
        for (k, c) in covered.iter().enumerate() {
            if !c {
                out.push(OrphanSkill(SkillId(k)));
            }
        }
        for (name, v) in [
            ("kappa_success", self.kappa_success),
            ("kappa_failure", self.kappa_failure),
        ] {
            if !v.is_finite() {
                out.push(NonFinite(name));
            } else if v <= 0.0 {
                out.push(NonPositiveLearningRate(name, v));
            }
        }
        if !self.slope.is_finite() {
            out.push(NonFinite("slope"));
        } else if self.slope <= 0.0 {
            out.push(NonPositiveSlope(self.slope));
        }
        if !self.mastery_threshold.is_finite() {
            out.push(NonFinite("mastery_threshold"));
        }
        if self.difficulties.iter().any(|b| !b.is_finite()) {
            out.push(NonFinite("difficulties"));
        }
        if self.max_steps == 0 {
            out.push(ZeroMaxSteps);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(v))
        }
    }

    pub fn tasks(&self) -> impl Iterator<Item = TaskId> {
        (0..self.num_tasks).map(TaskId)
    }

    pub fn skills_of(&self, task: TaskId) -> &[SkillId] {
        &self.skill_map[task.0]
    }

    pub fn difficulty(&self, task: TaskId) -> f64 {
        self.difficulties[task.0]
    }

    pub fn check_task(&self, task: TaskId) -> Result<()> {
        if task.0 < self.num_tasks {
            Ok(())
        } else {
            Err(Error::InvalidTask(task.one_based()))
        }
    }

    /// Success probability a learner exactly at the mastery threshold has on
    /// a single skill of `task`. Probability-based tracers must reach this
    /// bar on every task to predict mastery.
    pub fn mastery_bar(&self, task: TaskId) -> f64 {
        logistic(self.slope * (self.mastery_threshold - self.difficulty(task)))
    }

    pub fn mastery_bars(&self) -> Vec<f64> {
        self.tasks().map(|j| self.mastery_bar(j)).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let s: Scenario = serde_json::from_str(&text)?;
        s.validate()?;
        Ok(s)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serialises");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Self::default_scenario()
    }
}
