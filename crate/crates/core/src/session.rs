//! Interactive teaching sessions: a human picks tasks and decides when to
//! stop, while the model family stays hidden behind a blind label.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::episode::{append_jsonl, EpisodeLog, StopReason};
use crate::experiment::{Controller, EpisodeState, Teacher};
use crate::model::{Condition, ModelSet};
use crate::policy::BktGainMode;
use crate::scenario::{SkillId, TaskId};
use crate::seed::{derive_seed, stream, Domain, StreamRng};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Internal(#[from] crate::error::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Stopped,
    Capped,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CreateRequest {
    /// One of `bkt`, `pfa`, `dkt`; random when absent.
    #[serde(default)]
    pub condition: Option<Condition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub blind_label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttemptRequest {
    pub task_id: TaskId,
    #[serde(default)]
    pub decision_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: TaskId,
    pub skills: Vec<SkillId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub task_id: TaskId,
    pub success: bool,
}

/// Model ability estimates over time, or an explicit marker that the model
/// has none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityView {
    pub available: bool,
    /// Estimates before the first attempt and after each attempt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub session_id: String,
    pub blind_label: String,
    pub status: Status,
    pub step: usize,
    pub max_steps: usize,
    pub created_at_ms: u64,
    pub tasks: Vec<TaskView>,
    pub history: Vec<HistoryRow>,
    pub predicted_probs: Vec<f64>,
    pub ability: AbilityView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptResponse {
    pub success: bool,
    pub state: StateView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Debrief {
    pub session_id: String,
    pub blind_label: String,
    pub condition: Condition,
    pub status: Status,
    pub steps: usize,
    pub stop_reason: StopReason,
    pub premature: bool,
    pub true_mastery_reached: bool,
    pub steps_to_true_mastery: Option<usize>,
    pub true_ability_trace: Vec<Vec<f64>>,
    pub ability: AbilityView,
}

struct Session {
    id: String,
    label: String,
    created_at_ms: u64,
    controller: Controller,
    episode: EpisodeState,
    estimates: Option<Vec<Vec<f64>>>,
    status: Status,
    /// Set once the log has been written.
    log: Option<EpisodeLog>,
}

impl Session {
    fn ability_view(&self) -> AbilityView {
        AbilityView {
            available: self.estimates.is_some(),
            trace: self.estimates.clone(),
        }
    }

    fn view(&self, s: &crate::scenario::Scenario) -> StateView {
        StateView {
            session_id: self.id.clone(),
            blind_label: self.label.clone(),
            status: self.status,
            step: self.episode.steps(),
            max_steps: s.max_steps,
            created_at_ms: self.created_at_ms,
            tasks: s
                .tasks()
                .map(|j| TaskView {
                    task_id: j,
                    skills: s.skills_of(j).to_vec(),
                })
                .collect(),
            history: self
                .episode
                .records
                .iter()
                .map(|r| HistoryRow {
                    step: r.step,
                    task_id: r.task_id,
                    success: r.success,
                })
                .collect(),
            predicted_probs: self.controller.predictions(&self.episode.student, s),
            ability: self.ability_view(),
        }
    }

    fn debrief(&self, log: &EpisodeLog) -> Debrief {
        Debrief {
            session_id: self.id.clone(),
            blind_label: self.label.clone(),
            condition: log.condition,
            status: self.status,
            steps: log.steps(),
            stop_reason: log.stop_reason,
            premature: log.premature(),
            true_mastery_reached: log.steps_to_true_mastery.is_some(),
            steps_to_true_mastery: log.steps_to_true_mastery,
            true_ability_trace: log.true_ability_trace.clone(),
            ability: self.ability_view(),
        }
    }
}

/// Owns all live sessions. Each session sits behind its own mutex, so
/// requests to one session are serialized while sessions run in parallel.
pub struct SessionManager {
    models: ModelSet,
    master_seed: u64,
    labels: HashMap<Condition, String>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_index: AtomicU64,
    assign_rng: Mutex<StreamRng>,
    log_path: Option<PathBuf>,
    log_lock: Mutex<()>,
}

impl SessionManager {
    pub fn new(models: ModelSet, master_seed: u64, log_path: Option<PathBuf>) -> Self {
        let mut rng = stream(derive_seed(master_seed, Domain::Session, u64::MAX));
        let mut letters = ["A", "B", "C"];
        letters.shuffle(&mut rng);
        let labels = Condition::TRACERS
            .into_iter()
            .zip(letters)
            .map(|(c, l)| (c, l.to_string()))
            .collect();
        Self {
            models,
            master_seed,
            labels,
            sessions: RwLock::new(HashMap::new()),
            next_index: AtomicU64::new(0),
            assign_rng: Mutex::new(rng),
            log_path,
            log_lock: Mutex::new(()),
        }
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    pub fn blind_label(&self, c: Condition) -> Option<&str> {
        self.labels.get(&c).map(String::as_str)
    }

    pub fn create(&self, req: CreateRequest) -> Result<CreateResponse, SessionError> {
        let condition = match req.condition {
            Some(Condition::EloOracle) => {
                return Err(SessionError::Validation(
                    "condition must be one of bkt, pfa, dkt".into(),
                ))
            }
            Some(c) => c,
            None => {
                let i = self.assign_rng.lock().unwrap().random_range(0..Condition::TRACERS.len());
                Condition::TRACERS[i]
            }
        };
        let s = &*self.models.scenario;
        let index = self.next_index.fetch_add(1, Ordering::SeqCst);
        let seed = derive_seed(self.master_seed, Domain::Session, index);
        let controller = Controller::for_condition(&self.models, condition, BktGainMode::default());
        let episode = EpisodeState::new(s, index, seed);
        let estimates = controller
            .ability_estimates(&episode.student)
            .map(|e| vec![e]);
        let id = uuid::Uuid::new_v4().to_string();
        let label = self.labels[&condition].clone();
        let session = Session {
            id: id.clone(),
            label: label.clone(),
            created_at_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            controller,
            episode,
            estimates,
            status: Status::Active,
            log: None,
        };
        self.sessions
            .write()
            .unwrap()
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        log::info!("session {id} created (label {label})");
        Ok(CreateResponse {
            session_id: id,
            blind_label: label,
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(id.to_string()))
    }

    pub fn state(&self, id: &str) -> Result<StateView, SessionError> {
        let session = self.session(id)?;
        let guard = session.lock().unwrap();
        Ok(guard.view(&self.models.scenario))
    }

    pub fn attempt(&self, id: &str, req: AttemptRequest) -> Result<AttemptResponse, SessionError> {
        let session = self.session(id)?;
        let mut guard = session.lock().unwrap();
        let s = &*self.models.scenario;
        if guard.status != Status::Active {
            return Err(SessionError::Conflict(format!(
                "session {id} is {:?}",
                guard.status
            )));
        }
        if s.check_task(req.task_id).is_err() {
            return Err(SessionError::Validation(format!(
                "task_id must be between 1 and {}",
                s.num_tasks
            )));
        }
        let sess = &mut *guard;
        let success = sess
            .episode
            .attempt(&mut sess.controller, s, req.task_id, req.decision_ms)?;
        if let Some(trace) = &mut sess.estimates {
            trace.push(
                sess.controller
                    .ability_estimates(&sess.episode.student)
                    .unwrap_or_default(),
            );
        }
        if sess.episode.steps() >= s.max_steps {
            sess.status = Status::Capped;
            self.finish(sess, StopReason::StepCap)?;
        }
        Ok(AttemptResponse {
            success,
            state: sess.view(s),
        })
    }

    /// Ends an active session and returns the unblinded debrief. Stopping an
    /// already finished session returns the same debrief without logging again.
    pub fn stop(&self, id: &str) -> Result<Debrief, SessionError> {
        let session = self.session(id)?;
        let mut guard = session.lock().unwrap();
        let sess = &mut *guard;
        if sess.status == Status::Active {
            sess.status = Status::Stopped;
            self.finish(sess, StopReason::HumanStop)?;
        }
        let log = sess.log.as_ref().expect("finished sessions keep their log");
        Ok(sess.debrief(log))
    }

    fn finish(&self, sess: &mut Session, reason: StopReason) -> Result<(), SessionError> {
        let log = sess
            .episode
            .clone()
            .finish(sess.controller.condition(), reason);
        if let Some(path) = &self.log_path {
            let _guard = self.log_lock.lock().unwrap();
            append_jsonl(path, &log)?;
        }
        log::info!("session {} finished: {:?} after {} steps", sess.id, reason, log.steps());
        sess.log = Some(log);
        Ok(())
    }
}
