//! Append-only registry of asynchronous solve jobs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use lotdesign::{CancelToken, Status};
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;

use crate::solve::SolverChoice;

/// Trace lines kept in memory per job; later records are counted but dropped.
pub const TRACE_LIMIT: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Running,
    Succeeded { solution_id: String, objective: f64, status: Status },
    Failed { code: String, message: String },
}

#[derive(Debug)]
struct Progress {
    state: JobState,
    trace: Vec<String>,
    dropped: u64,
}

#[derive(Debug)]
pub struct Job {
    pub id: String,
    pub solver: SolverChoice,
    pub instance_id: String,
    pub request_id: Option<String>,
    pub created_unix: u64,
    pub cancel: CancelToken,
    progress: Mutex<Progress>,
    changed: Notify,
}

/// Snapshot of a job for API responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub id: String,
    pub solver: SolverChoice,
    pub instance_id: String,
    pub request_id: Option<String>,
    pub created_unix: u64,
    #[serde(flatten)]
    pub state: JobState,
    pub trace_records: u64,
    pub cancel_requested: bool,
}

impl Job {
    pub fn push_trace(&self, line: String) {
        {
            let mut p = self.progress.lock().unwrap();
            if p.trace.len() < TRACE_LIMIT {
                p.trace.push(line);
            } else {
                p.dropped += 1;
            }
        }
        self.changed.notify_waiters();
    }

    pub fn finish(&self, state: JobState) {
        self.progress.lock().unwrap().state = state;
        self.changed.notify_waiters();
    }

    pub fn is_running(&self) -> bool {
        self.progress.lock().unwrap().state == JobState::Running
    }

    /// Trace lines from index `from` on, and whether the job has finished.
    pub fn trace_since(&self, from: usize) -> (Vec<String>, bool) {
        let p = self.progress.lock().unwrap();
        let lines = p.trace.get(from..).map(<[String]>::to_vec).unwrap_or_default();
        (lines, p.state != JobState::Running)
    }

    pub fn trace_text(&self) -> String {
        let p = self.progress.lock().unwrap();
        p.trace.iter().map(|l| format!("{l}\n")).collect()
    }

    /// Resolves on the next trace record or state change.
    pub fn notified(&self) -> tokio::sync::futures::Notified<'_> {
        self.changed.notified()
    }

    pub fn view(&self) -> JobView {
        let p = self.progress.lock().unwrap();
        JobView {
            id: self.id.clone(),
            solver: self.solver,
            instance_id: self.instance_id.clone(),
            request_id: self.request_id.clone(),
            created_unix: self.created_unix,
            state: p.state.clone(),
            trace_records: p.trace.len() as u64 + p.dropped,
            cancel_requested: self.cancel.is_cancelled(),
        }
    }
}

#[derive(Debug, Default)]
pub struct JobRegistry {
    jobs: RwLock<HashMap<String, Arc<Job>>>,
    order: RwLock<Vec<String>>,
    counter: AtomicU64,
}

impl JobRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&self, solver: SolverChoice, instance_id: String, request_id: Option<String>) -> Arc<Job> {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let id = format!("job-{:x}-{n}", now.as_nanos());
        let job = Arc::new(Job {
            id: id.clone(),
            solver,
            instance_id,
            request_id,
            created_unix: now.as_secs(),
            cancel: CancelToken::new(),
            progress: Mutex::new(Progress { state: JobState::Running, trace: Vec::new(), dropped: 0 }),
            changed: Notify::new(),
        });
        self.jobs.write().unwrap().insert(id.clone(), job.clone());
        self.order.write().unwrap().push(id);
        job
    }

    pub fn get(&self, id: &str) -> Option<Arc<Job>> {
        self.jobs.read().unwrap().get(id).cloned()
    }

    /// Every job in creation order.
    pub fn list(&self) -> Vec<JobView> {
        let jobs = self.jobs.read().unwrap();
        self.order.read().unwrap().iter().filter_map(|id| jobs.get(id)).map(|j| j.view()).collect()
    }
}
