//! In-memory registry of background classification jobs.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use isomatrix_core::pipeline::BatchSummary;

use crate::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub status: JobStatus,
    pub total: usize,
    pub completed: usize,
    /// Per-project outcome, set once the batch is stored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<BatchSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

#[derive(Clone, Default)]
pub(crate) struct JobRegistry {
    jobs: Arc<Mutex<HashMap<String, Job>>>,
}

impl JobRegistry {
    pub fn create(&self, total: usize) -> Job {
        let job = Job {
            id: uuid::Uuid::new_v4().to_string(),
            status: JobStatus::Running,
            total,
            completed: 0,
            summary: None,
            error: None,
        };
        self.lock().insert(job.id.clone(), job.clone());
        job
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.lock().get(id).cloned()
    }

    pub fn advance(&self, id: &str) {
        if let Some(job) = self.lock().get_mut(id) {
            job.completed += 1;
        }
    }

    pub fn finish(&self, id: &str, outcome: Result<BatchSummary, ApiError>) {
        if let Some(job) = self.lock().get_mut(id) {
            match outcome {
                Ok(summary) => {
                    job.status = JobStatus::Succeeded;
                    job.summary = Some(summary);
                }
                Err(e) => {
                    job.status = JobStatus::Failed;
                    job.error = Some(e);
                }
            }
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Job>> {
        // A panic while holding the lock leaves the map itself consistent.
        self.jobs.lock().unwrap_or_else(|e| e.into_inner())
    }
}
