use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use tokio::sync::watch;
use tracing::warn;

use crate::job::{IllegalTransition, Job, JobProgress, JobState};

const JOB_FILE: &str = "job.json";

/// Cancellation signal for a job's running stage.
#[derive(Clone)]
pub struct Cancel(Arc<watch::Sender<bool>>);

impl Default for Cancel {
    fn default() -> Self {
        Self::new()
    }
}

impl Cancel {
    pub fn new() -> Self {
        Cancel(Arc::new(watch::channel(false).0))
    }

    pub fn cancel(&self) {
        self.0.send_replace(true);
    }

    pub fn is_cancelled(&self) -> bool {
        *self.0.borrow()
    }

    pub async fn cancelled(&self) {
        let mut rx = self.0.subscribe();
        let _ = rx.wait_for(|c| *c).await;
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("job {0} not found")]
    NotFound(String),
    #[error(transparent)]
    Transition(#[from] IllegalTransition),
    #[error("cannot persist job {id}: {source}")]
    Io { id: String, source: io::Error },
}

struct Entry {
    job: Job,
    cancel: Cancel,
}

/// Job records, one JSON document per job directory. Every mutation goes
/// through the map lock and is written to disk before it becomes visible.
pub struct JobStore {
    root: PathBuf,
    jobs: Mutex<HashMap<String, Entry>>,
}

impl JobStore {
    /// Opens `root/jobs`, loading every readable job record.
    pub fn open(root: &Path) -> io::Result<Self> {
        let jobs_dir = root.join("jobs");
        std::fs::create_dir_all(&jobs_dir)?;
        let mut jobs = HashMap::new();
        for entry in std::fs::read_dir(&jobs_dir)? {
            let path = entry?.path().join(JOB_FILE);
            let loaded = std::fs::read(&path)
                .map_err(|e| e.to_string())
                .and_then(|b| serde_json::from_slice::<Job>(&b).map_err(|e| e.to_string()));
            match loaded {
                Ok(job) => {
                    jobs.insert(
                        job.id.clone(),
                        Entry {
                            job,
                            cancel: Cancel::new(),
                        },
                    );
                }
                Err(e) => warn!(path = %path.display(), "skipping unreadable job record: {e}"),
            }
        }
        Ok(JobStore {
            root: jobs_dir,
            jobs: Mutex::new(jobs),
        })
    }

    pub fn job_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    fn lock(&self) -> MutexGuard<'_, HashMap<String, Entry>> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn persist(&self, job: &Job) -> Result<(), StoreError> {
        let io = |source| StoreError::Io {
            id: job.id.clone(),
            source,
        };
        let dir = self.job_dir(&job.id);
        let tmp = dir.join(format!("{JOB_FILE}.tmp"));
        let bytes = serde_json::to_vec_pretty(job).expect("job serializes");
        std::fs::write(&tmp, bytes).map_err(io)?;
        std::fs::rename(&tmp, dir.join(JOB_FILE)).map_err(io)
    }

    pub fn insert(&self, job: Job) -> Result<(), StoreError> {
        self.persist(&job)?;
        self.lock().insert(
            job.id.clone(),
            Entry {
                job,
                cancel: Cancel::new(),
            },
        );
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.lock().get(id).map(|e| e.job.clone())
    }

    pub fn cancel_handle(&self, id: &str) -> Option<Cancel> {
        self.lock().get(id).map(|e| e.cancel.clone())
    }

    /// Non-terminal jobs, oldest first.
    pub fn unfinished(&self) -> Vec<Job> {
        let mut jobs: Vec<Job> = self
            .lock()
            .values()
            .filter(|e| !e.job.state.is_terminal())
            .map(|e| e.job.clone())
            .collect();
        jobs.sort_by(|a, b| a.created.cmp(&b.created).then_with(|| a.id.cmp(&b.id)));
        jobs
    }

    /// Applies `f` to a copy of the job and commits it once persisted.
    pub fn update<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Job) -> Result<T, IllegalTransition>,
    ) -> Result<(Job, T), StoreError> {
        let mut jobs = self.lock();
        let entry = jobs.get_mut(id).ok_or_else(|| StoreError::NotFound(id.into()))?;
        let mut job = entry.job.clone();
        let out = f(&mut job)?;
        job.updated = chrono::Utc::now();
        self.persist(&job)?;
        entry.job = job.clone();
        Ok((job, out))
    }

    pub fn advance(&self, id: &str, to: JobState) -> Result<Job, StoreError> {
        self.update(id, |job| job.advance(to)).map(|(job, _)| job)
    }

    pub fn fail(&self, id: &str, message: &str) -> Result<Job, StoreError> {
        self.update(id, |job| job.fail(message)).map(|(job, _)| job)
    }

    /// In-memory only; a restarted stage begins its progress anew.
    pub fn set_progress(&self, id: &str, progress: JobProgress) {
        if let Some(entry) = self.lock().get_mut(id) {
            if entry.job.state == JobState::Training {
                entry.job.progress = Some(progress);
            }
        }
    }

    /// Stops every running stage without touching the records.
    pub fn cancel_all(&self) {
        for entry in self.lock().values() {
            entry.cancel.cancel();
        }
    }

    /// Forgets the job, cancels its running stage and deletes its files.
    pub fn remove(&self, id: &str) -> Result<(), StoreError> {
        let entry = self
            .lock()
            .remove(id)
            .ok_or_else(|| StoreError::NotFound(id.into()))?;
        entry.cancel.cancel();
        match std::fs::remove_dir_all(self.job_dir(id)) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(StoreError::Io {
                id: id.into(),
                source: e,
            }),
            _ => Ok(()),
        }
    }
}
