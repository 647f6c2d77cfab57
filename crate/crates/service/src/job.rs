use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Minimum number of frames a capture needs before SfM is attempted.
pub const MIN_FRAMES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Extracting,
    Sfm,
    Training,
    Ready,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Ready | JobState::Failed)
    }

    /// Allowed edges: the forward chain, the skips taken by archive uploads
    /// (frames skip extraction, frames with a sparse model skip SfM too), and
    /// failure from any live state.
    pub fn can_advance_to(self, to: JobState) -> bool {
        use JobState::*;
        match (self, to) {
            (Queued, Extracting | Sfm | Training) => true,
            (Extracting, Sfm) | (Sfm, Training) | (Training, Ready) => true,
            (from, Failed) => !from.is_terminal(),
            _ => false,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Extracting => "extracting",
            JobState::Sfm => "sfm",
            JobState::Training => "training",
            JobState::Ready => "ready",
            JobState::Failed => "failed",
        }
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What the upload turned out to contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Video,
    Frames,
    FramesWithSparse,
}

impl PayloadKind {
    pub fn first_stage(self) -> JobState {
        match self {
            PayloadKind::Video => JobState::Extracting,
            PayloadKind::Frames => JobState::Sfm,
            PayloadKind::FramesWithSparse => JobState::Training,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobProgress {
    pub iteration: u32,
    pub total: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: JobState,
    pub to: JobState,
    pub at: DateTime<Utc>,
}

/// Paths relative to the job directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub upload: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparse: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preview: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub state: JobState,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub progress: Option<JobProgress>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub payload: PayloadKind,
    pub artifacts: Artifacts,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal transition {from} -> {to}")]
pub struct IllegalTransition {
    pub from: JobState,
    pub to: JobState,
}

impl Job {
    pub fn new(id: String, payload: PayloadKind, artifacts: Artifacts) -> Self {
        let now = Utc::now();
        Job {
            id,
            state: JobState::Queued,
            created: now,
            updated: now,
            progress: None,
            error: None,
            payload,
            artifacts,
            transitions: Vec::new(),
        }
    }

    pub fn advance(&mut self, to: JobState) -> Result<(), IllegalTransition> {
        if !self.state.can_advance_to(to) {
            return Err(IllegalTransition { from: self.state, to });
        }
        let now = Utc::now();
        self.transitions.push(Transition {
            from: self.state,
            to,
            at: now,
        });
        self.state = to;
        self.updated = now;
        if to != JobState::Training {
            self.progress = None;
        }
        Ok(())
    }

    pub fn fail(&mut self, message: impl Into<String>) -> Result<(), IllegalTransition> {
        self.advance(JobState::Failed)?;
        self.error = Some(message.into());
        Ok(())
    }

    /// Seconds spent in each completed stage, in order.
    pub fn stage_durations(&self) -> Vec<(JobState, f64)> {
        let mut entered = self.created;
        self.transitions
            .iter()
            .map(|t| {
                let secs = (t.at - entered).num_milliseconds() as f64 / 1000.0;
                entered = t.at;
                (t.from, secs)
            })
            .collect()
    }
}
