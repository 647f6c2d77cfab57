use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use splatcap_core::colmap::{locate_model_dir, read_colmap_sparse};
use splatcap_core::dataset::assemble_dataset;
use splatcap_core::optim::{seed_from_points, train_from, Progress, TrainOptions};
use splatcap_core::ply::{read_splat_ply, write_splat_ply};
use splatcap_core::raster::render;
use tokio::sync::{mpsc, Mutex};
use tracing::{info, warn};

use crate::job::{Job, JobProgress, JobState, MIN_FRAMES};
use crate::payload::count_frames;
use crate::store::{Cancel, StoreError};
use crate::tools::run_tool;
use crate::Shared;

pub const MODEL_FILE: &str = "model.ply";
pub const PREVIEW_FILE: &str = "preview.png";
pub const METRICS_FILE: &str = "metrics.log";

pub(crate) type Queue = Arc<Mutex<mpsc::UnboundedReceiver<String>>>;

/// Pulls job ids until the queue closes.
pub(crate) async fn worker_loop(shared: Arc<Shared>, queue: Queue) {
    loop {
        let next = queue.lock().await.recv().await;
        let Some(id) = next else { break };
        run_job(&shared, &id).await;
    }
}

/// Advances a job stage by stage until it is terminal or deleted.
pub(crate) async fn run_job(shared: &Shared, id: &str) {
    let Some(cancel) = shared.store.cancel_handle(id) else {
        return;
    };
    loop {
        let Some(job) = shared.store.get(id) else { return };
        if cancel.is_cancelled() {
            return;
        }
        let started = Instant::now();
        let outcome = match job.state {
            JobState::Ready | JobState::Failed => return,
            JobState::Queued => Ok(job.payload.first_stage()),
            JobState::Extracting => extract(shared, &job, &cancel).await,
            JobState::Sfm => sfm(shared, &job, &cancel).await,
            JobState::Training => train(shared, &job, cancel.clone()).await,
        };
        if cancel.is_cancelled() {
            return;
        }
        let result = match outcome {
            Ok(next) => {
                info!(job = id, from = %job.state, to = %next, secs = started.elapsed().as_secs_f64(), "stage done");
                shared.store.advance(id, next)
            }
            Err(message) => {
                warn!(job = id, stage = %job.state, "stage failed: {message}");
                shared.store.fail(id, &message)
            }
        };
        match result {
            Ok(_) | Err(StoreError::NotFound(_)) => {}
            Err(e) => {
                warn!(job = id, "cannot record stage result: {e}");
                return;
            }
        }
    }
}

fn reset_dir(dir: &Path) -> Result<(), String> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| format!("cannot clear {}: {e}", dir.display()))?;
    }
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

async fn extract(shared: &Shared, job: &Job, cancel: &Cancel) -> Result<JobState, String> {
    let dir = shared.store.job_dir(&job.id);
    let frames = dir.join("frames");
    reset_dir(&frames)?;
    let fps = shared.config.fps.to_string();
    run_tool(
        "frame extractor",
        &shared.config.extractor_command,
        &[
            ("input", &path_str(&dir.join(&job.artifacts.upload))),
            ("output", &path_str(&frames)),
            ("fps", &fps),
        ],
        &dir,
        shared.config.stage_timeout(),
        cancel,
    )
    .await
    .map_err(|e| e.to_string())?;
    let n = count_frames(&frames);
    if n < MIN_FRAMES {
        return Err(format!("insufficient frames: {n} < {MIN_FRAMES}"));
    }
    shared
        .store
        .update(&job.id, |j| {
            j.artifacts.frames = Some("frames".into());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(JobState::Sfm)
}

async fn sfm(shared: &Shared, job: &Job, cancel: &Cancel) -> Result<JobState, String> {
    let dir = shared.store.job_dir(&job.id);
    let frames = dir.join(job.artifacts.frames.as_deref().ok_or("job has no frames directory")?);
    let output = dir.join("sparse");
    reset_dir(&output)?;
    run_tool(
        "sfm",
        &shared.config.sfm_command,
        &[("input", &path_str(&frames)), ("output", &path_str(&output))],
        &dir,
        shared.config.stage_timeout(),
        cancel,
    )
    .await
    .map_err(|e| e.to_string())?;
    let model_dir = locate_model_dir(&output);
    let model = read_colmap_sparse(&model_dir).map_err(|e| format!("invalid sfm output: {e}"))?;
    if model.images.is_empty() {
        return Err("invalid sfm output: no registered images".into());
    }
    let rel = model_dir
        .strip_prefix(&dir)
        .map(path_str)
        .unwrap_or_else(|_| path_str(&model_dir));
    shared
        .store
        .update(&job.id, |j| {
            j.artifacts.sparse = Some(rel);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(JobState::Training)
}

struct TrainOutput {
    model: Vec<u8>,
    preview: Vec<u8>,
    metrics: String,
}

async fn train(shared: &Shared, job: &Job, cancel: Cancel) -> Result<JobState, String> {
    let dir = shared.store.job_dir(&job.id);
    let frames = dir.join(job.artifacts.frames.as_deref().ok_or("job has no frames directory")?);
    let sparse = dir.join(job.artifacts.sparse.as_deref().ok_or("job has no sparse model")?);
    let config = shared.config.train.clone();
    let timeout = shared.config.stage_timeout();
    let store = shared.store.clone();
    let id = job.id.clone();

    let task = tokio::task::spawn_blocking(move || -> Result<Option<TrainOutput>, String> {
        let model = read_colmap_sparse(&sparse).map_err(|e| format!("invalid sparse model: {e}"))?;
        let dataset = assemble_dataset(&model, &frames, config.downscale).map_err(|e| e.to_string())?;
        let cloud = seed_from_points(&dataset.seed_points).map_err(|e| e.to_string())?;
        let deadline = Instant::now() + timeout;
        let mut timed_out = false;
        let mut on_progress = |p: &Progress| {
            store.set_progress(
                &id,
                JobProgress {
                    iteration: p.iteration,
                    total: p.total,
                },
            );
            if Instant::now() > deadline {
                timed_out = true;
                return ControlFlow::Break(());
            }
            if cancel.is_cancelled() {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        };
        let options = TrainOptions {
            eval_views: &[],
            progress: Some(&mut on_progress),
        };
        let (cloud, report) = train_from(&dataset, cloud, &config, options).map_err(|e| e.to_string())?;
        if timed_out {
            return Err(format!("training timed out after {} s", timeout.as_secs()));
        }
        if report.cancelled {
            return Ok(None);
        }
        let model = write_splat_ply(&cloud);
        read_splat_ply(&model).map_err(|e| format!("written model does not parse: {e}"))?;
        let (image, _) = render(&cloud, &dataset.views[0].camera, config.background).map_err(|e| e.to_string())?;
        let preview = image.encode_png().map_err(|e| e.to_string())?;
        Ok(Some(TrainOutput {
            model,
            preview,
            metrics: report.metrics_log(),
        }))
    });
    let Some(out) = task.await.map_err(|e| format!("training task failed: {e}"))?? else {
        return Err("training cancelled".into());
    };
    for (name, bytes) in [
        (METRICS_FILE, out.metrics.as_bytes()),
        (PREVIEW_FILE, &out.preview[..]),
        (MODEL_FILE, &out.model[..]),
    ] {
        write_atomic(&dir.join(name), bytes)?;
    }
    shared
        .store
        .update(&job.id, |j| {
            j.artifacts.model = Some(MODEL_FILE.into());
            j.artifacts.preview = Some(PREVIEW_FILE.into());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(JobState::Ready)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), String> {
    let mut tmp = PathBuf::from(path);
    tmp.as_mut_os_string().push(".tmp");
    std::fs::write(&tmp, bytes)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| format!("cannot write {}: {e}", path.display()))
}
