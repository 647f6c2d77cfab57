//! The training loop.

use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::adam::{adam_step, AdamState};
use super::backward::backward_with;
use super::config::{ConfigError, TrainConfig};
use super::densify::{densify_and_prune, DensifyParams};
use super::metrics::{loss_and_gradient, psnr, MetricError};
use super::seed::{seed_from_points, SeedError};
use crate::dataset::{TrainingDataset, TrainingView};
use crate::gaussian::SplatCloud;
use crate::math::logit;
use crate::raster::{render, RenderError, RenderStats};
use crate::sh::MAX_SH_DEGREE;

/// Opacity ceiling applied by the periodic reset.
pub const RESET_OPACITY: f64 = 0.01;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("training dataset has no views")]
    EmptyDataset,
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("loss became non-finite at iteration {iteration} on view `{view}` ({splats} splats)")]
    NonFiniteLoss {
        iteration: u32,
        view: String,
        splats: usize,
        report: Box<TrainReport>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: u32,
    pub splat_count: usize,
    /// Mean training loss since the previous checkpoint (over all views at
    /// iteration 0).
    pub loss: f64,
    /// Mean PSNR over the training views; `INFINITY` when saturated.
    pub psnr: f64,
    /// Mean PSNR over the held-out views, when any were given.
    pub eval_psnr: Option<f64>,
    pub elapsed_s: f64,
}

impl Checkpoint {
    pub fn saturated(&self) -> bool {
        self.psnr.is_infinite()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub checkpoints: Vec<Checkpoint>,
    /// Wall-clock seconds per stage, in execution order.
    pub stages: Vec<(String, f64)>,
    pub cancelled: bool,
}

impl TrainReport {
    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    /// One line per checkpoint: `iter count loss psnr elapsed_s`.
    pub fn metrics_log(&self) -> String {
        let mut out = String::new();
        for c in &self.checkpoints {
            let _ = writeln!(
                out,
                "{} {} {:.6} {} {:.3}",
                c.iteration,
                c.splat_count,
                c.loss,
                format_psnr(c.psnr),
                c.elapsed_s
            );
        }
        out
    }
}

fn format_psnr(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p:.4}")
    }
}

/// Progress sent to the callback after every iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub iteration: u32,
    pub total: u32,
    pub splat_count: usize,
    pub loss: f64,
}

/// Optional extras for a training run.
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Views evaluated at every checkpoint but never trained on.
    pub eval_views: &'a [TrainingView],
    /// Called after every iteration; `Break` stops the run early.
    pub progress: Option<&'a mut dyn FnMut(&Progress) -> ControlFlow<()>>,
}

/// Seeds a cloud from the dataset's sparse points and optimizes it.
pub fn train(
    dataset: &TrainingDataset,
    config: &TrainConfig,
) -> Result<(SplatCloud, TrainReport), TrainError> {
    let start = Instant::now();
    let cloud = seed_from_points(&dataset.seed_points)?;
    let seed_s = start.elapsed().as_secs_f64();
    let (cloud, mut report) = train_from(dataset, cloud, config, TrainOptions::default())?;
    report.stages.insert(0, ("seed".into(), seed_s));
    Ok((cloud, report))
}

/// Optimizes `cloud` against the dataset.
///
/// Each iteration takes the next view of a shuffled epoch, renders it,
/// back-propagates the loss and applies one Adam step. The RNG is consumed
/// only by epoch shuffles and split sampling, in iteration order, so the
/// result is a pure function of the inputs and `config.seed`.
pub fn train_from(
    dataset: &TrainingDataset,
    mut cloud: SplatCloud,
    config: &TrainConfig,
    mut options: TrainOptions<'_>,
) -> Result<(SplatCloud, TrainReport), TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let start = Instant::now();
    let extent = dataset.scene_extent();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(cloud.len());
    let mut stats = RenderStats::new(cloud.len());
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = Vec::new();
    let mut loss_sum = 0.0;
    let mut loss_n = 0u32;
    let reset_logit = logit(RESET_OPACITY);

    let initial_loss = mean_loss(&cloud, &dataset.views, config)?;
    report
        .checkpoints
        .push(checkpoint(0, &cloud, initial_loss, dataset, &options, config, start)?);

    for iteration in 1..=config.iterations {
        if iteration % config.sh_promote_interval == 0 && cloud.active_sh_degree < MAX_SH_DEGREE {
            cloud.active_sh_degree += 1;
        }
        if order.is_empty() {
            order = (0..dataset.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let view = &dataset.views[order.pop().expect("refilled")];

        let lambda = config.lambda_dssim;
        let mut metric_err = None;
        let (loss, step) = backward_with(&cloud, &view.camera, config.background, |img| {
            match loss_and_gradient(img, &view.image, lambda, true) {
                Ok((l, g)) => (l, g.expect("gradient requested")),
                Err(e) => {
                    metric_err = Some(e);
                    (f64::NAN, img.clone())
                }
            }
        })?;
        if let Some(e) = metric_err {
            return Err(e.into());
        }
        if !loss.is_finite() {
            tracing::error!(iteration, view = %view.name, "non-finite loss");
            return Err(TrainError::NonFiniteLoss {
                iteration,
                view: view.name.clone(),
                splats: cloud.len(),
                report: Box::new(report),
            });
        }
        loss_sum += loss;
        loss_n += 1;

        let rates = config.lr.at(iteration, config.iterations, extent);
        adam_step(&mut cloud.splats, &step.grads, &mut adam, &rates);
        stats.absorb(&step.stats);

        if iteration < config.densify_until {
            if iteration > config.densify_from && iteration % config.densify_interval == 0 {
                let params = DensifyParams {
                    grad_threshold: config.grad_threshold,
                    percent_dense: config.percent_dense,
                    prune_opacity: config.prune_opacity,
                    max_screen_radius: (iteration > config.opacity_reset_interval)
                        .then_some(config.max_screen_radius),
                    scene_extent: extent,
                };
                let outcome = densify_and_prune(&mut cloud, &stats, &params, &mut rng);
                adam.remap(&outcome.origin);
                stats = RenderStats::new(cloud.len());
                tracing::debug!(
                    iteration,
                    cloned = outcome.cloned,
                    split = outcome.split,
                    pruned = outcome.pruned,
                    count = cloud.len(),
                    "densified"
                );
            }
            if iteration % config.opacity_reset_interval == 0 {
                for s in &mut cloud.splats {
                    s.opacity_logit = s.opacity_logit.min(reset_logit);
                }
            }
        }

        let last = iteration == config.iterations;
        if iteration % config.checkpoint_interval == 0 || last {
            let mean = loss_sum / f64::from(loss_n.max(1));
            loss_sum = 0.0;
            loss_n = 0;
            let c = checkpoint(iteration, &cloud, mean, dataset, &options, config, start)?;
            tracing::info!(
                iteration,
                splats = c.splat_count,
                loss = c.loss,
                psnr = c.psnr,
                "checkpoint"
            );
            report.checkpoints.push(c);
        }

        if let Some(cb) = options.progress.as_mut() {
            let p = Progress {
                iteration,
                total: config.iterations,
                splat_count: cloud.len(),
                loss,
            };
            if cb(&p).is_break() {
                report.cancelled = true;
                break;
            }
        }
    }
    report
        .stages
        .push(("optimize".into(), start.elapsed().as_secs_f64()));
    Ok((cloud, report))
}

fn mean_loss(
    cloud: &SplatCloud,
    views: &[TrainingView],
    config: &TrainConfig,
) -> Result<f64, TrainError> {
    let mut sum = 0.0;
    for v in views {
        let (img, _) = render(cloud, &v.camera, config.background)?;
        sum += loss_and_gradient(&img, &v.image, config.lambda_dssim, false)?.0;
    }
    Ok(sum / views.len().max(1) as f64)
}

fn mean_psnr(
    cloud: &SplatCloud,
    views: &[TrainingView],
    config: &TrainConfig,
) -> Result<f64, TrainError> {
    let mut sum = 0.0;
    for v in views {
        let (img, _) = render(cloud, &v.camera, config.background)?;
        sum += psnr(&img, &v.image)?;
    }
    Ok(sum / views.len().max(1) as f64)
}

fn checkpoint(
    iteration: u32,
    cloud: &SplatCloud,
    loss: f64,
    dataset: &TrainingDataset,
    options: &TrainOptions<'_>,
    config: &TrainConfig,
    start: Instant,
) -> Result<Checkpoint, TrainError> {
    let eval_psnr = if options.eval_views.is_empty() {
        None
    } else {
        Some(mean_psnr(cloud, options.eval_views, config)?)
    };
    Ok(Checkpoint {
        iteration,
        splat_count: cloud.len(),
        loss,
        psnr: mean_psnr(cloud, &dataset.views, config)?,
        eval_psnr,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
