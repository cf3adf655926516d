//! Experiment orchestration: deterministic task streams, per-algorithm
//! meta-gradients, the outer training loop, and evaluation.
//!
//! Meta-batch work fans out over a scoped worker pool; per-task computations
//! are pure functions of (θ, task) and the reduction runs in fixed task
//! order, so results are bit-identical for any worker count.

use std::path::{Path, PathBuf};
use std::time::Instant;

use metarkhs_core::adapt::{adapt_closed_form, rkhs2_task_loss_and_grad};
use metarkhs_core::meta::{
    adapt_gradient_steps, decode_label, encode_labels, maml_task_loss_and_grad, one_hot,
    rkhs1_task_loss_and_grad, MamlVariant, MetaConfig,
};
use metarkhs_core::net::{init_params, NetworkSpec, ParamVector};
use metarkhs_core::rng::CounterRng;
use metarkhs_core::tasks::{Task, TaskDistributionSpec};
use metarkhs_core::{CoreError, Vector};

use crate::config::{Algorithm, Experiment, OptimizerKind, RunConfig};
use crate::io::{self, Checkpoint, CsvTable};
use crate::optim::Optimizer;

const STREAM_TRAIN: u64 = 0x7261;
const STREAM_EVAL: u64 = 0xe7a1;

#[derive(Debug)]
pub enum DriverError {
    Core(CoreError),
    Io(String),
    Aborted(String),
}

impl std::fmt::Display for DriverError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DriverError::Core(e) => write!(f, "{e}"),
            DriverError::Io(e) => write!(f, "{e}"),
            DriverError::Aborted(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for DriverError {}

impl From<CoreError> for DriverError {
    fn from(e: CoreError) -> Self {
        DriverError::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, DriverError>;

// ---------------------------------------------------------------------------
// Deterministic task streams
// ---------------------------------------------------------------------------

/// Seed for the task drawn at (run seed, iteration, slot) in the training
/// stream. Counter-based, so parallel sampling matches serial sampling.
pub fn train_task_seed(run_seed: u64, iteration: u64, slot: u64) -> u64 {
    CounterRng::keyed(&[run_seed, STREAM_TRAIN, iteration, slot]).next_u64()
}

/// Seed for held-out evaluation task `index` (disjoint stream from training).
pub fn eval_task_seed(run_seed: u64, index: u64) -> u64 {
    CounterRng::keyed(&[run_seed, STREAM_EVAL, index]).next_u64()
}

pub fn sample_train_batch(
    dist: &TaskDistributionSpec,
    run_seed: u64,
    iteration: u64,
    batch: usize,
) -> Result<Vec<Task>> {
    (0..batch)
        .map(|i| {
            dist.sample(train_task_seed(run_seed, iteration, i as u64))
                .map_err(DriverError::from)
        })
        .collect()
}

pub fn sample_eval_tasks(
    dist: &TaskDistributionSpec,
    run_seed: u64,
    count: usize,
) -> Result<Vec<Task>> {
    (0..count)
        .map(|i| dist.sample(eval_task_seed(run_seed, i as u64)).map_err(DriverError::from))
        .collect()
}

/// Swap class-index targets for the targets the algorithm trains on (kernel
/// encodings for meta-rkhs-2, one-hot vectors otherwise) and apply the
/// configured input normalization. Regression targets pass through
/// unchanged.
pub fn prepare_task(
    task: &Task,
    algorithm: Algorithm,
    classes: Option<usize>,
    input_scale: f64,
) -> Result<Task> {
    let xs = |vs: &[Vector]| -> Vec<Vector> {
        if input_scale == 1.0 {
            vs.to_vec()
        } else {
            vs.iter().map(|v| v.scale(input_scale)).collect()
        }
    };
    let Some(classes) = classes else {
        return Ok(Task {
            support_x: xs(&task.support_x),
            support_y: task.support_y.clone(),
            query_x: xs(&task.query_x),
            query_y: task.query_y.clone(),
            meta: task.meta.clone(),
        });
    };
    let enc = |labels: &[usize]| -> Result<Vec<Vector>> {
        let out = match algorithm {
            Algorithm::MetaRkhs2 => encode_labels(labels, classes)?,
            _ => one_hot(labels, classes)?,
        };
        Ok(out)
    };
    Ok(Task {
        support_x: xs(&task.support_x),
        support_y: enc(&task.support_labels())?,
        query_x: xs(&task.query_x),
        query_y: enc(&task.query_labels())?,
        meta: task.meta.clone(),
    })
}

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

/// Apply `f` to every item, fanning out across up to `workers` threads.
/// Output order matches input order regardless of scheduling.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (chunk_items, chunk_out) in items.chunks(chunk).zip(out.chunks_mut(chunk)) {
            let f = &f;
            scope.spawn(move || {
                for (item, slot) in chunk_items.iter().zip(chunk_out.iter_mut()) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    out.into_iter().map(|r| r.expect("worker filled every slot")).collect()
}

// ---------------------------------------------------------------------------
// Meta-gradients per algorithm
// ---------------------------------------------------------------------------

/// Regularizer weight the training loop actually applies for Meta-RKHS-I:
/// the configured α clamped to the depth theorems' learning-rate
/// precondition q·r evaluated at the current parameters. Above that bound
/// the Taylor correspondence is void and minimizing L − α‖∇L‖² rewards
/// unbounded gradient growth; the clamp keeps long runs anchored.
pub fn rkhs1_effective_alpha(
    spec: &NetworkSpec,
    theta: &ParamVector,
    alpha: f64,
    bound_scale: f64,
) -> f64 {
    alpha.min(bound_scale * metarkhs_core::oracle::alpha_regime_bound(spec, theta))
}

/// Mean (loss, meta-gradient) of one prepared task batch under the chosen
/// algorithm. This is the unit of work one meta-iteration performs.
/// `rkhs1_alpha` is the (possibly regime-clamped) regularizer weight.
pub fn batch_loss_and_grad(
    spec: &NetworkSpec,
    theta: &ParamVector,
    tasks: &[Task],
    algorithm: Algorithm,
    cfg: &MetaConfig,
    rkhs1_alpha: f64,
    workers: usize,
) -> Result<(f64, Vector)> {
    let per_task = parallel_map(tasks, workers, |task| -> std::result::Result<_, CoreError> {
        match algorithm {
            Algorithm::MetaRkhs1 => {
                rkhs1_task_loss_and_grad(spec, theta, task, rkhs1_alpha, cfg)
            }
            Algorithm::MetaRkhs2 => {
                rkhs2_task_loss_and_grad(spec, theta, task, cfg.adapt_time, cfg)
            }
            Algorithm::Maml => maml_task_loss_and_grad(
                spec, theta, task, cfg.inner_lr, cfg.inner_steps, cfg.hvp_step, cfg.loss_kind,
                MamlVariant::Maml,
            ),
            Algorithm::Fomaml => maml_task_loss_and_grad(
                spec, theta, task, cfg.inner_lr, cfg.inner_steps, cfg.hvp_step, cfg.loss_kind,
                MamlVariant::Fomaml,
            ),
            Algorithm::Reptile => maml_task_loss_and_grad(
                spec, theta, task, cfg.inner_lr, cfg.inner_steps, cfg.hvp_step, cfg.loss_kind,
                MamlVariant::Reptile,
            ),
        }
    });
    let mut loss = 0.0;
    let mut grad = Vector::zeros(theta.len());
    let count = per_task.len() as f64;
    for item in per_task {
        let (l, g) = item?;
        loss += l / count;
        grad.add_scaled(1.0 / count, &g);
    }
    Ok((loss, grad))
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
    pub timing_path: PathBuf,
    pub final_loss: Option<f64>,
    pub iterations_run: usize,
    pub skipped_iterations: usize,
}

const MAX_CONSECUTIVE_FAILURES: usize = 5;

/// Outer loop: sample a task batch, compute the meta-gradient, apply the
/// optimizer. Writes `metrics.csv` (deterministic), `timing.csv` (wall-clock,
/// nondeterministic by nature) and an atomic checkpoint.
pub fn train(run: &RunConfig, out_dir: &Path) -> Result<TrainOutcome> {
    let spec = run.network_spec()?;
    let dist = run.task_distribution()?;
    let cfg = run.meta_config().map_err(|e| DriverError::Io(e.to_string()))?;
    let hash = run.hash();
    let mut theta = init_params(&spec, run.seed);
    let mut optimizer = Optimizer::new(run.optimizer, cfg.meta_lr, theta.len());
    let mut metrics = CsvTable::new(&["iter", "meta_loss", "grad_norm", "config_hash"]);
    let mut timing = CsvTable::new(&["iter", "wall_ms", "config_hash"]);
    let mut consecutive_failures = 0usize;
    let mut skipped = 0usize;
    let mut final_loss = None;

    for iter in 0..run.meta_iterations {
        let started = Instant::now();
        optimizer.set_lr(cfg.meta_lr * run.lr_schedule.factor(iter, run.meta_iterations));
        let raw = sample_train_batch(&dist, run.seed, iter as u64, cfg.meta_batch)?;
        let tasks: Vec<Task> = raw
            .iter()
            .map(|t| prepare_task(t, run.algorithm, run.classes(), run.network.input_scale))
            .collect::<Result<_>>()?;
        let alpha = if run.meta.rkhs1_regime_clamp {
            rkhs1_effective_alpha(&spec, &theta, cfg.inner_lr, run.meta.rkhs1_clamp_scale)
        } else {
            cfg.inner_lr
        };
        match batch_loss_and_grad(&spec, &theta, &tasks, run.algorithm, &cfg, alpha, run.workers) {
            Ok((loss, grad)) => {
                consecutive_failures = 0;
                optimizer.step(&mut theta, grad.as_slice());
                let grad_norm = grad.norm2();
                metrics.push_row(&[
                    iter.to_string(),
                    io::csv_num(loss),
                    io::csv_num(grad_norm),
                    hash.clone(),
                ]);
                timing.push_row(&[
                    iter.to_string(),
                    io::csv_num(started.elapsed().as_secs_f64() * 1e3),
                    hash.clone(),
                ]);
                final_loss = Some(loss);
            }
            Err(DriverError::Core(CoreError::KernelSingular { min_pivot })) => {
                consecutive_failures += 1;
                skipped += 1;
                eprintln!(
                    "warn: iteration {iter}: kernel-singular (min pivot {min_pivot:e}); skipping"
                );
                if consecutive_failures > MAX_CONSECUTIVE_FAILURES {
                    return Err(DriverError::Aborted(format!(
                        "aborting after {consecutive_failures} consecutive kernel-singular iterations"
                    )));
                }
            }
            Err(other) => return Err(other),
        }
    }

    let metrics_path = out_dir.join("metrics.csv");
    let timing_path = out_dir.join("timing.csv");
    let checkpoint_path = out_dir.join("checkpoint.json");
    metrics.write(&metrics_path).map_err(|e| DriverError::Io(e.to_string()))?;
    timing.write(&timing_path).map_err(|e| DriverError::Io(e.to_string()))?;
    io::save_checkpoint(
        &checkpoint_path,
        &Checkpoint { seed: run.seed, spec, params: theta, config_hash: hash },
    )
    .map_err(|e| DriverError::Io(e.to_string()))?;
    Ok(TrainOutcome {
        checkpoint_path,
        metrics_path,
        timing_path,
        final_loss,
        iterations_run: run.meta_iterations - skipped,
        skipped_iterations: skipped,
    })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Per-task query metric: mean squared error for regression, accuracy for
/// classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mse,
    Accuracy,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mse => "query_mse",
            Metric::Accuracy => "query_accuracy",
        }
    }

    pub fn for_experiment(run: &RunConfig) -> Metric {
        match run.experiment {
            Experiment::BlobClassification | Experiment::AttackSweep => Metric::Accuracy,
            _ => match run.classes() {
                Some(_) => Metric::Accuracy,
                None => Metric::Mse,
            },
        }
    }
}

/// Adapt on the (raw) task per the algorithm's rule and return query
/// predictions: gradient steps for the gradient family, the closed form for
/// meta-rkhs-2.
pub fn adapted_query_predictions(
    spec: &NetworkSpec,
    theta: &ParamVector,
    raw_task: &Task,
    run: &RunConfig,
    cfg: &MetaConfig,
    adapt_time: metarkhs_core::meta::AdaptTime,
) -> Result<Vec<Vector>> {
    let task = prepare_task(raw_task, run.algorithm, run.classes(), run.network.input_scale)?;
    match run.algorithm {
        Algorithm::MetaRkhs2 => {
            let predictor = adapt_closed_form(
                spec, theta, &task.support_x, &task.support_y, adapt_time, cfg,
            )?;
            Ok(predictor.predict_batch(&task.query_x)?)
        }
        _ => {
            let phi = test_adapt(
                spec,
                theta,
                &task.support_x,
                &task.support_y,
                run.test_adapt_optimizer,
                run.test_adapt_lr,
                run.test_adapt_steps,
                cfg.loss_kind,
            )?;
            let (outs, _) = metarkhs_core::net::forward(spec, &phi, &task.query_x)?;
            Ok(outs)
        }
    }
}

/// Test-time adaptation: k optimizer steps on the support set (plain
/// gradient descent or Adam, per config).
#[allow(clippy::too_many_arguments)]
pub fn test_adapt(
    spec: &NetworkSpec,
    theta: &ParamVector,
    xs: &[Vector],
    ys: &[Vector],
    optimizer: OptimizerKind,
    lr: f64,
    steps: usize,
    kind: metarkhs_core::LossKind,
) -> Result<ParamVector> {
    match optimizer {
        OptimizerKind::Sgd => {
            let (phi, _) = adapt_gradient_steps(spec, theta, xs, ys, lr, steps, kind)?;
            Ok(phi)
        }
        OptimizerKind::Adam => {
            let mut phi = theta.clone();
            let mut opt = Optimizer::new(OptimizerKind::Adam, lr, phi.len());
            for _ in 0..steps {
                let g = metarkhs_core::net::grad_loss(spec, &phi, xs, ys, kind)?;
                opt.step(&mut phi, g.as_slice());
            }
            Ok(phi)
        }
    }
}

fn task_metric(preds: &[Vector], raw_task: &Task, metric: Metric) -> f64 {
    match metric {
        Metric::Mse => {
            let mut total = 0.0;
            for (p, y) in preds.iter().zip(raw_task.query_y.iter()) {
                total += p
                    .as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
            total / preds.len() as f64
        }
        Metric::Accuracy => {
            let labels = raw_task.query_labels();
            let correct = preds
                .iter()
                .zip(labels.iter())
                .filter(|(p, &l)| decode_label(p) == l)
                .count();
            correct as f64 / preds.len() as f64
        }
    }
}

pub struct EvalOutcome {
    pub metric: Metric,
    pub mean: f64,
    pub stderr: f64,
    pub per_task: Vec<f64>,
}

/// Evaluate a checkpoint over held-out tasks at a given adaptation horizon
/// (the horizon only matters for meta-rkhs-2).
pub fn evaluate_at(
    run: &RunConfig,
    ckpt: &Checkpoint,
    adapt_time: metarkhs_core::meta::AdaptTime,
) -> Result<EvalOutcome> {
    let spec = run.network_spec()?;
    if spec != ckpt.spec {
        return Err(DriverError::Io(
            "checkpoint network does not match the configured network".into(),
        ));
    }
    let dist = run.task_distribution()?;
    let cfg = run.meta_config().map_err(|e| DriverError::Io(e.to_string()))?;
    let metric = Metric::for_experiment(run);
    let tasks = sample_eval_tasks(&dist, run.seed, run.eval_tasks)?;
    let results = parallel_map(&tasks, run.workers, |task| -> Result<f64> {
        let preds = adapted_query_predictions(&spec, &ckpt.params, task, run, &cfg, adapt_time)?;
        Ok(task_metric(&preds, task, metric))
    });
    let per_task: Vec<f64> = results.into_iter().collect::<Result<_>>()?;
    let n = per_task.len() as f64;
    let mean = per_task.iter().sum::<f64>() / n;
    let var = per_task.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n.max(1.0);
    let stderr = (var / n).sqrt();
    Ok(EvalOutcome { metric, mean, stderr, per_task })
}
