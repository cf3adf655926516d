//! Synthetic task distributions and episode sampling: sine-wave regression
//! and N-way k-shot Gaussian-blob classification.
//!
//! Sampling is a pure function of `(spec, seed)` through counter-based
//! streams, so episodes can be drawn in parallel and still reproduce.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::linalg::Vector;
use crate::math;
use crate::rng::CounterRng;

/// One meta-learning episode: support (adaptation) and query (evaluation)
/// splits drawn from the same task parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub support_x: Vec<Vector>,
    pub support_y: Vec<Vector>,
    pub query_x: Vec<Vector>,
    pub query_y: Vec<Vector>,
    /// Distribution parameters the episode was drawn with.
    pub meta: TaskMeta,
}

/// Task parameters recorded for reproducibility.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskMeta {
    Sine { amplitude: f64, phase: f64, noise_sigma: f64 },
    Blobs { centers: Vec<Vector>, spread: f64 },
    /// Tasks assembled directly from data (tests, golden files).
    Custom,
}

impl Task {
    /// Class indices of a classification task (targets stored as a single
    /// index per sample).
    pub fn support_labels(&self) -> Vec<usize> {
        self.support_y.iter().map(|y| y[0] as usize).collect()
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.query_y.iter().map(|y| y[0] as usize).collect()
    }

    /// Same task with support and query exchanged.
    pub fn swapped(&self) -> Task {
        Task {
            support_x: self.query_x.clone(),
            support_y: self.query_y.clone(),
            query_x: self.support_x.clone(),
            query_y: self.support_y.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.support_x.iter().all(Vector::all_finite)
            && self.support_y.iter().all(Vector::all_finite)
            && self.query_x.iter().all(Vector::all_finite)
            && self.query_y.iter().all(Vector::all_finite)
    }
}

/// Sine-wave regression distribution: y = A·sin(x + φ) + ε with A, φ, x
/// drawn uniformly from the configured ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct SineSpec {
    pub amplitude_range: (f64, f64),
    pub phase_range: (f64, f64),
    pub x_range: (f64, f64),
    pub noise_sigma: f64,
    pub support_size: usize,
    pub query_size: usize,
}

impl Default for SineSpec {
    fn default() -> Self {
        Self {
            amplitude_range: (0.1, 5.0),
            phase_range: (0.0, core::f64::consts::PI),
            x_range: (-5.0, 5.0),
            noise_sigma: 0.0,
            support_size: 10,
            query_size: 10,
        }
    }
}

/// N-way k-shot Gaussian blob distribution. Class centers are drawn from
/// Normal(0, center_scale²·I); samples scatter around their center with the
/// given spread. Labels are class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub way: usize,
    pub shot: usize,
    pub query_shot: usize,
    pub input_dim: usize,
    pub spread: f64,
    pub center_scale: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            way: 5,
            shot: 1,
            query_shot: 5,
            input_dim: 4,
            spread: 0.05,
            center_scale: 5.0,
        }
    }
}

/// Task distribution P(T).
#[derive(Debug, Clone, PartialEq)]
pub enum TaskDistributionSpec {
    Sine(SineSpec),
    Blobs(BlobSpec),
}

impl TaskDistributionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            TaskDistributionSpec::Sine(s) => {
                if s.amplitude_range.0 > s.amplitude_range.1
                    || s.phase_range.0 > s.phase_range.1
                    || s.x_range.0 >= s.x_range.1
                {
                    return Err(CoreError::InvalidSpec("sine: empty range".into()));
                }
                if s.support_size == 0 {
                    return Err(CoreError::InvalidSpec("sine.support_size: must be >= 1".into()));
                }
                if s.noise_sigma < 0.0 {
                    return Err(CoreError::InvalidSpec("sine.noise_sigma: must be >= 0".into()));
                }
            }
            TaskDistributionSpec::Blobs(b) => {
                if b.way < 2 {
                    return Err(CoreError::InvalidSpec(format!(
                        "blobs.way: must be >= 2, got {}",
                        b.way
                    )));
                }
                if b.shot == 0 || b.query_shot == 0 {
                    return Err(CoreError::InvalidSpec("blobs: shot counts must be >= 1".into()));
                }
                if b.input_dim == 0 {
                    return Err(CoreError::InvalidSpec("blobs.input_dim: must be >= 1".into()));
                }
                if b.spread < 0.0 || b.center_scale <= 0.0 {
                    return Err(CoreError::InvalidSpec(
                        "blobs: spread must be >= 0 and center_scale > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TaskDistributionSpec::Sine(_) => 1,
            TaskDistributionSpec::Blobs(b) => b.input_dim,
        }
    }

    /// Output dimension the model should have for this distribution (1 for
    /// regression, `way` for classification under one-hot/encoded targets).
    pub fn model_output_dim(&self) -> usize {
        match self {
            TaskDistributionSpec::Sine(_) => 1,
            TaskDistributionSpec::Blobs(b) => b.way,
        }
    }

    pub fn sample(&self, seed: u64) -> Result<Task> {
        self.validate()?;
        Ok(match self {
            TaskDistributionSpec::Sine(s) => sample_sine_task(s, seed),
            TaskDistributionSpec::Blobs(b) => sample_blob_task(b, seed),
        })
    }
}

/// Draw one sine-wave episode, deterministic given the seed.
pub fn sample_sine_task(spec: &SineSpec, seed: u64) -> Task {
    let mut rng = CounterRng::keyed(&[seed, 0x51be]);
    let amplitude = rng.range(spec.amplitude_range.0, spec.amplitude_range.1);
    let phase = rng.range(spec.phase_range.0, spec.phase_range.1);
    let mut draw = |count: usize| {
        let mut xs = Vec::with_capacity(count);
        let mut ys = Vec::with_capacity(count);
        for _ in 0..count {
            let x = rng.range(spec.x_range.0, spec.x_range.1);
            let mut y = amplitude * math::sin(x + phase);
            if spec.noise_sigma > 0.0 {
                y += spec.noise_sigma * rng.normal();
            }
            xs.push(Vector::from_slice(&[x]));
            ys.push(Vector::from_slice(&[y]));
        }
        (xs, ys)
    };
    let (support_x, support_y) = draw(spec.support_size);
    let (query_x, query_y) = draw(spec.query_size);
    Task {
        support_x,
        support_y,
        query_x,
        query_y,
        meta: TaskMeta::Sine { amplitude, phase, noise_sigma: spec.noise_sigma },
    }
}

/// Draw one N-way k-shot blob episode: `shot` support and `query_shot` query
/// samples per class, stratified construction.
pub fn sample_blob_task(spec: &BlobSpec, seed: u64) -> Task {
    let mut rng = CounterRng::keyed(&[seed, 0xb10b]);
    let centers: Vec<Vector> = (0..spec.way)
        .map(|_| {
            Vector::new(
                (0..spec.input_dim)
                    .map(|_| spec.center_scale * rng.normal())
                    .collect(),
            )
        })
        .collect();
    let mut draw = |per_class: usize| {
        let mut xs = Vec::with_capacity(per_class * spec.way);
        let mut ys = Vec::with_capacity(per_class * spec.way);
        for (label, center) in centers.iter().enumerate() {
            for _ in 0..per_class {
                let x = Vector::new(
                    center
                        .as_slice()
                        .iter()
                        .map(|&c| c + spec.spread * rng.normal())
                        .collect(),
                );
                xs.push(x);
                ys.push(Vector::from_slice(&[label as f64]));
            }
        }
        (xs, ys)
    };
    let (support_x, support_y) = draw(spec.shot);
    let (query_x, query_y) = draw(spec.query_shot);
    Task {
        support_x,
        support_y,
        query_x,
        query_y,
        meta: TaskMeta::Blobs { centers, spread: spec.spread },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_generative_identity_without_noise() {
        let spec = SineSpec { noise_sigma: 0.0, ..SineSpec::default() };
        let task = sample_sine_task(&spec, 7);
        let (a, phi) = match task.meta {
            TaskMeta::Sine { amplitude, phase, .. } => (amplitude, phase),
            _ => unreachable!(),
        };
        for (x, y) in task.support_x.iter().zip(task.support_y.iter()) {
            assert_eq!(y[0], a * math::sin(x[0] + phi));
        }
    }

    #[test]
    fn episodes_deterministic_by_seed() {
        let sine = TaskDistributionSpec::Sine(SineSpec::default());
        assert_eq!(sine.sample(3).unwrap(), sine.sample(3).unwrap());
        assert_ne!(sine.sample(3).unwrap(), sine.sample(4).unwrap());
        let blobs = TaskDistributionSpec::Blobs(BlobSpec::default());
        assert_eq!(blobs.sample(3).unwrap(), blobs.sample(3).unwrap());
    }

    #[test]
    fn sine_amplitude_statistics() {
        let spec = SineSpec::default();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let n = 10_000;
        for seed in 0..n {
            let task = sample_sine_task(&spec, seed);
            let a = match task.meta {
                TaskMeta::Sine { amplitude, .. } => amplitude,
                _ => unreachable!(),
            };
            min = min.min(a);
            max = max.max(a);
            sum += a;
        }
        assert!(min >= 0.1 && max <= 5.0);
        let mean = sum / n as f64;
        assert!((mean - 2.55).abs() < 0.05 * 2.55, "mean {mean}");
    }

    #[test]
    fn blob_label_histogram_is_stratified() {
        let spec = BlobSpec { way: 4, shot: 3, query_shot: 2, ..BlobSpec::default() };
        let task = sample_blob_task(&spec, 11);
        let mut support_counts = [0usize; 4];
        for l in task.support_labels() {
            support_counts[l] += 1;
        }
        assert_eq!(support_counts, [3, 3, 3, 3]);
        let mut query_counts = [0usize; 4];
        for l in task.query_labels() {
            query_counts[l] += 1;
        }
        assert_eq!(query_counts, [2, 2, 2, 2]);
    }

    #[test]
    fn blob_zero_spread_collapses_to_centers() {
        let spec = BlobSpec { spread: 0.0, ..BlobSpec::default() };
        let task = sample_blob_task(&spec, 13);
        let centers = match &task.meta {
            TaskMeta::Blobs { centers, .. } => centers.clone(),
            _ => unreachable!(),
        };
        for (x, l) in task.support_x.iter().zip(task.support_labels()) {
            assert_eq!(x, &centers[l]);
        }
        // Nearest-center classification is exact.
        for (x, l) in task.query_x.iter().zip(task.query_labels()) {
            let nearest = centers
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    x.sub(a).norm2().partial_cmp(&x.sub(b).norm2()).unwrap()
                })
                .unwrap()
                .0;
            assert_eq!(nearest, l);
        }
    }

    #[test]
    fn well_separated_blobs_solved_by_nearest_neighbor() {
        let spec = BlobSpec {
            way: 5,
            shot: 1,
            query_shot: 3,
            input_dim: 4,
            spread: 0.05,
            center_scale: 5.0,
        };
        let mut correct = 0usize;
        let mut total = 0usize;
        for seed in 0..100 {
            let task = sample_blob_task(&spec, seed);
            let labels = task.support_labels();
            for (q, want) in task.query_x.iter().zip(task.query_labels()) {
                let best = task
                    .support_x
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        q.sub(a).norm2().partial_cmp(&q.sub(b).norm2()).unwrap()
                    })
                    .unwrap()
                    .0;
                if labels[best] == want {
                    correct += 1;
                }
                total += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc >= 0.99, "1-NN accuracy {acc}");
    }

    #[test]
    fn swapped_task_is_structurally_valid() {
        let task = sample_blob_task(&BlobSpec::default(), 17).swapped();
        assert!(task.all_finite());
        assert_eq!(task.support_x.len(), BlobSpec::default().query_shot * 5);
        assert_eq!(task.query_x.len(), BlobSpec::default().shot * 5);
    }

    #[test]
    fn spec_validation_rejects_bad_configs() {
        let bad = TaskDistributionSpec::Blobs(BlobSpec { way: 1, ..BlobSpec::default() });
        assert!(bad.validate().is_err());
        let bad = TaskDistributionSpec::Sine(SineSpec {
            x_range: (5.0, -5.0),
            ..SineSpec::default()
        });
        assert!(bad.validate().is_err());
    }
}
