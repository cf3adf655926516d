//! Run configuration: a versioned JSON document with CLI-flag overrides,
//! validation that names the offending field, and a stable hash tying every
//! emitted CSV row back to the configuration that produced it.

use std::fmt;

use serde::{Deserialize, Serialize};

use metarkhs_core::expm::PadeOrder;
use metarkhs_core::meta::{AdaptTime, KernelKind, MetaConfig};
use metarkhs_core::net::NetworkSpec;
use metarkhs_core::tasks::{BlobSpec, SineSpec, TaskDistributionSpec};
use metarkhs_core::LossKind;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError(format!("{field}: {msg}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SineRegression,
    BlobClassification,
    Gradcheck,
    TheoremSweep,
    AttackSweep,
    AblationT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Algorithm {
    #[serde(rename = "meta-rkhs-1")]
    #[value(name = "meta-rkhs-1")]
    MetaRkhs1,
    #[serde(rename = "meta-rkhs-2")]
    #[value(name = "meta-rkhs-2")]
    MetaRkhs2,
    #[serde(rename = "maml")]
    #[value(name = "maml")]
    Maml,
    #[serde(rename = "fomaml")]
    #[value(name = "fomaml")]
    Fomaml,
    #[serde(rename = "reptile")]
    #[value(name = "reptile")]
    Reptile,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::MetaRkhs1 => "meta-rkhs-1",
            Algorithm::MetaRkhs2 => "meta-rkhs-2",
            Algorithm::Maml => "maml",
            Algorithm::Fomaml => "fomaml",
            Algorithm::Reptile => "reptile",
        }
    }

    pub const ALL: [Algorithm; 5] = [
        Algorithm::MetaRkhs1,
        Algorithm::MetaRkhs2,
        Algorithm::Maml,
        Algorithm::Fomaml,
        Algorithm::Reptile,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[derive(Default)]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Outer learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from the base rate to zero across the run.
    Cosine,
}

impl LrSchedule {
    pub fn factor(&self, iter: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => {
                if total <= 1 {
                    1.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * iter as f64 / total as f64).cos())
                }
            }
        }
    }
}

/// Finite time as a JSON number or the string "inf".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeDto {
    Finite(f64),
    Word(String),
}

impl TimeDto {
    pub fn to_core(&self, field: &str) -> Result<AdaptTime, ConfigError> {
        let time = match self {
            TimeDto::Finite(t) => AdaptTime::Finite(*t),
            TimeDto::Word(w) if w == "inf" || w == "infinity" => AdaptTime::Infinite,
            TimeDto::Word(w) => {
                return Err(err(field, format!("expected a number or \"inf\", got {w:?}")))
            }
        };
        time.validate().map_err(|e| err(field, e))?;
        Ok(time)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Circular conv1d layers in front of the dense stack (0 = none).
    #[serde(default)]
    pub conv_layers: usize,
    #[serde(default = "default_kernel_width")]
    pub kernel_width: usize,
    /// Input preprocessing: features are multiplied by this factor before
    /// entering the network (normalization, e.g. 0.2 maps [-5, 5] to
    /// [-1, 1]). Targets are untouched.
    #[serde(default = "default_input_scale")]
    pub input_scale: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

fn default_kernel_width() -> usize {
    3
}

fn default_input_scale() -> f64 {
    1.0
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            conv_layers: 0,
            kernel_width: default_kernel_width(),
            input_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossDto {
    Squared,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelDto {
    NtkFull,
    NtkScalar,
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaSection {
    #[serde(default = "d_inner_lr")]
    pub inner_lr: f64,
    #[serde(default = "d_inner_steps")]
    pub inner_steps: usize,
    #[serde(default = "d_adapt_time")]
    pub adapt_time: TimeDto,
    /// Padé order 1 or 2.
    #[serde(default = "d_pade_order")]
    pub pade_order: u8,
    /// Defaults to 0.01 for meta-rkhs-2 and 1e-3 otherwise when omitted.
    #[serde(default)]
    pub meta_lr: Option<f64>,
    #[serde(default = "d_meta_batch")]
    pub meta_batch: usize,
    /// Defaults per experiment/algorithm when omitted: squared for
    /// regression and for meta-rkhs-2 classification (with encodings),
    /// cross-entropy for the other classification algorithms.
    #[serde(default)]
    pub loss: Option<LossDto>,
    #[serde(default = "d_hvp_step")]
    pub hvp_step: f64,
    #[serde(default = "d_kernel_jitter")]
    pub kernel_jitter: f64,
    #[serde(default = "d_true")]
    pub stop_gradient_kernel: bool,
    /// Defaults to ntk-full for regression and ntk-scalar for classification.
    #[serde(default)]
    pub kernel: Option<KernelDto>,
    /// RBF bandwidth; omitted = median heuristic.
    #[serde(default)]
    pub rbf_bandwidth: Option<f64>,
    #[serde(default)]
    pub rkhs1_split: bool,
    /// Clamp the training-time regularizer weight to the spectral-norm
    /// learning-rate bound of the depth theorems (stabilizes long runs).
    #[serde(default = "d_true")]
    pub rkhs1_regime_clamp: bool,
    /// O(1) constant in front of the regime bound used by the clamp.
    #[serde(default = "d_one")]
    pub rkhs1_clamp_scale: f64,
}

fn d_inner_lr() -> f64 {
    0.01
}
fn d_inner_steps() -> usize {
    1
}
fn d_adapt_time() -> TimeDto {
    TimeDto::Finite(10.0)
}
fn d_pade_order() -> u8 {
    2
}
fn d_meta_batch() -> usize {
    16
}
fn d_hvp_step() -> f64 {
    1e-5
}
fn d_kernel_jitter() -> f64 {
    1e-8
}
fn d_true() -> bool {
    true
}
fn d_one() -> f64 {
    1.0
}

impl Default for MetaSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSection {
    Sine {
        #[serde(default = "d_amp")]
        amplitude_range: (f64, f64),
        #[serde(default = "d_phase")]
        phase_range: (f64, f64),
        #[serde(default = "d_xrange")]
        x_range: (f64, f64),
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default = "d_support")]
        support_size: usize,
        #[serde(default = "d_support")]
        query_size: usize,
    },
    Blobs {
        #[serde(default = "d_way")]
        way: usize,
        #[serde(default = "d_shot")]
        shot: usize,
        #[serde(default = "d_qshot")]
        query_shot: usize,
        #[serde(default = "d_bdim")]
        input_dim: usize,
        #[serde(default = "d_spread")]
        spread: f64,
        #[serde(default = "d_cscale")]
        center_scale: f64,
    },
}

fn d_amp() -> (f64, f64) {
    (0.1, 5.0)
}
fn d_phase() -> (f64, f64) {
    (0.0, std::f64::consts::PI)
}
fn d_xrange() -> (f64, f64) {
    (-5.0, 5.0)
}
fn d_support() -> usize {
    10
}
fn d_way() -> usize {
    5
}
fn d_shot() -> usize {
    1
}
fn d_qshot() -> usize {
    5
}
fn d_bdim() -> usize {
    4
}
fn d_spread() -> f64 {
    0.05
}
fn d_cscale() -> f64 {
    5.0
}

impl Default for TaskSection {
    fn default() -> Self {
        serde_json::from_str(r#"{"kind":"sine"}"#).expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    #[serde(default = "d_eps_grid")]
    pub epsilon_grid: Vec<f64>,
    #[serde(default = "d_attack_step")]
    pub step_size: f64,
    #[serde(default = "d_attack_iters")]
    pub iterations: usize,
    #[serde(default)]
    pub random_start: bool,
    /// Diagnostic: drop the cross-kernel term from the closed-form
    /// predictor's input gradient.
    #[serde(default)]
    pub freeze_kernel_term: bool,
    #[serde(default)]
    pub clip: Option<(f64, f64)>,
}

fn d_eps_grid() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.2, 0.4]
}
fn d_attack_step() -> f64 {
    0.02
}
fn d_attack_iters() -> usize {
    20
}

impl Default for AttackSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

fn d_ablation_grid() -> Vec<TimeDto> {
    vec![
        TimeDto::Finite(0.1),
        TimeDto::Finite(1.0),
        TimeDto::Finite(10.0),
        TimeDto::Finite(100.0),
        TimeDto::Word("inf".into()),
    ]
}

/// The full run configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_schema")]
    pub schema_version: u32,
    pub experiment: Experiment,
    #[serde(default = "d_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_output_dir")]
    pub output_dir: String,
    #[serde(default = "d_meta_iterations")]
    pub meta_iterations: usize,
    #[serde(default = "d_eval_tasks")]
    pub eval_tasks: usize,
    #[serde(default = "d_test_adapt_steps")]
    pub test_adapt_steps: usize,
    /// Step size of test-time gradient adaptation (decoupled from the
    /// Meta-RKHS-I regularizer weight `meta.inner_lr`).
    #[serde(default = "d_test_adapt_lr")]
    pub test_adapt_lr: f64,
    /// Optimizer driving test-time adaptation steps.
    #[serde(default)]
    pub test_adapt_optimizer: OptimizerKind,
    /// Worker threads for the per-task fan-out (1 = serial; results are
    /// bit-identical either way).
    #[serde(default = "d_workers")]
    pub workers: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub meta: MetaSection,
    #[serde(default)]
    pub tasks: TaskSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default = "d_ablation_grid")]
    pub ablation_t_grid: Vec<TimeDto>,
}

fn d_schema() -> u32 {
    SCHEMA_VERSION
}
fn d_algorithm() -> Algorithm {
    Algorithm::MetaRkhs1
}
fn d_output_dir() -> String {
    "runs/out".into()
}
fn d_meta_iterations() -> usize {
    1000
}
fn d_eval_tasks() -> usize {
    100
}
fn d_test_adapt_steps() -> usize {
    10
}
fn d_test_adapt_lr() -> f64 {
    0.01
}
fn d_workers() -> usize {
    1
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(err(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", cfg.schema_version),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("config: cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(err("workers", "must be >= 1"));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
        if !(self.test_adapt_lr > 0.0) {
            return Err(err("test_adapt_lr", "must be > 0"));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
        if !(self.network.input_scale > 0.0) {
            return Err(err("network.input_scale", "must be > 0"));
        }
        self.task_distribution().map_err(|e| err("tasks", e))?;
        self.network_spec().map_err(|e| err("network", e))?;
        self.meta_config()?;
        if matches!(self.experiment, Experiment::AttackSweep) {
            if self.attack.epsilon_grid.is_empty() {
                return Err(err("attack.epsilon_grid", "must be nonempty"));
            }
            for &e in &self.attack.epsilon_grid {
                #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
                if !(e >= 0.0) {
                    return Err(err("attack.epsilon_grid", format!("epsilon {e} < 0")));
                }
            }
            self.attack_config(self.attack.epsilon_grid[0])
                .validate()
                .map_err(|e| err("attack", e))?;
        }
        for (i, t) in self.ablation_t_grid.iter().enumerate() {
            t.to_core(&format!("ablation_t_grid[{i}]"))?;
        }
        Ok(())
    }

    pub fn task_distribution(&self) -> Result<TaskDistributionSpec, metarkhs_core::CoreError> {
        let dist = match &self.tasks {
            TaskSection::Sine {
                amplitude_range,
                phase_range,
                x_range,
                noise_sigma,
                support_size,
                query_size,
            } => TaskDistributionSpec::Sine(SineSpec {
                amplitude_range: *amplitude_range,
                phase_range: *phase_range,
                x_range: *x_range,
                noise_sigma: *noise_sigma,
                support_size: *support_size,
                query_size: *query_size,
            }),
            TaskSection::Blobs { way, shot, query_shot, input_dim, spread, center_scale } => {
                TaskDistributionSpec::Blobs(BlobSpec {
                    way: *way,
                    shot: *shot,
                    query_shot: *query_shot,
                    input_dim: *input_dim,
                    spread: *spread,
                    center_scale: *center_scale,
                })
            }
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn network_spec(&self) -> Result<NetworkSpec, metarkhs_core::CoreError> {
        let dist = self.task_distribution()?;
        let d_in = dist.input_dim();
        let d_out = dist.model_output_dim();
        if self.network.conv_layers > 0 {
            NetworkSpec::conv1d_front(
                d_in,
                self.network.conv_layers,
                self.network.kernel_width,
                &self.network.hidden,
                d_out,
            )
        } else {
            let mut dims = Vec::with_capacity(self.network.hidden.len() + 2);
            dims.push(d_in);
            dims.extend_from_slice(&self.network.hidden);
            dims.push(d_out);
            NetworkSpec::dense(&dims)
        }
    }

    /// Classification runs use the kernel encoding + squared loss for
    /// meta-rkhs-2 and one-hot cross-entropy for every other algorithm.
    pub fn resolved_loss(&self) -> LossKind {
        match self.meta.loss {
            Some(LossDto::Squared) => LossKind::Squared,
            Some(LossDto::CrossEntropy) => LossKind::CrossEntropy,
            None => match (&self.tasks, self.algorithm) {
                (TaskSection::Sine { .. }, _) => LossKind::Squared,
                (TaskSection::Blobs { .. }, Algorithm::MetaRkhs2) => LossKind::Squared,
                (TaskSection::Blobs { .. }, _) => LossKind::CrossEntropy,
            },
        }
    }

    pub fn resolved_meta_lr(&self) -> f64 {
        self.meta.meta_lr.unwrap_or(match self.algorithm {
            Algorithm::MetaRkhs2 => 0.01,
            _ => 1e-3,
        })
    }

    pub fn resolved_kernel(&self) -> KernelKind {
        match self.meta.kernel {
            Some(KernelDto::NtkFull) => KernelKind::NtkFull,
            Some(KernelDto::NtkScalar) => KernelKind::NtkScalar,
            Some(KernelDto::Rbf) => KernelKind::Rbf { bandwidth: self.meta.rbf_bandwidth },
            None => match &self.tasks {
                TaskSection::Sine { .. } => KernelKind::NtkFull,
                TaskSection::Blobs { .. } => KernelKind::NtkScalar,
            },
        }
    }

    pub fn meta_config(&self) -> Result<MetaConfig, ConfigError> {
        let pade_order = match self.meta.pade_order {
            1 => PadeOrder::One,
            2 => PadeOrder::Two,
            other => return Err(err("meta.pade_order", format!("must be 1 or 2, got {other}"))),
        };
        let cfg = MetaConfig {
            inner_lr: self.meta.inner_lr,
            inner_steps: self.meta.inner_steps,
            adapt_time: self.meta.adapt_time.to_core("meta.adapt_time")?,
            pade_order,
            meta_lr: self.resolved_meta_lr(),
            meta_batch: self.meta.meta_batch,
            loss_kind: self.resolved_loss(),
            hvp_step: self.meta.hvp_step,
            kernel_jitter: self.meta.kernel_jitter,
            stop_gradient_kernel: self.meta.stop_gradient_kernel,
            kernel: self.resolved_kernel(),
            rkhs1_split: self.meta.rkhs1_split,
        };
        cfg.validate().map_err(|e| ConfigError(format!("meta.{e}")))?;
        Ok(cfg)
    }

    pub fn attack_config(&self, epsilon: f64) -> metarkhs_core::attack::AttackConfig {
        metarkhs_core::attack::AttackConfig {
            epsilon,
            step_size: self.attack.step_size,
            iterations: self.attack.iterations,
            clip: self.attack.clip,
            random_start: self.attack.random_start,
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match &self.tasks {
            TaskSection::Blobs { way, .. } => Some(*way),
            TaskSection::Sine { .. } => None,
        }
    }

    /// Canonical JSON of this config (stable field order from the struct
    /// definition). Execution-only fields — worker count and output
    /// directory — are normalized away so they do not change the identity
    /// of the experiment.
    pub fn canonical_json(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = 1;
        canonical.output_dir = String::new();
        serde_json::to_string(&canonical).expect("config serializes")
    }

    /// FNV-1a 64 hash of the canonical JSON, as fixed-width hex.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical_json().as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(experiment: &str) -> String {
        format!(r#"{{"experiment":"{experiment}"}}"#)
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::from_json(&minimal("sine-regression")).unwrap();
        assert_eq!(cfg.schema_version, SCHEMA_VERSION);
        assert_eq!(cfg.meta.meta_batch, 16);
        assert_eq!(cfg.network.hidden, vec![64, 64]);
        assert!(matches!(cfg.tasks, TaskSection::Sine { .. }));
        assert_eq!(cfg.resolved_meta_lr(), 1e-3);
    }

    #[test]
    fn meta_lr_defaults_by_algorithm() {
        let text = r#"{"experiment":"sine-regression","algorithm":"meta-rkhs-2"}"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.resolved_meta_lr(), 0.01);
    }

    #[test]
    fn loss_defaults_by_experiment_and_algorithm() {
        let blob = r#"{"experiment":"blob-classification","algorithm":"maml","tasks":{"kind":"blobs"}}"#;
        let cfg = RunConfig::from_json(blob).unwrap();
        assert_eq!(cfg.resolved_loss(), LossKind::CrossEntropy);
        let blob2 =
            r#"{"experiment":"blob-classification","algorithm":"meta-rkhs-2","tasks":{"kind":"blobs"}}"#;
        let cfg = RunConfig::from_json(blob2).unwrap();
        assert_eq!(cfg.resolved_loss(), LossKind::Squared);
        assert_eq!(cfg.resolved_kernel(), KernelKind::NtkScalar);
    }

    #[test]
    fn validation_reports_field_paths() {
        let bad = r#"{"experiment":"sine-regression","meta":{"inner_lr":-1.0}}"#;
        let e = RunConfig::from_json(bad).unwrap_err();
        assert!(e.0.contains("inner_lr"), "{e}");
        let bad = r#"{"experiment":"sine-regression","meta":{"pade_order":3}}"#;
        let e = RunConfig::from_json(bad).unwrap_err();
        assert!(e.0.contains("pade_order"), "{e}");
        let bad = r#"{"experiment":"sine-regression","tasks":{"kind":"blobs","way":1}}"#;
        let e = RunConfig::from_json(bad).unwrap_err();
        assert!(e.0.contains("tasks"), "{e}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = r#"{"experiment":"sine-regression","typo_field":1}"#;
        assert!(RunConfig::from_json(bad).is_err());
    }

    #[test]
    fn adapt_time_accepts_inf_sentinel() {
        let text = r#"{"experiment":"sine-regression","meta":{"adapt_time":"inf"}}"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert!(cfg.meta_config().unwrap().adapt_time.is_infinite());
        let bad = r#"{"experiment":"sine-regression","meta":{"adapt_time":"soon"}}"#;
        assert!(RunConfig::from_json(bad).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::from_json(&minimal("sine-regression")).unwrap();
        let b = RunConfig::from_json(&minimal("sine-regression")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 7;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn network_spec_uses_task_dims() {
        let text = r#"{"experiment":"blob-classification","tasks":{"kind":"blobs","way":5,"input_dim":4},"network":{"hidden":[32]}}"#;
        let cfg = RunConfig::from_json(text).unwrap();
        let spec = cfg.network_spec().unwrap();
        assert_eq!(spec.input_dim(), 4);
        assert_eq!(spec.output_dim(), 5);
    }
}
