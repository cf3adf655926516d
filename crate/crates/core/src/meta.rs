//! Meta-objectives and meta-gradients: the fast-adaptation regularized
//! objective (Meta-RKHS-I), MAML / FOMAML / Reptile baselines with
//! finite-difference Hessian-vector products, the k-step Taylor-gap
//! diagnostic, and label encodings for kernel classification.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::expm::PadeOrder;
use crate::linalg::Vector;
use crate::net::{batch_loss, grad_loss, LossKind, NetworkSpec, ParamVector};
use crate::ntk;
use crate::tasks::Task;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Adaptation horizon for the closed-form predictor. Infinity is a distinct
/// value, never approximated by a large float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdaptTime {
    Finite(f64),
    Infinite,
}

impl AdaptTime {
    pub fn is_infinite(&self) -> bool {
        matches!(self, AdaptTime::Infinite)
    }

    pub fn validate(&self) -> Result<()> {
        if let AdaptTime::Finite(t) = self {
            if !(*t >= 0.0) || !t.is_finite() {
                return Err(CoreError::InvalidConfig(format!(
                    "adapt_time: must be >= 0 and finite (or the infinite sentinel), got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Kernel backing the closed-form adaptation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// Full matrix-valued NTK, (n·d_y)² Gram.
    NtkFull,
    /// NTK summed over output dimensions, n×n Gram shared across outputs
    /// (the flattened-output classification construction).
    NtkScalar,
    /// Gaussian kernel; `None` bandwidth selects the median heuristic on the
    /// support set.
    Rbf { bandwidth: Option<f64> },
}

/// Hyperparameters shared by the meta-learning algorithms.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaConfig {
    /// Inner-loop learning rate α (also the regularizer weight of Meta-RKHS-I).
    pub inner_lr: f64,
    /// Inner gradient steps k for the MAML family.
    pub inner_steps: usize,
    /// Closed-form adaptation horizon t.
    pub adapt_time: AdaptTime,
    /// Padé order backing the matrix exponential.
    pub pade_order: PadeOrder,
    /// Outer-loop learning rate.
    pub meta_lr: f64,
    /// Tasks per meta-iteration.
    pub meta_batch: usize,
    pub loss_kind: LossKind,
    /// Relative step for finite-difference Hessian-vector products.
    pub hvp_step: f64,
    /// Relative jitter for kernel solves (scaled by the mean Gram diagonal).
    pub kernel_jitter: f64,
    /// Treat kernel matrices as constants when differentiating the
    /// closed-form objective (the NTK-regime convention).
    pub stop_gradient_kernel: bool,
    pub kernel: KernelKind,
    /// Evaluate the Meta-RKHS-I regularizer as the support/query gradient
    /// inner product instead of the single-batch norm.
    pub rkhs1_split: bool,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            inner_lr: 0.01,
            inner_steps: 1,
            adapt_time: AdaptTime::Finite(10.0),
            pade_order: PadeOrder::Two,
            meta_lr: 1e-3,
            meta_batch: 16,
            loss_kind: LossKind::Squared,
            hvp_step: 1e-5,
            kernel_jitter: 1e-8,
            stop_gradient_kernel: true,
            kernel: KernelKind::NtkFull,
            rkhs1_split: false,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_lr > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "inner_lr: must be > 0, got {}",
                self.inner_lr
            )));
        }
        if self.inner_steps == 0 {
            return Err(CoreError::InvalidConfig("inner_steps: must be >= 1".into()));
        }
        self.adapt_time.validate()?;
        if !(self.meta_lr > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "meta_lr: must be > 0, got {}",
                self.meta_lr
            )));
        }
        if self.meta_batch == 0 {
            return Err(CoreError::InvalidConfig("meta_batch: must be >= 1".into()));
        }
        if !(self.hvp_step > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "hvp_step: must be > 0, got {}",
                self.hvp_step
            )));
        }
        if !(self.kernel_jitter >= 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "kernel_jitter: must be >= 0, got {}",
                self.kernel_jitter
            )));
        }
        if let KernelKind::Rbf { bandwidth: Some(b) } = self.kernel {
            if !(b > 0.0) {
                return Err(CoreError::InvalidConfig(format!(
                    "kernel.bandwidth: must be > 0, got {b}"
                )));
            }
        }
        Ok(())
    }
}

fn require_support(task: &Task) -> Result<()> {
    if task.support_x.is_empty() {
        return Err(CoreError::InvalidSpec("task has an empty support set".into()));
    }
    Ok(())
}

fn require_query(task: &Task) -> Result<()> {
    if task.query_x.is_empty() {
        return Err(CoreError::InvalidSpec("task has an empty query set".into()));
    }
    Ok(())
}

fn require_tasks(tasks: &[Task]) -> Result<()> {
    if tasks.is_empty() {
        return Err(CoreError::InvalidSpec("empty task batch".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Meta-RKHS-I: regularized energy objective
// ---------------------------------------------------------------------------

/// Regularized energy over a task batch:
/// mean_m [ L(f_θ, D_m) − α·‖∇_f L(f_θ, D_m)‖²_H ].
///
/// The default (unsplit) arm uses each task's support set as D_m. With
/// `cfg.rkhs1_split` the loss term moves to the query set and the regularizer
/// becomes the support/query gradient inner product.
pub fn meta_rkhs_1_objective(
    spec: &NetworkSpec,
    theta: &ParamVector,
    tasks: &[Task],
    alpha: f64,
    cfg: &MetaConfig,
) -> Result<f64> {
    require_tasks(tasks)?;
    let mut total = 0.0;
    for task in tasks {
        require_support(task)?;
        if cfg.rkhs1_split {
            require_query(task)?;
            let loss = batch_loss(spec, theta, &task.query_x, &task.query_y, cfg.loss_kind)?;
            let inner = ntk::functional_grad_inner(
                spec,
                theta,
                (&task.support_x, &task.support_y),
                (&task.query_x, &task.query_y),
                cfg.loss_kind,
            )?;
            total += loss - alpha * inner;
        } else {
            let loss = batch_loss(spec, theta, &task.support_x, &task.support_y, cfg.loss_kind)?;
            let norm = ntk::functional_grad_norm_sq(
                spec,
                theta,
                &task.support_x,
                &task.support_y,
                cfg.loss_kind,
            )?;
            total += loss - alpha * norm;
        }
    }
    Ok(total / tasks.len() as f64)
}

/// Hessian-vector product H·v of the batch loss by central finite differences
/// of the exact gradient:
/// (∇L(θ + h·v̂) − ∇L(θ − h·v̂))·‖v‖/(2h), h = hvp_step·(1 + ‖θ‖∞).
pub fn hvp(
    spec: &NetworkSpec,
    theta: &ParamVector,
    xs: &[Vector],
    ys: &[Vector],
    v: &Vector,
    kind: LossKind,
    hvp_step: f64,
) -> Result<Vector> {
    let norm = v.norm2();
    if norm == 0.0 {
        return Ok(Vector::zeros(v.len()));
    }
    let h = hvp_step * (1.0 + theta.inf_norm());
    let mut plus = theta.clone();
    plus.add_scaled(h / norm, v.as_slice());
    let mut minus = theta.clone();
    minus.add_scaled(-h / norm, v.as_slice());
    let gp = grad_loss(spec, &plus, xs, ys, kind)?;
    let gm = grad_loss(spec, &minus, xs, ys, kind)?;
    let mut out = gp;
    out.add_scaled(-1.0, &gm);
    Ok(out.scale(norm / (2.0 * h)))
}

/// Gradient of [`meta_rkhs_1_objective`]:
/// ∇θ[L − α‖∇L‖²] = ∇L − 2α·H·∇L, with the Hessian-vector product by
/// central differences.
pub fn meta_rkhs_1_grad(
    spec: &NetworkSpec,
    theta: &ParamVector,
    tasks: &[Task],
    alpha: f64,
    cfg: &MetaConfig,
) -> Result<Vector> {
    require_tasks(tasks)?;
    let mut total = Vector::zeros(theta.len());
    for task in tasks {
        let (_, g) = rkhs1_task_loss_and_grad(spec, theta, task, alpha, cfg)?;
        total.add_scaled(1.0, &g);
    }
    Ok(total.scale(1.0 / tasks.len() as f64))
}

// ---------------------------------------------------------------------------
// Gradient-based adaptation and the MAML family
// ---------------------------------------------------------------------------

/// k plain gradient steps on a batch; returns the adapted parameters and the
/// visited trajectory θ_0..θ_{k−1} (the points where inner gradients were
/// taken).
pub fn adapt_gradient_steps(
    spec: &NetworkSpec,
    theta: &ParamVector,
    xs: &[Vector],
    ys: &[Vector],
    alpha: f64,
    steps: usize,
    kind: LossKind,
) -> Result<(ParamVector, Vec<ParamVector>)> {
    let mut current = theta.clone();
    let mut trajectory = Vec::with_capacity(steps);
    for _ in 0..steps {
        let g = grad_loss(spec, &current, xs, ys, kind)?;
        trajectory.push(current.clone());
        current.add_scaled(-alpha, g.as_slice());
    }
    Ok((current, trajectory))
}

/// Baseline selector for [`maml_meta_grad`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MamlVariant {
    /// Full meta-gradient: query gradient at φ pulled back through
    /// Π(I − α·H_i) as repeated Hessian-vector products.
    Maml,
    /// First-order MAML: the query gradient at φ.
    Fomaml,
    /// Parameter displacement θ − φ after k support steps, in gradient
    /// convention (an optimizer step θ ← θ − lr·g moves θ toward φ).
    Reptile,
}

/// Per-task meta-gradient of one MAML-family variant, returning the adapted
/// query loss alongside (the training metric).
#[allow(clippy::too_many_arguments)]
pub fn maml_task_loss_and_grad(
    spec: &NetworkSpec,
    theta: &ParamVector,
    task: &Task,
    alpha: f64,
    steps: usize,
    hvp_step: f64,
    kind: LossKind,
    variant: MamlVariant,
) -> Result<(f64, Vector)> {
    require_support(task)?;
    let (phi, trajectory) = adapt_gradient_steps(
        spec, theta, &task.support_x, &task.support_y, alpha, steps, kind,
    )?;
    let loss = if task.query_x.is_empty() {
        batch_loss(spec, &phi, &task.support_x, &task.support_y, kind)?
    } else {
        batch_loss(spec, &phi, &task.query_x, &task.query_y, kind)?
    };
    let grad = match variant {
        MamlVariant::Reptile => Vector::new(
            theta
                .as_slice()
                .iter()
                .zip(phi.as_slice())
                .map(|(a, b)| a - b)
                .collect(),
        ),
        MamlVariant::Fomaml => {
            require_query(task)?;
            grad_loss(spec, &phi, &task.query_x, &task.query_y, kind)?
        }
        MamlVariant::Maml => {
            require_query(task)?;
            let mut v = grad_loss(spec, &phi, &task.query_x, &task.query_y, kind)?;
            // dθ_k/dθ_0 pulled back step by step: v ← (I − α·H(θ_i))·v.
            for point in trajectory.iter().rev() {
                let hv = hvp(
                    spec, point, &task.support_x, &task.support_y, &v, kind, hvp_step,
                )?;
                v.add_scaled(-alpha, &hv);
            }
            v
        }
    };
    Ok((loss, grad))
}

/// Meta-gradient of the query loss after k inner support steps, averaged over
/// the task batch.
#[allow(clippy::too_many_arguments)]
pub fn maml_meta_grad(
    spec: &NetworkSpec,
    theta: &ParamVector,
    tasks: &[Task],
    alpha: f64,
    steps: usize,
    hvp_step: f64,
    kind: LossKind,
    variant: MamlVariant,
) -> Result<Vector> {
    require_tasks(tasks)?;
    let mut total = Vector::zeros(theta.len());
    for task in tasks {
        let (_, g) =
            maml_task_loss_and_grad(spec, theta, task, alpha, steps, hvp_step, kind, variant)?;
        total.add_scaled(1.0, &g);
    }
    Ok(total.scale(1.0 / tasks.len() as f64))
}

/// Per-task Meta-RKHS-I value and gradient in one pass, with the loss
/// evaluated through the parameter-space form of the kernel norm (the two
/// routes agree by the norm identity; the kernel route lives in
/// [`meta_rkhs_1_objective`]).
pub fn rkhs1_task_loss_and_grad(
    spec: &NetworkSpec,
    theta: &ParamVector,
    task: &Task,
    alpha: f64,
    cfg: &MetaConfig,
) -> Result<(f64, Vector)> {
    require_support(task)?;
    if cfg.rkhs1_split {
        require_query(task)?;
        let (l_q, g_q) =
            crate::net::loss_and_grad(spec, theta, &task.query_x, &task.query_y, cfg.loss_kind)?;
        let g_tr = grad_loss(spec, theta, &task.support_x, &task.support_y, cfg.loss_kind)?;
        let loss = l_q - alpha * g_tr.dot(&g_q);
        let h_tr_gq = hvp(
            spec, theta, &task.support_x, &task.support_y, &g_q, cfg.loss_kind, cfg.hvp_step,
        )?;
        let h_q_gtr = hvp(
            spec, theta, &task.query_x, &task.query_y, &g_tr, cfg.loss_kind, cfg.hvp_step,
        )?;
        let mut g = g_q;
        g.add_scaled(-alpha, &h_tr_gq);
        g.add_scaled(-alpha, &h_q_gtr);
        Ok((loss, g))
    } else {
        let (l, g0) = crate::net::loss_and_grad(
            spec, theta, &task.support_x, &task.support_y, cfg.loss_kind,
        )?;
        let loss = l - alpha * g0.dot(&g0);
        let hg = hvp(
            spec, theta, &task.support_x, &task.support_y, &g0, cfg.loss_kind, cfg.hvp_step,
        )?;
        let mut g = g0;
        g.add_scaled(-2.0 * alpha, &hg);
        Ok((loss, g))
    }
}

// ---------------------------------------------------------------------------
// Taylor gap (k-step expansion vs the regularized energy)
// ---------------------------------------------------------------------------

/// |M_k − Ẽ(kα)| where M_k follows the explicit inner-loop trajectory:
/// M_k = mean_m [ L(θ) − Σ_{i<k} α·∇L(θ_i)·∇L(θ)ᵀ ] and Ẽ(kα) is
/// [`meta_rkhs_1_objective`] at regularizer weight kα. Identically zero at
/// k = 1.
pub fn taylor_gap(
    spec: &NetworkSpec,
    theta: &ParamVector,
    tasks: &[Task],
    alpha: f64,
    steps: usize,
    cfg: &MetaConfig,
) -> Result<f64> {
    require_tasks(tasks)?;
    let mut m_k = 0.0;
    for task in tasks {
        require_support(task)?;
        let xs = &task.support_x;
        let ys = &task.support_y;
        let loss = batch_loss(spec, theta, xs, ys, cfg.loss_kind)?;
        let g0 = grad_loss(spec, theta, xs, ys, cfg.loss_kind)?;
        let (_, trajectory) =
            adapt_gradient_steps(spec, theta, xs, ys, alpha, steps, cfg.loss_kind)?;
        let mut beta_sum = 0.0;
        for point in &trajectory {
            let gi = grad_loss(spec, point, xs, ys, cfg.loss_kind)?;
            beta_sum += alpha * gi.dot(&g0);
        }
        m_k += loss - beta_sum;
    }
    m_k /= tasks.len() as f64;
    let unsplit = MetaConfig { rkhs1_split: false, ..cfg.clone() };
    let energy = meta_rkhs_1_objective(spec, theta, tasks, steps as f64 * alpha, &unsplit)?;
    Ok((m_k - energy).abs())
}

// ---------------------------------------------------------------------------
// Label encodings
// ---------------------------------------------------------------------------

/// Zero-mean class encoding for kernel classification: (C−1)/C at the true
/// class, −1/C elsewhere. Decoded by [`decode_label`] (argmax).
pub fn encode_labels(labels: &[usize], classes: usize) -> Result<Vec<Vector>> {
    labels
        .iter()
        .map(|&label| {
            if label >= classes {
                return Err(CoreError::InvalidLabel { label, classes });
            }
            let mut v = Vector::new(alloc::vec![-1.0 / classes as f64; classes]);
            v[label] = (classes as f64 - 1.0) / classes as f64;
            Ok(v)
        })
        .collect()
}

/// One-hot targets for cross-entropy training.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Vec<Vector>> {
    labels
        .iter()
        .map(|&label| {
            if label >= classes {
                return Err(CoreError::InvalidLabel { label, classes });
            }
            let mut v = Vector::zeros(classes);
            v[label] = 1.0;
            Ok(v)
        })
        .collect()
}

/// Predicted class of a score vector (argmax; first index wins ties).
pub fn decode_label(scores: &Vector) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    best
}
