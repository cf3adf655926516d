//! ℓ∞ PGD adversarial evaluation of adapted predictors.
//!
//! The iteration is x ← Π_{‖·−x₀‖∞ ≤ ε}(x + step·sign(∇_x loss)); projection
//! is enforced on the perturbation itself and re-checked bitwise against the
//! evaluated difference, so the budget is never exceeded even at the last ulp.

use alloc::format;

use crate::adapt::AdaptedPredictor;
use crate::error::{CoreError, Result};
use crate::linalg::Vector;
use crate::math;
use crate::meta::decode_label;
use crate::net::{cost_input_grad, LossKind, NetworkSpec, ParamVector};
use crate::rng::CounterRng;
use crate::tasks::Task;

/// ℓ∞ attack configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    /// Perturbation budget ε ≥ 0.
    pub epsilon: f64,
    /// Ascent step size (> 0); the projection enforces the budget regardless.
    pub step_size: f64,
    /// PGD iterations (≥ 1).
    pub iterations: usize,
    /// Optional per-feature clip range applied after projection.
    pub clip: Option<(f64, f64)>,
    /// Uniform random start inside the ε-ball (off by default).
    pub random_start: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            step_size: 0.02,
            iterations: 20,
            clip: None,
            random_start: false,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "epsilon: must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.step_size > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "step_size: must be > 0, got {}",
                self.step_size
            )));
        }
        if self.iterations == 0 {
            return Err(CoreError::InvalidConfig("iterations: must be >= 1".into()));
        }
        if let Some((lo, hi)) = self.clip {
            if !(lo <= hi) {
                return Err(CoreError::InvalidConfig(format!(
                    "clip: empty range [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// A predictor a white-box attack can differentiate: scores for accuracy and
/// the input gradient of its training loss.
pub trait AttackTarget {
    fn predict(&self, x: &Vector) -> Result<Vector>;
    fn loss_input_grad(&self, x: &Vector, y: &Vector) -> Result<Vector>;
}

/// Gradient-adapted network (MAML family / Meta-RKHS-I at test time).
pub struct NetTarget {
    pub spec: NetworkSpec,
    pub theta: ParamVector,
    pub loss: LossKind,
}

impl AttackTarget for NetTarget {
    fn predict(&self, x: &Vector) -> Result<Vector> {
        let (outs, _) = crate::net::forward(&self.spec, &self.theta, core::slice::from_ref(x))?;
        Ok(outs.into_iter().next().expect("one output"))
    }

    fn loss_input_grad(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        cost_input_grad(&self.spec, &self.theta, x, y, self.loss)
    }
}

/// Closed-form kernel predictor; the input gradient sees the cross-kernel
/// row unless `freeze_kernel_term` is set (diagnostic).
pub struct ClosedFormTarget {
    pub predictor: AdaptedPredictor,
    pub loss: LossKind,
    pub freeze_kernel_term: bool,
}

impl AttackTarget for ClosedFormTarget {
    fn predict(&self, x: &Vector) -> Result<Vector> {
        self.predictor.predict(x)
    }

    fn loss_input_grad(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.predictor
            .cost_input_grad(x, y, self.loss, !self.freeze_kernel_term)
    }
}

/// Clamp `x` so that every coordinate differs from `origin` by at most
/// `eps` in evaluated f64 arithmetic, nudging by ulps where rounding of
/// origin ± eps would otherwise overshoot.
fn project_linf(origin: &Vector, x: &mut Vector, eps: f64) {
    for i in 0..x.len() {
        let o = origin[i];
        let delta = (x[i] - o).clamp(-eps, eps);
        let mut xi = o + delta;
        // Repair the at-most-one-ulp overshoot from rounding.
        while xi - o > eps {
            xi = next_toward_zero_from(xi, o);
        }
        while xi - o < -eps {
            xi = next_away_from_zero_toward(xi, o);
        }
        x[i] = xi;
    }
}

fn next_toward_zero_from(x: f64, target: f64) -> f64 {
    // Next representable value strictly below x (we only need movement
    // toward `target`, which is smaller here).
    debug_assert!(x > target);
    f64::from_bits(if x > 0.0 { x.to_bits() - 1 } else { x.to_bits() + 1 })
}

fn next_away_from_zero_toward(x: f64, target: f64) -> f64 {
    debug_assert!(x < target);
    f64::from_bits(if x >= 0.0 { x.to_bits() + 1 } else { x.to_bits() - 1 })
}

/// ℓ∞ PGD: gradient-sign ascent from x₀ with exact projection onto the
/// ε-ball (and optional clip range). Deterministic unless `random_start`.
pub fn pgd_linf<T: AttackTarget>(
    target: &T,
    x0: &Vector,
    y: &Vector,
    cfg: &AttackConfig,
    rng: Option<&mut CounterRng>,
) -> Result<Vector> {
    cfg.validate()?;
    if cfg.epsilon == 0.0 {
        return Ok(x0.clone());
    }
    let mut x = x0.clone();
    if cfg.random_start {
        if let Some(rng) = rng {
            for i in 0..x.len() {
                x[i] += rng.range(-cfg.epsilon, cfg.epsilon);
            }
            project_linf(x0, &mut x, cfg.epsilon);
        }
    }
    for _ in 0..cfg.iterations {
        let g = target.loss_input_grad(&x, y)?;
        for i in 0..x.len() {
            x[i] += cfg.step_size * math::signum0(g[i]);
        }
        project_linf(x0, &mut x, cfg.epsilon);
        if let Some((lo, hi)) = cfg.clip {
            for i in 0..x.len() {
                x[i] = x[i].clamp(lo, hi);
            }
        }
    }
    Ok(x)
}

/// Clean and attacked query accuracy over a task set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustReport {
    pub clean_accuracy: f64,
    pub robust_accuracy: f64,
    pub n_tasks: usize,
    pub n_queries: usize,
}

/// Adapt on each task's support set (per-algorithm rule supplied by the
/// factory), attack every query point, and report mean accuracy before and
/// after the attack. `targets_of` maps a query label to the target vector the
/// attacked loss uses (one-hot, kernel encoding, ...).
pub fn robust_accuracy<T, F, E>(
    mut adapt: F,
    mut encode_target: E,
    tasks: &[Task],
    cfg: &AttackConfig,
) -> Result<RobustReport>
where
    T: AttackTarget,
    F: FnMut(&Task) -> Result<T>,
    E: FnMut(usize) -> Result<Vector>,
{
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(CoreError::InvalidSpec("empty task batch".into()));
    }
    let mut clean = 0usize;
    let mut robust = 0usize;
    let mut total = 0usize;
    for (task_idx, task) in tasks.iter().enumerate() {
        let target = adapt(task)?;
        let labels = task.query_labels();
        for (q_idx, (x, &label)) in task.query_x.iter().zip(labels.iter()).enumerate() {
            let y = encode_target(label)?;
            let pred = target.predict(x)?;
            if decode_label(&pred) == label {
                clean += 1;
            }
            let mut rng = CounterRng::keyed(&[0xadcf, task_idx as u64, q_idx as u64]);
            let x_adv = pgd_linf(&target, x, &y, cfg, Some(&mut rng))?;
            let pred_adv = target.predict(&x_adv)?;
            if decode_label(&pred_adv) == label {
                robust += 1;
            }
            total += 1;
        }
    }
    Ok(RobustReport {
        clean_accuracy: clean as f64 / total as f64,
        robust_accuracy: robust as f64 / total as f64,
        n_tasks: tasks.len(),
        n_queries: total,
    })
}
