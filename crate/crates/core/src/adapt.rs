//! Closed-form kernel adaptation (Meta-RKHS-II).
//!
//! Linearized training dynamics under the 1/(2n) squared loss follow
//! u̇ = −(1/n)·H·(u − Y), so a query prediction after time t is
//!
//! `f_t(x) = f(x) + H(x, X)·H⁻¹·(e^{−(t/n)H} − I)·(f(X) − Y)`
//!
//! and at t = ∞ the exponential vanishes, leaving the kernel-regression
//! interpolant. The matrix exponential is evaluated by scaling-and-squaring
//! around the configured Padé order; the kernel is recomputed at the current
//! meta-parameters on every adaptation and never cached across meta-updates.
//!
//! The meta-gradient treats kernel matrices as constants
//! (`stop_gradient_kernel`), differentiating only through the network
//! evaluations; [`FrozenAdaptation`] exposes exactly that frozen objective so
//! finite differences can check the gradient, and full (unfrozen) finite
//! differences quantify what freezing ignores.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::expm::expm_pade_scaled;
use crate::linalg::{solve_spd_tracked, DenseMatrix, SpdReport, Vector};
use crate::math;
use crate::meta::{AdaptTime, KernelKind, MetaConfig};
use crate::net::{
    forward, input_grad, jacobian, jvp_param, jvp_param_input_grad, sample_cost,
    sample_cotangent, vjp_params, LossKind, NetworkSpec, ParamVector,
};
use crate::ntk;
use crate::tasks::Task;

// ---------------------------------------------------------------------------
// Kernel assembly shared by the predictor and the meta-gradient
// ---------------------------------------------------------------------------

/// Stacked support Jacobians, one (d_y × P) block per sample, as an
/// (n·d_y) × P matrix.
fn stacked_jacobians(
    spec: &NetworkSpec,
    theta: &ParamVector,
    xs: &[Vector],
) -> Result<DenseMatrix> {
    let dy = spec.output_dim();
    let p = spec.param_count();
    let mut jsup = DenseMatrix::zeros(xs.len() * dy, p);
    for (i, x) in xs.iter().enumerate() {
        let jac = jacobian(spec, theta, x)?;
        for c in 0..dy {
            jsup.row_mut(i * dy + c).copy_from_slice(jac.row(c));
        }
    }
    Ok(jsup)
}

/// Full-mode Gram from stacked Jacobians, symmetrized.
fn gram_from_jsup(jsup: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(jsup.matmul(&jsup.transpose())?.symmetrized())
}

/// Scalar-mode Gram (entries summed over output dims) from stacked Jacobians.
fn scalar_gram_from_jsup(jsup: &DenseMatrix, n: usize, dy: usize) -> DenseMatrix {
    let mut h = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for c in 0..dy {
                s += crate::linalg::dot(jsup.row(i * dy + c), jsup.row(j * dy + c));
            }
            h[(i, j)] = s;
            h[(j, i)] = s;
        }
    }
    h
}

/// The adaptation operator W = H⁻¹·(e^{−(t/n)H} − I), or −H⁻¹ at t = ∞
/// (its limit). Returns the materialized matrix and the solve report.
fn adaptation_operator(
    h: &DenseMatrix,
    n_samples: usize,
    time: AdaptTime,
    cfg: &MetaConfig,
) -> Result<(DenseMatrix, SpdReport)> {
    let jitter = cfg.kernel_jitter * math::abs(h.mean_diag());
    let rhs = match time {
        AdaptTime::Finite(t) => {
            let m = expm_pade_scaled(&h.scale(-t / n_samples as f64), cfg.pade_order)?;
            m.sub(&DenseMatrix::identity(h.rows()))?
        }
        AdaptTime::Infinite => DenseMatrix::identity(h.rows()).scale(-1.0),
    };
    let (w, report) = solve_spd_tracked(h, &rhs, jitter)?;
    Ok((w, report))
}

fn stack_targets(ys: &[Vector], dy: usize) -> Vector {
    let mut out = Vector::zeros(ys.len() * dy);
    for (i, y) in ys.iter().enumerate() {
        for c in 0..dy {
            out[i * dy + c] = y[c];
        }
    }
    out
}

fn residual_matrix(outs: &[Vector], ys: &[Vector], dy: usize) -> DenseMatrix {
    let mut r = DenseMatrix::zeros(outs.len(), dy);
    for (i, (f, y)) in outs.iter().zip(ys.iter()).enumerate() {
        for c in 0..dy {
            r[(i, c)] = f[c] - y[c];
        }
    }
    r
}

fn resolve_bandwidth(kind: &KernelKind, xs: &[Vector]) -> f64 {
    match kind {
        KernelKind::Rbf { bandwidth: Some(b) } => *b,
        _ => ntk::median_bandwidth(xs),
    }
}

// ---------------------------------------------------------------------------
// Adapted predictor
// ---------------------------------------------------------------------------

enum State {
    /// Full NTK: predictions collapse to one tangent pass,
    /// f(x) + J(x)·u with u = Jsupᵀ·W·r.
    Full { direction: Vec<f64> },
    /// Scalar NTK: per-query cross row against cached support Jacobians,
    /// shared across output dims.
    Scalar { jsup: DenseMatrix, v: DenseMatrix },
    /// RBF kernel rows, analytic in x.
    Rbf { support: Vec<Vector>, v: DenseMatrix, bandwidth: f64 },
}

/// Task-adapted predictor produced by [`adapt_closed_form`].
pub struct AdaptedPredictor {
    spec: NetworkSpec,
    theta: ParamVector,
    time: AdaptTime,
    report: SpdReport,
    state: State,
}

/// Closed-form adaptation of the meta-model on a support set.
pub fn adapt_closed_form(
    spec: &NetworkSpec,
    theta: &ParamVector,
    support_x: &[Vector],
    support_y: &[Vector],
    time: AdaptTime,
    cfg: &MetaConfig,
) -> Result<AdaptedPredictor> {
    if support_x.is_empty() || support_x.len() != support_y.len() {
        return Err(CoreError::InvalidSpec(
            "closed-form adaptation needs a nonempty support set".into(),
        ));
    }
    time.validate()?;
    let n = support_x.len();
    let dy = spec.output_dim();
    let (outs, _) = forward(spec, theta, support_x)?;
    let (state, report) = match cfg.kernel {
        KernelKind::NtkFull => {
            let jsup = stacked_jacobians(spec, theta, support_x)?;
            let h = gram_from_jsup(&jsup)?;
            let (w, report) = adaptation_operator(&h, n, time, cfg)?;
            let mut r = stack_targets(&outs, dy);
            r.add_scaled(-1.0, &stack_targets(support_y, dy));
            let v = w.mul_vec(&r)?;
            let direction = jsup.tr_mul_vec(&v)?.into_vec();
            (State::Full { direction }, report)
        }
        KernelKind::NtkScalar => {
            let jsup = stacked_jacobians(spec, theta, support_x)?;
            let h = scalar_gram_from_jsup(&jsup, n, dy);
            let (w, report) = adaptation_operator(&h, n, time, cfg)?;
            let r = residual_matrix(&outs, support_y, dy);
            let v = w.matmul(&r)?;
            (State::Scalar { jsup, v }, report)
        }
        KernelKind::Rbf { .. } => {
            let bandwidth = resolve_bandwidth(&cfg.kernel, support_x);
            let h = ntk::rbf_gram(support_x, bandwidth)?.into_matrix();
            let (w, report) = adaptation_operator(&h, n, time, cfg)?;
            let r = residual_matrix(&outs, support_y, dy);
            let v = w.matmul(&r)?;
            (State::Rbf { support: support_x.to_vec(), v, bandwidth }, report)
        }
    };
    Ok(AdaptedPredictor {
        spec: spec.clone(),
        theta: theta.clone(),
        time,
        report,
        state,
    })
}

impl AdaptedPredictor {
    pub fn time(&self) -> AdaptTime {
        self.time
    }

    /// Jitter escalation happened during the kernel solve.
    pub fn jitter_escalated(&self) -> bool {
        self.report.escalations > 0
    }

    pub fn solve_report(&self) -> SpdReport {
        self.report
    }

    /// Adapted prediction f_t(x).
    pub fn predict(&self, x: &Vector) -> Result<Vector> {
        match &self.state {
            State::Full { direction } => {
                let (out, tangent) = jvp_param(&self.spec, &self.theta, x, direction)?;
                let mut p = out;
                p.add_scaled(1.0, &tangent);
                Ok(p)
            }
            State::Scalar { jsup, v } => {
                let (outs, _) = forward(&self.spec, &self.theta, core::slice::from_ref(x))?;
                let kappa = self.scalar_cross_row(x, jsup)?;
                let mut p = outs.into_iter().next().expect("one output");
                let dy = self.spec.output_dim();
                for c in 0..dy {
                    let mut add = 0.0;
                    for i in 0..kappa.len() {
                        add += kappa[i] * v[(i, c)];
                    }
                    p[c] += add;
                }
                Ok(p)
            }
            State::Rbf { support, v, bandwidth } => {
                let (outs, _) = forward(&self.spec, &self.theta, core::slice::from_ref(x))?;
                let kappa = ntk::rbf_cross(x, support, *bandwidth);
                let mut p = outs.into_iter().next().expect("one output");
                let dy = self.spec.output_dim();
                for c in 0..dy {
                    let mut add = 0.0;
                    for i in 0..kappa.len() {
                        add += kappa[i] * v[(i, c)];
                    }
                    p[c] += add;
                }
                Ok(p)
            }
        }
    }

    pub fn predict_batch(&self, xs: &[Vector]) -> Result<Vec<Vector>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    fn scalar_cross_row(&self, x: &Vector, jsup: &DenseMatrix) -> Result<Vector> {
        let jac = jacobian(&self.spec, &self.theta, x)?;
        let dy = self.spec.output_dim();
        let n = jsup.rows() / dy;
        let mut kappa = Vector::zeros(n);
        for i in 0..n {
            let mut s = 0.0;
            for c in 0..dy {
                s += crate::linalg::dot(jac.row(c), jsup.row(i * dy + c));
            }
            kappa[i] = s;
        }
        Ok(kappa)
    }

    /// Gradient of the per-sample cost C(f_t(x), y) with respect to the
    /// input. The kernel-row term ∂H(x, X)/∂x is differentiated by reverse
    /// mode through the tangent graph; `include_kernel_term = false` freezes
    /// it (diagnostic).
    pub fn cost_input_grad(
        &self,
        x: &Vector,
        y: &Vector,
        kind: LossKind,
        include_kernel_term: bool,
    ) -> Result<Vector> {
        let pred = self.predict(x)?;
        let cot = sample_cotangent(pred.as_slice(), y.as_slice(), kind);
        // ∂f_θ(x)/∂x part.
        let mut grad = input_grad(&self.spec, &self.theta, x, &cot)?;
        match &self.state {
            State::Full { direction } => {
                if include_kernel_term {
                    let kg =
                        jvp_param_input_grad(&self.spec, &self.theta, x, direction, &cot)?;
                    grad.add_scaled(1.0, &kg);
                }
            }
            State::Scalar { jsup, v } => {
                if include_kernel_term {
                    let dy = self.spec.output_dim();
                    let n = jsup.rows() / dy;
                    // β_i = Σ_c' v[i,c']·cot_c'; kernel term is Σ_c J_c(x)·m_c
                    // with m_c = Σ_i β_i·Jsup[i·dy+c].
                    let beta: Vec<f64> = (0..n)
                        .map(|i| (0..dy).map(|c| v[(i, c)] * cot[c]).sum())
                        .collect();
                    let p = self.spec.param_count();
                    for c in 0..dy {
                        let mut m = vec![0.0; p];
                        for (i, &b) in beta.iter().enumerate() {
                            if b == 0.0 {
                                continue;
                            }
                            for (mm, &jj) in m.iter_mut().zip(jsup.row(i * dy + c)) {
                                *mm += b * jj;
                            }
                        }
                        let mut basis = vec![0.0; dy];
                        basis[c] = 1.0;
                        let kg =
                            jvp_param_input_grad(&self.spec, &self.theta, x, &m, &basis)?;
                        grad.add_scaled(1.0, &kg);
                    }
                }
            }
            State::Rbf { support, v, bandwidth } => {
                if include_kernel_term {
                    let dy = self.spec.output_dim();
                    let bw2 = bandwidth * bandwidth;
                    for (i, xi) in support.iter().enumerate() {
                        let beta: f64 = (0..dy).map(|c| v[(i, c)] * cot[c]).sum();
                        if beta == 0.0 {
                            continue;
                        }
                        let k = ntk::rbf_kernel(x, xi, *bandwidth);
                        for d in 0..x.len() {
                            grad[d] += beta * k * (xi[d] - x[d]) / bw2;
                        }
                    }
                }
            }
        }
        Ok(grad)
    }
}

// ---------------------------------------------------------------------------
// Meta-RKHS-II objective and frozen-kernel gradient
// ---------------------------------------------------------------------------

/// Energy of the closed-form adaptation: mean over tasks of the query-set
/// empirical loss of the adapted predictor.
pub fn meta_rkhs_2_objective(
    spec: &NetworkSpec,
    theta: &ParamVector,
    tasks: &[Task],
    time: AdaptTime,
    cfg: &MetaConfig,
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(CoreError::InvalidSpec("empty task batch".into()));
    }
    let mut total = 0.0;
    for task in tasks {
        if task.query_x.is_empty() {
            return Err(CoreError::InvalidSpec("task has an empty query set".into()));
        }
        let predictor =
            adapt_closed_form(spec, theta, &task.support_x, &task.support_y, time, cfg)?;
        let preds = predictor.predict_batch(&task.query_x)?;
        let q = task.query_x.len() as f64;
        total += preds
            .iter()
            .zip(task.query_y.iter())
            .map(|(p, y)| sample_cost(p.as_slice(), y.as_slice(), cfg.loss_kind))
            .sum::<f64>()
            / q;
    }
    Ok(total / tasks.len() as f64)
}

/// Gradient of [`meta_rkhs_2_objective`] with the kernel matrices held
/// constant (the `stop_gradient_kernel` convention): only the f_θ(x) and
/// f_θ(X_tr) terms are differentiated, giving a weighted sum of network
/// backward passes.
pub fn meta_rkhs_2_grad(
    spec: &NetworkSpec,
    theta: &ParamVector,
    tasks: &[Task],
    time: AdaptTime,
    cfg: &MetaConfig,
) -> Result<Vector> {
    if tasks.is_empty() {
        return Err(CoreError::InvalidSpec("empty task batch".into()));
    }
    if !cfg.stop_gradient_kernel {
        return Err(CoreError::InvalidConfig(
            "stop_gradient_kernel: only the frozen-kernel gradient is implemented; \
             quantify the difference with finite differences of the full objective"
                .into(),
        ));
    }
    let mut total = Vector::zeros(theta.len());
    for task in tasks {
        let frozen = FrozenAdaptation::build(spec, theta, task, time, cfg)?;
        let g = frozen.grad_at(spec, theta, cfg.loss_kind)?;
        total.add_scaled(1.0, &g);
    }
    Ok(total.scale(1.0 / tasks.len() as f64))
}

/// Per-task Meta-RKHS-II value and frozen-kernel gradient in one pass,
/// sharing the assembled kernel pieces.
pub fn rkhs2_task_loss_and_grad(
    spec: &NetworkSpec,
    theta: &ParamVector,
    task: &Task,
    time: AdaptTime,
    cfg: &MetaConfig,
) -> Result<(f64, Vector)> {
    let frozen = FrozenAdaptation::build(spec, theta, task, time, cfg)?;
    let loss = frozen.query_loss_at(spec, theta, cfg.loss_kind)?;
    let grad = frozen.grad_at(spec, theta, cfg.loss_kind)?;
    Ok((loss, grad))
}

/// One task's closed-form adaptation with every kernel quantity frozen at the
/// parameters it was built with. Re-evaluating at other parameters moves only
/// the network terms, which is exactly the objective the frozen-kernel
/// gradient differentiates — so finite differences of [`Self::query_loss_at`]
/// validate [`meta_rkhs_2_grad`].
pub struct FrozenAdaptation {
    support_x: Vec<Vector>,
    support_y_stacked: Vector,
    query_x: Vec<Vector>,
    query_y: Vec<Vector>,
    /// Per query: A_j (d_y × n·d_y) with prediction f(x_j) + A_j·r(θ).
    rows: Vec<DenseMatrix>,
    pub report: SpdReport,
}

impl FrozenAdaptation {
    pub fn build(
        spec: &NetworkSpec,
        theta: &ParamVector,
        task: &Task,
        time: AdaptTime,
        cfg: &MetaConfig,
    ) -> Result<Self> {
        if task.support_x.is_empty() || task.query_x.is_empty() {
            return Err(CoreError::InvalidSpec(
                "closed-form tasks need nonempty support and query sets".into(),
            ));
        }
        time.validate()?;
        let n = task.support_x.len();
        let dy = spec.output_dim();
        let (w, report, kernel_rows) = match cfg.kernel {
            KernelKind::NtkFull => {
                let jsup = stacked_jacobians(spec, theta, &task.support_x)?;
                let h = gram_from_jsup(&jsup)?;
                let (w, report) = adaptation_operator(&h, n, time, cfg)?;
                let rows: Result<Vec<DenseMatrix>> = task
                    .query_x
                    .iter()
                    .map(|x| jacobian(spec, theta, x)?.matmul(&jsup.transpose()))
                    .collect();
                (w, report, rows?)
            }
            KernelKind::NtkScalar => {
                let jsup = stacked_jacobians(spec, theta, &task.support_x)?;
                let h = scalar_gram_from_jsup(&jsup, n, dy);
                let (w, report) = adaptation_operator(&h, n, time, cfg)?;
                let mut rows = Vec::with_capacity(task.query_x.len());
                for x in &task.query_x {
                    let jac = jacobian(spec, theta, x)?;
                    let mut kappa = DenseMatrix::zeros(1, n);
                    for i in 0..n {
                        let mut s = 0.0;
                        for c in 0..dy {
                            s += crate::linalg::dot(jac.row(c), jsup.row(i * dy + c));
                        }
                        kappa[(0, i)] = s;
                    }
                    rows.push(kappa);
                }
                (w, report, rows)
            }
            KernelKind::Rbf { .. } => {
                let bandwidth = resolve_bandwidth(&cfg.kernel, &task.support_x);
                let h = ntk::rbf_gram(&task.support_x, bandwidth)?.into_matrix();
                let (w, report) = adaptation_operator(&h, n, time, cfg)?;
                let rows = task
                    .query_x
                    .iter()
                    .map(|x| {
                        let kappa = ntk::rbf_cross(x, &task.support_x, bandwidth);
                        let mut m = DenseMatrix::zeros(1, n);
                        m.row_mut(0).copy_from_slice(kappa.as_slice());
                        m
                    })
                    .collect();
                (w, report, rows)
            }
        };
        // A_j = K_j·W, expanded to full (d_y × n·d_y) form for scalar kernels
        // (the same scalar row acts on every output dimension).
        let rows = kernel_rows
            .into_iter()
            .map(|k| -> Result<DenseMatrix> {
                let kw = k.matmul(&w)?;
                if kw.rows() == dy {
                    Ok(kw)
                } else {
                    let mut a = DenseMatrix::zeros(dy, n * dy);
                    for c in 0..dy {
                        for i in 0..n {
                            a[(c, i * dy + c)] = kw[(0, i)];
                        }
                    }
                    Ok(a)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            support_x: task.support_x.clone(),
            support_y_stacked: stack_targets(&task.support_y, dy),
            query_x: task.query_x.clone(),
            query_y: task.query_y.clone(),
            rows,
            report,
        })
    }

    fn support_residual(&self, spec: &NetworkSpec, theta: &ParamVector) -> Result<Vector> {
        let dy = spec.output_dim();
        let (outs, _) = forward(spec, theta, &self.support_x)?;
        let mut r = stack_targets(&outs, dy);
        r.add_scaled(-1.0, &self.support_y_stacked);
        Ok(r)
    }

    /// Query predictions with kernel pieces frozen, network terms evaluated
    /// at `theta`.
    pub fn predict_at(&self, spec: &NetworkSpec, theta: &ParamVector) -> Result<Vec<Vector>> {
        let r = self.support_residual(spec, theta)?;
        let (outs, _) = forward(spec, theta, &self.query_x)?;
        outs.into_iter()
            .zip(self.rows.iter())
            .map(|(mut f, a)| {
                let add = a.mul_vec(&r)?;
                f.add_scaled(1.0, &add);
                Ok(f)
            })
            .collect()
    }

    /// Mean query loss of the frozen predictor at `theta`.
    pub fn query_loss_at(
        &self,
        spec: &NetworkSpec,
        theta: &ParamVector,
        kind: LossKind,
    ) -> Result<f64> {
        let preds = self.predict_at(spec, theta)?;
        let q = preds.len() as f64;
        Ok(preds
            .iter()
            .zip(self.query_y.iter())
            .map(|(p, y)| sample_cost(p.as_slice(), y.as_slice(), kind))
            .sum::<f64>()
            / q)
    }

    /// Exact gradient of [`Self::query_loss_at`] at `theta` by reverse mode:
    /// query cotangents through f(x_j) plus pulled-back support cotangents
    /// Σ_j A_jᵀ·c_j through f(X_tr).
    pub fn grad_at(
        &self,
        spec: &NetworkSpec,
        theta: &ParamVector,
        kind: LossKind,
    ) -> Result<Vector> {
        let dy = spec.output_dim();
        let q = self.query_x.len() as f64;
        let preds = self.predict_at(spec, theta)?;
        let mut grad = Vector::zeros(theta.len());
        let mut support_cot = Vector::zeros(self.support_y_stacked.len());
        for ((x, pred), (y, a)) in self
            .query_x
            .iter()
            .zip(preds.iter())
            .zip(self.query_y.iter().zip(self.rows.iter()))
        {
            let mut c = sample_cotangent(pred.as_slice(), y.as_slice(), kind);
            for v in &mut c {
                *v /= q;
            }
            let g = vjp_params(spec, theta, x, &c)?;
            grad.add_scaled(1.0, &g);
            let pulled = a.tr_mul_vec(&Vector::new(c))?;
            support_cot.add_scaled(1.0, &pulled);
        }
        for (i, x) in self.support_x.iter().enumerate() {
            let c = &support_cot.as_slice()[i * dy..(i + 1) * dy];
            if c.iter().all(|&v| v == 0.0) {
                continue;
            }
            let g = vjp_params(spec, theta, x, c)?;
            grad.add_scaled(1.0, &g);
        }
        Ok(grad)
    }
}
