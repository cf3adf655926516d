//! Independent verification oracles: an RK4 integrator for the linearized
//! function-space flow (the second route to the closed-form adaptation),
//! coordinate-wise finite-difference gradients, and the empirical theorem
//! sweeps (Taylor-gap trends and regularized-vs-closed-form energy gaps).

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::linalg::{DenseMatrix, Vector};
use crate::math;
use crate::meta::{meta_rkhs_1_objective, taylor_gap, AdaptTime, MetaConfig};
use crate::net::{forward, jacobian, spectral_norms, NetworkSpec, ParamVector};
use crate::tasks::{Task, TaskDistributionSpec};

/// Fixed-step RK4 settings for the flow oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeConfig {
    /// Integration steps per unit time (≥ 100 for acceptance-grade runs).
    pub steps_per_unit: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self { steps_per_unit: 1000 }
    }
}

impl OdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_unit < 100 {
            return Err(CoreError::InvalidConfig(
                "ode.steps_per_unit: must be >= 100".into(),
            ));
        }
        Ok(())
    }
}

/// Integrate the linearized (frozen-Jacobian) function-space flow
/// u̇ = −(1/n)·H·(u − Y) on the support set and transport query predictions
/// through the cross-kernel, ẇ = −(1/n)·K·(u − Y). Returns the query
/// predictions at time `t`.
///
/// This is an independent numerical path to the closed-form adaptation: both
/// must agree for the linearized model.
pub fn linearized_flow_oracle(
    spec: &NetworkSpec,
    theta: &ParamVector,
    support_x: &[Vector],
    support_y: &[Vector],
    queries: &[Vector],
    t: f64,
    ode: OdeConfig,
) -> Result<Vec<Vector>> {
    ode.validate()?;
    if support_x.is_empty() {
        return Err(CoreError::InvalidSpec("flow oracle needs support points".into()));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(CoreError::InvalidConfig(alloc::format!(
            "t: must be finite and >= 0, got {t}"
        )));
    }
    let n = support_x.len();
    let dy = spec.output_dim();
    // Stacked Jacobians give both Gram blocks in one pass.
    let mut jsup = DenseMatrix::zeros(n * dy, spec.param_count());
    for (i, x) in support_x.iter().enumerate() {
        let jac = jacobian(spec, theta, x)?;
        for c in 0..dy {
            jsup.row_mut(i * dy + c).copy_from_slice(jac.row(c));
        }
    }
    let h = jsup.matmul(&jsup.transpose())?.symmetrized();
    let mut kq = DenseMatrix::zeros(queries.len() * dy, n * dy);
    for (j, x) in queries.iter().enumerate() {
        let jac = jacobian(spec, theta, x)?;
        let block = jac.matmul(&jsup.transpose())?;
        for c in 0..dy {
            kq.row_mut(j * dy + c).copy_from_slice(block.row(c));
        }
    }
    let (sup_out, _) = forward(spec, theta, support_x)?;
    let (query_out, _) = forward(spec, theta, queries)?;
    let mut u = stack(&sup_out, dy);
    let mut w = stack(&query_out, dy);
    let target = stack(support_y, dy);

    if t > 0.0 {
        let steps = ((t * ode.steps_per_unit as f64) as usize).max(1);
        let dt = t / steps as f64;
        let inv_n = 1.0 / n as f64;
        // u̇ = −(1/n)H(u−Y) is linear, so the RK4 stages only need
        // matrix-vector products with H and K.
        let deriv = |u: &Vector| -> Result<(Vector, Vector)> {
            let mut r = u.clone();
            r.add_scaled(-1.0, &target);
            let du = h.mul_vec(&r)?.scale(-inv_n);
            let dw = kq.mul_vec(&r)?.scale(-inv_n);
            Ok((du, dw))
        };
        for _ in 0..steps {
            let (k1u, k1w) = deriv(&u)?;
            let mut u2 = u.clone();
            u2.add_scaled(dt / 2.0, &k1u);
            let (k2u, k2w) = deriv(&u2)?;
            let mut u3 = u.clone();
            u3.add_scaled(dt / 2.0, &k2u);
            let (k3u, k3w) = deriv(&u3)?;
            let mut u4 = u.clone();
            u4.add_scaled(dt, &k3u);
            let (k4u, k4w) = deriv(&u4)?;
            u.add_scaled(dt / 6.0, &k1u);
            u.add_scaled(dt / 3.0, &k2u);
            u.add_scaled(dt / 3.0, &k3u);
            u.add_scaled(dt / 6.0, &k4u);
            w.add_scaled(dt / 6.0, &k1w);
            w.add_scaled(dt / 3.0, &k2w);
            w.add_scaled(dt / 3.0, &k3w);
            w.add_scaled(dt / 6.0, &k4w);
        }
    }
    Ok(unstack(&w, queries.len(), dy))
}

fn stack(vs: &[Vector], dy: usize) -> Vector {
    let mut out = Vector::zeros(vs.len() * dy);
    for (i, v) in vs.iter().enumerate() {
        for c in 0..dy {
            out[i * dy + c] = v[c];
        }
    }
    out
}

fn unstack(v: &Vector, n: usize, dy: usize) -> Vec<Vector> {
    (0..n)
        .map(|i| Vector::from_slice(&v.as_slice()[i * dy..(i + 1) * dy]))
        .collect()
}

/// Coordinate-wise central-difference gradient of a scalar objective.
/// Intended for small parameter counts (the acceptance checks stay below a
/// few thousand coordinates).
pub fn finite_diff_grad<F>(mut objective: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut buf = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let h = step * math::abs(point[i]).max(1.0);
        buf[i] = point[i] + h;
        let fp = objective(&buf);
        buf[i] = point[i] - h;
        let fm = objective(&buf);
        buf[i] = point[i];
        grad.push((fp - fm) / (2.0 * h));
    }
    grad
}

/// Learning-rate bound the depth theorems assume: α ≤ O(q·r) with
/// q = min(1/(L·s^L), L^{−1/(L+1)}), r = min(s^{−L}, s), s the largest layer
/// spectral norm. The O(·) constant is taken as 1; the sweep only uses this
/// to flag rows as in/out of regime.
pub fn alpha_regime_bound(spec: &NetworkSpec, theta: &ParamVector) -> f64 {
    let l = spec.hidden_layers() as f64;
    let s = spectral_norms(spec, theta)
        .into_iter()
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let s_l = math::exp(l * math::ln(s));
    let q = (1.0 / (l * s_l)).min(math::exp(-math::ln(l.max(1.0)) / (l + 1.0)));
    let r = (1.0 / s_l).min(s);
    q * r
}

/// One Taylor-gap sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorGapRow {
    pub hidden_layers: usize,
    pub conv: bool,
    pub seed: u64,
    pub alpha: f64,
    pub steps: usize,
    pub gap: f64,
    /// α is within the spectral-norm regime bound.
    pub in_regime: bool,
}

/// Gap |M_k − Ẽ(kα)| swept over seeds and inner learning rates for each
/// architecture.
pub fn taylor_gap_sweep(
    specs: &[NetworkSpec],
    dist: &TaskDistributionSpec,
    seeds: &[u64],
    alphas: &[f64],
    steps: usize,
    tasks_per_seed: usize,
    cfg: &MetaConfig,
) -> Result<Vec<TaylorGapRow>> {
    let mut rows = Vec::new();
    for spec in specs {
        let conv = spec
            .layers()
            .iter()
            .any(|l| matches!(l, crate::net::LayerSpec::Conv1d { .. }));
        for &seed in seeds {
            let theta = crate::net::init_params(spec, seed);
            let tasks = sample_tasks(dist, seed, tasks_per_seed)?;
            let bound = alpha_regime_bound(spec, &theta);
            for &alpha in alphas {
                let gap = taylor_gap(spec, &theta, &tasks, alpha, steps, cfg)?;
                rows.push(TaylorGapRow {
                    hidden_layers: spec.hidden_layers(),
                    conv,
                    seed,
                    alpha,
                    steps,
                    gap,
                    in_regime: alpha <= bound,
                });
            }
        }
    }
    Ok(rows)
}

/// One energy-gap sweep cell: |Ẽ(T) − Ē(T)| at fixed θ.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGapRow {
    pub seed: u64,
    pub t: f64,
    pub energy_regularized: f64,
    pub energy_closed_form: f64,
    pub gap: f64,
}

/// Sweep |Ẽ(T) − Ē(T)| over a time grid per seed. Both functionals estimate
/// expectations of the same per-task loss, so they are evaluated on a common
/// batch (query == support), which also pins the T = 0 gap at zero.
pub fn energy_gap_sweep(
    spec: &NetworkSpec,
    dist: &TaskDistributionSpec,
    seeds: &[u64],
    t_grid: &[f64],
    tasks_per_seed: usize,
    cfg: &MetaConfig,
) -> Result<Vec<EnergyGapRow>> {
    let mut rows = Vec::new();
    let unsplit = MetaConfig { rkhs1_split: false, ..cfg.clone() };
    for &seed in seeds {
        let theta = crate::net::init_params(spec, seed);
        let tasks: Vec<Task> = sample_tasks(dist, seed, tasks_per_seed)?
            .into_iter()
            .map(|t| Task {
                query_x: t.support_x.clone(),
                query_y: t.support_y.clone(),
                ..t
            })
            .collect();
        for &t in t_grid {
            let reg = meta_rkhs_1_objective(spec, &theta, &tasks, t, &unsplit)?;
            let closed = crate::adapt::meta_rkhs_2_objective(
                spec,
                &theta,
                &tasks,
                AdaptTime::Finite(t),
                cfg,
            )?;
            rows.push(EnergyGapRow {
                seed,
                t,
                energy_regularized: reg,
                energy_closed_form: closed,
                gap: math::abs(reg - closed),
            });
        }
    }
    Ok(rows)
}

/// True when `values` never decreases beyond `slack`.
pub fn is_nondecreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] >= w[0] - slack)
}

fn sample_tasks(dist: &TaskDistributionSpec, seed: u64, count: usize) -> Result<Vec<Task>> {
    (0..count)
        .map(|i| dist.sample(seed.wrapping_mul(1000).wrapping_add(i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::adapt_closed_form;
    use crate::net::init_params;
    use crate::ntk;
    use crate::rng::CounterRng;
    use crate::tasks::{SineSpec, TaskMeta};

    fn random_vec(rng: &mut CounterRng, n: usize) -> Vector {
        Vector::new((0..n).map(|_| rng.normal()).collect())
    }

    #[test]
    fn time_zero_returns_network_outputs_exactly() {
        let spec = NetworkSpec::dense(&[2, 6, 1]).unwrap();
        let theta = init_params(&spec, 1);
        let mut rng = CounterRng::new(2);
        let sup_x: Vec<Vector> = (0..3).map(|_| random_vec(&mut rng, 2)).collect();
        let sup_y: Vec<Vector> = (0..3).map(|_| random_vec(&mut rng, 1)).collect();
        let queries: Vec<Vector> = (0..4).map(|_| random_vec(&mut rng, 2)).collect();
        let preds = linearized_flow_oracle(
            &spec, &theta, &sup_x, &sup_y, &queries, 0.0, OdeConfig::default(),
        )
        .unwrap();
        let (outs, _) = forward(&spec, &theta, &queries).unwrap();
        assert_eq!(preds, outs);
    }

    #[test]
    fn scalar_case_matches_hand_formula() {
        // n = 1: u(t) = y + (u0 − y)·e^{−Θ(x,x)·t} (the 1/n factor is 1).
        let spec = NetworkSpec::dense(&[1, 5, 1]).unwrap();
        let theta = init_params(&spec, 3);
        let x = Vector::from_slice(&[0.4]);
        let y = Vector::from_slice(&[1.5]);
        let t = 0.8;
        let preds = linearized_flow_oracle(
            &spec,
            &theta,
            core::slice::from_ref(&x),
            core::slice::from_ref(&y),
            core::slice::from_ref(&x),
            t,
            OdeConfig::default(),
        )
        .unwrap();
        let (out, _) = forward(&spec, &theta, core::slice::from_ref(&x)).unwrap();
        let h = ntk::ntk_entry(&spec, &theta, &x, &x).unwrap()[(0, 0)];
        let expected = y[0] + (out[0][0] - y[0]) * math::exp(-h * t);
        assert!((preds[0][0] - expected).abs() < 1e-10, "{} vs {expected}", preds[0][0]);
    }

    #[test]
    fn oracle_agrees_with_closed_form() {
        let spec = NetworkSpec::dense(&[1, 12, 12, 1]).unwrap();
        let theta = init_params(&spec, 4);
        let sine = SineSpec::default();
        let task = crate::tasks::sample_sine_task(&sine, 9);
        let sup_x = &task.support_x[..5];
        let sup_y = &task.support_y[..5];
        let queries = &task.query_x[..6];
        let cfg = MetaConfig::default();
        for t in [0.5, 1.0, 5.0] {
            let ode = linearized_flow_oracle(
                &spec, &theta, sup_x, sup_y, queries, t, OdeConfig::default(),
            )
            .unwrap();
            let pred = adapt_closed_form(
                &spec, &theta, sup_x, sup_y, AdaptTime::Finite(t), &cfg,
            )
            .unwrap();
            for (q, o) in queries.iter().zip(ode.iter()) {
                let c = pred.predict(q).unwrap();
                let rel = (c[0] - o[0]).abs() / (1.0 + o[0].abs());
                assert!(rel < 1e-4, "t={t}: closed {} vs ode {}", c[0], o[0]);
            }
        }
    }

    #[test]
    fn rk4_step_halving_is_converged() {
        let spec = NetworkSpec::dense(&[1, 8, 1]).unwrap();
        let theta = init_params(&spec, 5);
        let task = crate::tasks::sample_sine_task(&SineSpec::default(), 11);
        let coarse = linearized_flow_oracle(
            &spec,
            &theta,
            &task.support_x,
            &task.support_y,
            &task.query_x,
            2.0,
            OdeConfig { steps_per_unit: 1000 },
        )
        .unwrap();
        let fine = linearized_flow_oracle(
            &spec,
            &theta,
            &task.support_x,
            &task.support_y,
            &task.query_x,
            2.0,
            OdeConfig { steps_per_unit: 2000 },
        )
        .unwrap();
        for (a, b) in coarse.iter().zip(fine.iter()) {
            assert!((a[0] - b[0]).abs() <= 1e-6 * (1.0 + b[0].abs()));
        }
    }

    #[test]
    fn finite_diff_grad_on_knowns() {
        let zero = finite_diff_grad(|_| 3.5, &[1.0, -2.0], 1e-5);
        assert!(zero.iter().all(|&g| g.abs() < 1e-9));
        let point = [0.3, -1.2, 2.0];
        let quad = finite_diff_grad(
            |p| 0.5 * p.iter().map(|x| x * x).sum::<f64>(),
            &point,
            1e-5,
        );
        for (g, p) in quad.iter().zip(point.iter()) {
            assert!((g - p).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_gap_zero_at_t0_and_monotone() {
        let spec = NetworkSpec::dense(&[1, 10, 1]).unwrap();
        let dist = TaskDistributionSpec::Sine(SineSpec {
            support_size: 5,
            query_size: 5,
            ..SineSpec::default()
        });
        let cfg = MetaConfig::default();
        let rows =
            energy_gap_sweep(&spec, &dist, &[1, 2], &[0.0, 0.1, 0.5, 1.0, 2.0], 2, &cfg)
                .unwrap();
        for seed in [1u64, 2] {
            let gaps: Vec<f64> = rows
                .iter()
                .filter(|r| r.seed == seed)
                .map(|r| r.gap)
                .collect();
            assert!(gaps[0] <= 1e-10, "T=0 gap {}", gaps[0]);
            assert!(is_nondecreasing(&gaps, 1e-12), "seed {seed}: {gaps:?}");
        }
    }

    #[test]
    fn taylor_sweep_k1_rows_vanish() {
        let spec = NetworkSpec::dense(&[1, 6, 1]).unwrap();
        let dist = TaskDistributionSpec::Sine(SineSpec {
            support_size: 4,
            query_size: 4,
            ..SineSpec::default()
        });
        let cfg = MetaConfig::default();
        let rows =
            taylor_gap_sweep(&[spec], &dist, &[1, 2], &[0.01, 0.05], 1, 2, &cfg).unwrap();
        for row in rows {
            assert!(row.gap <= 1e-8, "k=1 gap {}", row.gap);
        }
    }

    #[test]
    fn tasks_meta_is_recorded() {
        let dist = TaskDistributionSpec::Sine(SineSpec::default());
        let task = dist.sample(1).unwrap();
        assert!(matches!(task.meta, TaskMeta::Sine { .. }));
    }
}
