//! Subcommand implementations. Each writes CSV artifacts into the run's
//! output directory and prints one status line per check; a `false` return
//! means some asserted check failed (nonzero exit).

use std::path::Path;
use std::time::Instant;

use metarkhs_core::adapt::{adapt_closed_form, FrozenAdaptation};
use metarkhs_core::attack::{robust_accuracy, AttackConfig, ClosedFormTarget, NetTarget};
use metarkhs_core::expm::{expm_oracle, pade_expm, PadeOrder};
use metarkhs_core::linalg::{sym_eig_max, DenseMatrix};
use metarkhs_core::meta::{
    adapt_gradient_steps, encode_labels, meta_rkhs_1_grad, meta_rkhs_1_objective, AdaptTime,
    MetaConfig,
};
use metarkhs_core::net::{grad_loss, init_params, NetworkSpec};
use metarkhs_core::ntk::functional_grad_norm_sq;
use metarkhs_core::oracle::{
    energy_gap_sweep, finite_diff_grad, is_nondecreasing, taylor_gap_sweep,
};
use metarkhs_core::rng::CounterRng;
use metarkhs_core::tasks::{SineSpec, Task, TaskDistributionSpec};
use metarkhs_core::{LossKind, Vector};

use crate::config::{Algorithm, Experiment, RunConfig, TimeDto};
use crate::driver::{
    self, batch_loss_and_grad, evaluate_at, prepare_task, sample_eval_tasks, sample_train_batch,
    DriverError, Result,
};
use crate::io::{self, csv_num, CsvTable};
use crate::optim::Optimizer;

fn check_line(name: &str, pass: bool, detail: &str) {
    println!("{}: {name} ({detail})", if pass { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------------------
// train / evaluate
// ---------------------------------------------------------------------------

pub fn cmd_train(run: &RunConfig, out_dir: &Path) -> Result<bool> {
    let outcome = driver::train(run, out_dir)?;
    println!(
        "trained {} iterations ({} skipped); final loss {}; checkpoint {}",
        outcome.iterations_run,
        outcome.skipped_iterations,
        outcome.final_loss.map_or("n/a".into(), |l| format!("{l:.6}")),
        outcome.checkpoint_path.display()
    );
    Ok(true)
}

pub fn cmd_evaluate(run: &RunConfig, checkpoint: &Path, out_dir: &Path) -> Result<bool> {
    let ckpt = io::load_checkpoint(checkpoint).map_err(DriverError::Io)?;
    let hash = run.hash();
    let mut table = CsvTable::new(&["t", "metric", "mean", "stderr", "n_tasks", "config_hash"]);
    let grid: Vec<TimeDto> = if matches!(run.experiment, Experiment::AblationT) {
        run.ablation_t_grid.clone()
    } else {
        vec![run.meta.adapt_time.clone()]
    };
    for t_dto in &grid {
        let time = t_dto
            .to_core("ablation_t_grid")
            .map_err(|e| DriverError::Io(e.to_string()))?;
        let out = evaluate_at(run, &ckpt, time)?;
        let t_label = match t_dto {
            TimeDto::Finite(v) => csv_num(*v),
            TimeDto::Word(_) => "inf".to_string(),
        };
        println!(
            "t={t_label} {} = {:.6} ± {:.6} over {} tasks",
            out.metric.name(),
            out.mean,
            out.stderr,
            out.per_task.len()
        );
        table.push_row(&[
            t_label,
            out.metric.name().to_string(),
            csv_num(out.mean),
            csv_num(out.stderr),
            out.per_task.len().to_string(),
            hash.clone(),
        ]);
    }
    table
        .write(&out_dir.join("eval.csv"))
        .map_err(|e| DriverError::Io(e.to_string()))?;
    Ok(true)
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

pub fn cmd_gradcheck(run: &RunConfig, out_dir: &Path) -> Result<bool> {
    let hash = run.hash();
    let mut table =
        CsvTable::new(&["check", "detail", "value", "threshold", "pass", "config_hash"]);
    let mut all_pass = true;
    let mut record = |name: &str, detail: &str, value: f64, threshold: f64, asserted: bool| {
        let pass = !asserted || value <= threshold;
        if asserted {
            check_line(name, pass, &format!("{detail}: {value:.3e} vs {threshold:.0e}"));
        } else {
            println!("INFO: {name} ({detail}: {value:.3e}, not asserted)");
        }
        table.push_row(&[
            name.to_string(),
            detail.to_string(),
            csv_num(value),
            csv_num(threshold),
            if asserted { pass.to_string() } else { "diagnostic".to_string() },
            hash.clone(),
        ]);
        pass
    };

    let rel = |a: &[f64], b: &[f64]| -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den.max(1e-300)).sqrt()
    };

    // Reverse mode vs finite differences over 20 draws spanning depths and a
    // conv spec, both losses.
    let mut worst = 0.0f64;
    let mut draw_specs: Vec<(NetworkSpec, LossKind)> = Vec::new();
    for l in 1..=3 {
        let mut dims = vec![2usize];
        dims.extend(std::iter::repeat_n(6, l));
        dims.push(2);
        draw_specs.push((
            NetworkSpec::dense(&dims).map_err(DriverError::Core)?,
            if l % 2 == 0 { LossKind::CrossEntropy } else { LossKind::Squared },
        ));
    }
    draw_specs.push((
        NetworkSpec::conv1d_front(4, 1, 3, &[5], 2).map_err(DriverError::Core)?,
        LossKind::Squared,
    ));
    let mut rng = CounterRng::new(run.seed ^ 0x6c6c);
    let mut accepted = 0usize;
    while accepted < 20 {
        let (spec, kind) = &draw_specs[accepted % draw_specs.len()];
        let theta = init_params(spec, rng.next_u64());
        let n = 4;
        let xs: Vec<Vector> = (0..n)
            .map(|_| Vector::new((0..spec.input_dim()).map(|_| rng.normal()).collect()))
            .collect();
        // Finite differences are only meaningful away from ReLU kinks;
        // redraw when the probe radius could cross one.
        if metarkhs_core::net::activation_margin(spec, &theta, &xs)? < 1e-3 {
            continue;
        }
        let ys: Vec<Vector> = (0..n)
            .map(|_| match kind {
                LossKind::Squared => {
                    Vector::new((0..spec.output_dim()).map(|_| rng.normal()).collect())
                }
                LossKind::CrossEntropy => {
                    let mut y = Vector::zeros(spec.output_dim());
                    y[(rng.next_u64() as usize) % spec.output_dim()] = 1.0;
                    y
                }
            })
            .collect();
        let g = grad_loss(spec, &theta, &xs, &ys, *kind)?;
        let fd = finite_diff_grad(
            |p| {
                let point = metarkhs_core::net::ParamVector::from_vec(p.to_vec());
                metarkhs_core::net::batch_loss(spec, &point, &xs, &ys, *kind).expect("loss")
            },
            theta.as_slice(),
            1e-5,
        );
        worst = worst.max(rel(g.as_slice(), &fd));
        accepted += 1;
    }
    all_pass &= record("grad_vs_fd", "20 kink-free draws, dense L1-3 + conv", worst, 1e-5, true);

    // Theorem-2 norm identity residual on the same draws family.
    let mut worst_identity = 0.0f64;
    for draw in 0..8 {
        let (spec, kind) = &draw_specs[draw % draw_specs.len()];
        let theta = init_params(spec, rng.next_u64());
        let xs: Vec<Vector> = (0..4)
            .map(|_| Vector::new((0..spec.input_dim()).map(|_| rng.normal()).collect()))
            .collect();
        let ys: Vec<Vector> = (0..4)
            .map(|_| match kind {
                LossKind::Squared => {
                    Vector::new((0..spec.output_dim()).map(|_| rng.normal()).collect())
                }
                LossKind::CrossEntropy => {
                    let mut y = Vector::zeros(spec.output_dim());
                    y[(rng.next_u64() as usize) % spec.output_dim()] = 1.0;
                    y
                }
            })
            .collect();
        let kernel = functional_grad_norm_sq(spec, &theta, &xs, &ys, *kind)?;
        let g = grad_loss(spec, &theta, &xs, &ys, *kind)?;
        let param = g.dot(&g);
        worst_identity = worst_identity.max((kernel - param).abs() / param.max(1e-12));
    }
    all_pass &= record("kernel_norm_identity", "8 draws", worst_identity, 1e-8, true);

    // Meta-RKHS-I gradient vs scalar finite differences of the objective.
    let spec = NetworkSpec::dense(&[1, 6, 1]).map_err(DriverError::Core)?;
    let dist = TaskDistributionSpec::Sine(SineSpec {
        support_size: 4,
        query_size: 4,
        ..SineSpec::default()
    });
    let cfg = MetaConfig::default();
    let theta = init_params(&spec, run.seed);
    let tasks: Vec<Task> =
        (0..2).map(|i| dist.sample(run.seed + i).expect("sine sample")).collect();
    let alpha = 0.05;
    let g = meta_rkhs_1_grad(&spec, &theta, &tasks, alpha, &cfg)?;
    let fd = finite_diff_grad(
        |p| {
            let point = metarkhs_core::net::ParamVector::from_vec(p.to_vec());
            meta_rkhs_1_objective(&spec, &point, &tasks, alpha, &cfg).expect("objective")
        },
        theta.as_slice(),
        1e-5,
    );
    all_pass &= record("rkhs1_grad_vs_fd", "2 sine tasks", rel(g.as_slice(), &fd), 1e-4, true);

    // Meta-RKHS-II frozen-kernel gradient vs finite differences of the frozen
    // objective, plus the unfrozen-probe diagnostic.
    let time = AdaptTime::Finite(1.0);
    let task = &tasks[0];
    let frozen = FrozenAdaptation::build(&spec, &theta, task, time, &cfg)?;
    let g2 = frozen.grad_at(&spec, &theta, cfg.loss_kind)?;
    let fd_frozen = finite_diff_grad(
        |p| {
            let point = metarkhs_core::net::ParamVector::from_vec(p.to_vec());
            frozen.query_loss_at(&spec, &point, cfg.loss_kind).expect("frozen loss")
        },
        theta.as_slice(),
        1e-5,
    );
    all_pass &= record(
        "rkhs2_frozen_grad_vs_fd",
        "frozen kernel",
        rel(g2.as_slice(), &fd_frozen),
        1e-5,
        true,
    );
    let fd_full = finite_diff_grad(
        |p| {
            let point = metarkhs_core::net::ParamVector::from_vec(p.to_vec());
            metarkhs_core::adapt::meta_rkhs_2_objective(
                &spec,
                &point,
                std::slice::from_ref(task),
                time,
                &cfg,
            )
            .expect("objective")
        },
        theta.as_slice(),
        1e-5,
    );
    // The gap between the frozen-kernel gradient and the full derivative of
    // the objective is what stop_gradient_kernel ignores; measured, not
    // asserted.
    record(
        "rkhs2_stop_gradient_discrepancy",
        "frozen grad vs full fd",
        rel(g2.as_slice(), &fd_full),
        f64::INFINITY,
        false,
    );

    table
        .write(&out_dir.join("gradcheck.csv"))
        .map_err(|e| DriverError::Io(e.to_string()))?;
    Ok(all_pass)
}

// ---------------------------------------------------------------------------
// theorem-sweep
// ---------------------------------------------------------------------------

pub fn cmd_theorem_sweep(run: &RunConfig, out_dir: &Path) -> Result<bool> {
    let hash = run.hash();
    let cfg = run.meta_config().map_err(|e| DriverError::Io(e.to_string()))?;
    let dist = TaskDistributionSpec::Sine(SineSpec {
        support_size: 5,
        query_size: 5,
        ..SineSpec::default()
    });
    let mut all_pass = true;

    // Taylor gap: dense L ∈ {1,2,3} plus one conv front, 10 seeds,
    // α vs α/2 at k = 3, and the k = 1 identity rows.
    let specs = vec![
        NetworkSpec::dense(&[1, 12, 1]).map_err(DriverError::Core)?,
        NetworkSpec::dense(&[1, 12, 12, 1]).map_err(DriverError::Core)?,
        NetworkSpec::dense(&[1, 12, 12, 12, 1]).map_err(DriverError::Core)?,
        NetworkSpec::conv1d_front(1, 1, 1, &[12], 1).map_err(DriverError::Core)?,
    ];
    let seeds: Vec<u64> = (0..10).map(|i| run.seed * 100 + i).collect();
    let alpha = 0.04;
    let mut taylor = CsvTable::new(&[
        "sweep_name",
        "seed",
        "hidden_layers",
        "conv",
        "alpha",
        "k",
        "value",
        "in_regime",
        "pass",
        "config_hash",
    ]);
    let rows_k1 = taylor_gap_sweep(&specs, &dist, &seeds, &[alpha], 1, 2, &cfg)?;
    let mut k1_ok = true;
    for r in &rows_k1 {
        let pass = r.gap <= 1e-8;
        k1_ok &= pass;
        taylor.push_row(&[
            "taylor_gap".into(),
            r.seed.to_string(),
            r.hidden_layers.to_string(),
            r.conv.to_string(),
            csv_num(r.alpha),
            "1".into(),
            csv_num(r.gap),
            r.in_regime.to_string(),
            pass.to_string(),
            hash.clone(),
        ]);
    }
    check_line("taylor_gap_k1_identity", k1_ok, &format!("{} rows <= 1e-8", rows_k1.len()));
    all_pass &= k1_ok;

    let rows_k3 = taylor_gap_sweep(&specs, &dist, &seeds, &[alpha, alpha / 2.0], 3, 2, &cfg)?;
    for spec in &specs {
        let arch_rows: Vec<_> = rows_k3
            .iter()
            .filter(|r| {
                r.hidden_layers == spec.hidden_layers()
                    && r.conv
                        == spec
                            .layers()
                            .iter()
                            .any(|l| matches!(l, metarkhs_core::net::LayerSpec::Conv1d { .. }))
            })
            .collect();
        let mut wins = 0;
        let mut total = 0;
        for &seed in &seeds {
            let big = arch_rows.iter().find(|r| r.seed == seed && r.alpha == alpha);
            let small =
                arch_rows.iter().find(|r| r.seed == seed && r.alpha == alpha / 2.0);
            if let (Some(b), Some(s)) = (big, small) {
                total += 1;
                if s.gap <= b.gap {
                    wins += 1;
                }
            }
        }
        let pass = wins * 10 >= total * 8;
        check_line(
            "taylor_gap_alpha_trend",
            pass,
            &format!(
                "L={} conv={}: gap(a/2)<=gap(a) on {wins}/{total}",
                spec.hidden_layers(),
                spec.layers()
                    .iter()
                    .any(|l| matches!(l, metarkhs_core::net::LayerSpec::Conv1d { .. }))
            ),
        );
        all_pass &= pass;
    }
    for r in &rows_k3 {
        taylor.push_row(&[
            "taylor_gap".into(),
            r.seed.to_string(),
            r.hidden_layers.to_string(),
            r.conv.to_string(),
            csv_num(r.alpha),
            "3".into(),
            csv_num(r.gap),
            r.in_regime.to_string(),
            "trend".into(),
            hash.clone(),
        ]);
    }
    taylor
        .write(&out_dir.join("sweep_taylor.csv"))
        .map_err(|e| DriverError::Io(e.to_string()))?;

    // Energy gap |Ẽ(T) − Ē(T)|: non-decreasing over the grid on every seed.
    let spec = NetworkSpec::dense(&[1, 12, 1]).map_err(DriverError::Core)?;
    let t_grid = [0.0, 0.1, 0.5, 1.0, 2.0];
    let seeds: Vec<u64> = (0..5).map(|i| run.seed * 31 + i).collect();
    let rows = energy_gap_sweep(&spec, &dist, &seeds, &t_grid, 2, &cfg)?;
    let mut energy = CsvTable::new(&[
        "sweep_name",
        "seed",
        "t",
        "energy_regularized",
        "energy_closed_form",
        "value",
        "pass",
        "config_hash",
    ]);
    let mut monotone_ok = true;
    for &seed in &seeds {
        let gaps: Vec<f64> =
            rows.iter().filter(|r| r.seed == seed).map(|r| r.gap).collect();
        let pass = gaps.first().copied().unwrap_or(0.0) <= 1e-10
            && is_nondecreasing(&gaps, 1e-12);
        monotone_ok &= pass;
        for r in rows.iter().filter(|r| r.seed == seed) {
            energy.push_row(&[
                "energy_gap".into(),
                r.seed.to_string(),
                csv_num(r.t),
                csv_num(r.energy_regularized),
                csv_num(r.energy_closed_form),
                csv_num(r.gap),
                pass.to_string(),
                hash.clone(),
            ]);
        }
    }
    check_line(
        "energy_gap_monotone",
        monotone_ok,
        &format!("{} seeds, T grid {t_grid:?}", seeds.len()),
    );
    all_pass &= monotone_ok;
    energy
        .write(&out_dir.join("sweep_energy.csv"))
        .map_err(|e| DriverError::Io(e.to_string()))?;
    Ok(all_pass)
}

// ---------------------------------------------------------------------------
// attack-sweep
// ---------------------------------------------------------------------------

pub fn cmd_attack_sweep(
    run: &RunConfig,
    checkpoint: Option<&Path>,
    out_dir: &Path,
) -> Result<bool> {
    let spec = run.network_spec()?;
    let cfg = run.meta_config().map_err(|e| DriverError::Io(e.to_string()))?;
    let theta = match checkpoint {
        Some(path) => {
            let ckpt = io::load_checkpoint(path).map_err(DriverError::Io)?;
            if ckpt.spec != spec {
                return Err(DriverError::Io(
                    "checkpoint network does not match the configured network".into(),
                ));
            }
            ckpt.params
        }
        None => init_params(&spec, run.seed),
    };
    let classes = run.classes().ok_or_else(|| {
        DriverError::Io("attack-sweep needs a classification task section".into())
    })?;
    let dist = run.task_distribution()?;
    let tasks = sample_eval_tasks(&dist, run.seed, run.eval_tasks)?;
    let hash = run.hash();
    let mut table = CsvTable::new(&[
        "epsilon",
        "algorithm",
        "clean_acc",
        "robust_acc",
        "n_tasks",
        "seed",
        "config_hash",
    ]);
    let mut robust_by_eps = Vec::new();
    let mut clean_at_zero: Option<(f64, f64)> = None;
    for &eps in &run.attack.epsilon_grid {
        let attack = run.attack_config(eps);
        let report = run_attack(run, &spec, &theta, &cfg, classes, &tasks, &attack)?;
        println!(
            "eps={eps}: clean {:.4} robust {:.4} over {} queries",
            report.clean_accuracy, report.robust_accuracy, report.n_queries
        );
        table.push_row(&[
            csv_num(eps),
            run.algorithm.name().to_string(),
            csv_num(report.clean_accuracy),
            csv_num(report.robust_accuracy),
            report.n_tasks.to_string(),
            run.seed.to_string(),
            hash.clone(),
        ]);
        if eps == 0.0 {
            clean_at_zero = Some((report.clean_accuracy, report.robust_accuracy));
        }
        robust_by_eps.push(report.robust_accuracy);
    }
    table
        .write(&out_dir.join("attack.csv"))
        .map_err(|e| DriverError::Io(e.to_string()))?;

    let mut all_pass = true;
    if let Some((clean, robust)) = clean_at_zero {
        let pass = (clean - robust).abs() < 1e-12;
        check_line("attack_eps0_equals_clean", pass, &format!("{clean} vs {robust}"));
        all_pass &= pass;
    }
    if robust_by_eps.len() >= 2 {
        let pairs = robust_by_eps.len() - 1;
        let ok = robust_by_eps
            .windows(2)
            .filter(|w| w[1] <= w[0] + 1e-12)
            .count();
        let pass = ok * 100 >= pairs * 95;
        check_line(
            "attack_monotone_in_eps",
            pass,
            &format!("non-increasing on {ok}/{pairs} adjacent pairs"),
        );
        all_pass &= pass;
    }
    Ok(all_pass)
}

fn run_attack(
    run: &RunConfig,
    spec: &NetworkSpec,
    theta: &metarkhs_core::net::ParamVector,
    cfg: &MetaConfig,
    classes: usize,
    tasks: &[Task],
    attack: &AttackConfig,
) -> Result<metarkhs_core::attack::RobustReport> {
    let report = match run.algorithm {
        Algorithm::MetaRkhs2 => robust_accuracy(
            |task: &Task| {
                let enc = encode_labels(&task.support_labels(), classes)?;
                let predictor = adapt_closed_form(
                    spec, theta, &task.support_x, &enc, cfg.adapt_time, cfg,
                )?;
                Ok(ClosedFormTarget {
                    predictor,
                    loss: cfg.loss_kind,
                    freeze_kernel_term: run.attack.freeze_kernel_term,
                })
            },
            |label| Ok(encode_labels(&[label], classes)?.remove(0)),
            tasks,
            attack,
        )?,
        _ => robust_accuracy(
            |task: &Task| {
                let ys = metarkhs_core::meta::one_hot(&task.support_labels(), classes)?;
                let (phi, _) = adapt_gradient_steps(
                    spec,
                    theta,
                    &task.support_x,
                    &ys,
                    run.test_adapt_lr,
                    run.test_adapt_steps,
                    cfg.loss_kind,
                )?;
                Ok(NetTarget { spec: spec.clone(), theta: phi, loss: cfg.loss_kind })
            },
            |label| Ok(metarkhs_core::meta::one_hot(&[label], classes)?.remove(0)),
            tasks,
            attack,
        )?,
    };
    Ok(report)
}

// ---------------------------------------------------------------------------
// timing
// ---------------------------------------------------------------------------

pub fn cmd_timing(run: &RunConfig, out_dir: &Path) -> Result<bool> {
    let hash = run.hash();
    let mut table =
        CsvTable::new(&["measurement", "algorithm", "n", "iterations", "mean_ms", "config_hash"]);
    let mut all_pass = true;

    // Per-iteration meta-gradient cost at matched settings, k = 5 for the
    // iterative baselines.
    let dist = TaskDistributionSpec::Sine(SineSpec {
        support_size: 10,
        query_size: 10,
        ..SineSpec::default()
    });
    let spec = NetworkSpec::dense(&[1, 32, 1]).map_err(DriverError::Core)?;
    let iters = 50usize;
    let batch = 4usize;
    let mean_ms = |algorithm: Algorithm, cfg: &MetaConfig| -> Result<f64> {
        let mut theta = init_params(&spec, run.seed);
        let mut opt = Optimizer::new(run.optimizer, cfg.meta_lr, theta.len());
        // One warmup iteration outside the timed region.
        let warm = sample_train_batch(&dist, run.seed, 0, batch)?;
        let _ = batch_loss_and_grad(&spec, &theta, &warm, algorithm, cfg, cfg.inner_lr, 1)?;
        let mut total = 0.0;
        for iter in 0..iters {
            let tasks = sample_train_batch(&dist, run.seed, iter as u64 + 1, batch)?;
            let start = Instant::now();
            let (_, grad) =
                batch_loss_and_grad(&spec, &theta, &tasks, algorithm, cfg, cfg.inner_lr, 1)?;
            opt.step(&mut theta, grad.as_slice());
            total += start.elapsed().as_secs_f64() * 1e3;
        }
        Ok(total / iters as f64)
    };

    let base = run.meta_config().map_err(|e| DriverError::Io(e.to_string()))?;
    let cfg_k1 = MetaConfig { inner_steps: 1, ..base.clone() };
    let cfg_k5 = MetaConfig { inner_steps: 5, ..base.clone() };
    let rkhs1 = mean_ms(Algorithm::MetaRkhs1, &cfg_k1)?;
    let fomaml5 = mean_ms(Algorithm::Fomaml, &cfg_k5)?;
    let reptile5 = mean_ms(Algorithm::Reptile, &cfg_k5)?;
    let reptile1 = mean_ms(Algorithm::Reptile, &cfg_k1)?;
    let maml5 = mean_ms(Algorithm::Maml, &cfg_k5)?;
    for (name, n, ms) in [
        ("meta-rkhs-1", 10, rkhs1),
        ("fomaml_k5", 10, fomaml5),
        ("reptile_k5", 10, reptile5),
        ("reptile_k1", 10, reptile1),
        ("maml_k5", 10, maml5),
    ] {
        table.push_row(&[
            "iteration".into(),
            name.into(),
            n.to_string(),
            iters.to_string(),
            csv_num(ms),
            hash.clone(),
        ]);
    }
    let pass_fomaml = rkhs1 <= 0.8 * fomaml5;
    let pass_reptile = rkhs1 <= 0.8 * reptile5;
    check_line(
        "iteration_time_vs_fomaml_k5",
        pass_fomaml,
        &format!("{rkhs1:.3} ms vs {fomaml5:.3} ms"),
    );
    check_line(
        "iteration_time_vs_reptile_k5",
        pass_reptile,
        &format!("{rkhs1:.3} ms vs {reptile5:.3} ms"),
    );
    println!(
        "INFO: reptile_k1 {reptile1:.3} ms vs meta-rkhs-1 {rkhs1:.3} ms (comparable within 2x: {})",
        rkhs1 <= 2.0 * reptile1 && reptile1 <= 2.0 * rkhs1
    );
    all_pass &= pass_fomaml && pass_reptile;

    // Closed-form solve-phase scaling: doubling the support size from 32 to
    // 64 should grow the kernel build super-linearly (4x to 16x), the n³
    // solve/exponential being the point.
    let small_spec = NetworkSpec::dense(&[1, 8, 1]).map_err(DriverError::Core)?;
    let theta = init_params(&small_spec, run.seed);
    let cfg = MetaConfig { adapt_time: AdaptTime::Finite(5.0), ..base.clone() };
    let solve_ms = |n: usize| -> Result<f64> {
        let sine = SineSpec { support_size: n, query_size: 1, ..SineSpec::default() };
        let mut total = 0.0;
        let repeats = 15;
        for s in 0..repeats {
            let task = metarkhs_core::tasks::sample_sine_task(&sine, run.seed + s);
            let start = Instant::now();
            let predictor = adapt_closed_form(
                &small_spec,
                &theta,
                &task.support_x,
                &task.support_y,
                cfg.adapt_time,
                &cfg,
            )?;
            total += start.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(&predictor);
        }
        Ok(total / repeats as f64)
    };
    let t32 = solve_ms(32)?;
    let t64 = solve_ms(64)?;
    let factor = t64 / t32;
    let pass_scaling = (4.0..=16.0).contains(&factor);
    check_line(
        "solve_phase_scaling_n32_to_n64",
        pass_scaling,
        &format!("{t32:.3} ms -> {t64:.3} ms (factor {factor:.2})"),
    );
    all_pass &= pass_scaling;
    for (n, ms) in [(32, t32), (64, t64)] {
        table.push_row(&[
            "solve_phase".into(),
            "meta-rkhs-2".into(),
            n.to_string(),
            "15".into(),
            csv_num(ms),
            hash.clone(),
        ]);
    }

    // Single-task smoke bound.
    let smoke_dist = TaskDistributionSpec::Sine(SineSpec {
        support_size: 1,
        query_size: 1,
        ..SineSpec::default()
    });
    let smoke_task = [smoke_dist.sample(run.seed).map_err(DriverError::Core)?];
    let smoke_tasks: Vec<Task> = smoke_task
        .iter()
        .map(|t| prepare_task(t, run.algorithm, None, 1.0))
        .collect::<Result<_>>()?;
    let start = Instant::now();
    let _ = batch_loss_and_grad(
        &spec, &init_params(&spec, 0), &smoke_tasks, run.algorithm, &base, base.inner_lr, 1,
    )?;
    let smoke_ms = start.elapsed().as_secs_f64() * 1e3;
    let pass_smoke = smoke_ms < 1000.0;
    check_line("single_task_smoke_under_1s", pass_smoke, &format!("{smoke_ms:.3} ms"));
    all_pass &= pass_smoke;
    table.push_row(&[
        "smoke".into(),
        run.algorithm.name().to_string(),
        "1".into(),
        "1".into(),
        csv_num(smoke_ms),
        hash.clone(),
    ]);

    table
        .write(&out_dir.join("timing.csv"))
        .map_err(|e| DriverError::Io(e.to_string()))?;
    Ok(all_pass)
}

// ---------------------------------------------------------------------------
// expm-check
// ---------------------------------------------------------------------------

pub fn cmd_expm_check(run: &RunConfig, out_dir: &Path) -> Result<bool> {
    let hash = run.hash();
    let mut table = CsvTable::new(&["check", "input", "value", "threshold", "pass", "config_hash"]);
    let mut all_pass = true;
    let mut record = |name: &str, input: String, value: f64, threshold: f64| -> bool {
        let pass = value <= threshold;
        table.push_row(&[
            name.to_string(),
            input,
            csv_num(value),
            csv_num(threshold),
            pass.to_string(),
            hash.clone(),
        ]);
        pass
    };

    // Scalar Padé approximants match their rational closed forms exactly.
    let mut scalar_err = 0.0f64;
    for x in [-0.1, 0.3, -0.7, 1.1] {
        let a = DenseMatrix::from_rows(&[&[x]]).map_err(DriverError::Core)?;
        let p1 = pade_expm(&a, PadeOrder::One)?[(0, 0)];
        let want1 = (1.0 + x / 2.0) / (1.0 - x / 2.0);
        let p2 = pade_expm(&a, PadeOrder::Two)?[(0, 0)];
        let want2 = (1.0 + x / 2.0 + x * x / 12.0) / (1.0 - x / 2.0 + x * x / 12.0);
        scalar_err = scalar_err.max((p1 - want1).abs()).max((p2 - want2).abs());
    }
    let ok = record("pade_scalar_formulas", "x in {-0.1,0.3,-0.7,1.1}".into(), scalar_err, 1e-15);
    check_line("pade_scalar_formulas", ok, &format!("max err {scalar_err:.3e}"));
    all_pass &= ok;

    // Oracle vs the scalar exponential across |a| ≤ 100.
    let mut oracle_err = 0.0f64;
    for x in [-100.0, -30.0, -3.0, -0.5, 0.5, 3.0, 30.0, 100.0] {
        let a = DenseMatrix::from_rows(&[&[x]]).map_err(DriverError::Core)?;
        let got = expm_oracle(&a)?[(0, 0)];
        let want = f64::exp(x);
        oracle_err = oracle_err.max(((got - want) / want).abs());
    }
    let ok = record("oracle_vs_scalar_exp", "|a| <= 100".into(), oracle_err, 1e-10);
    check_line("oracle_vs_scalar_exp", ok, &format!("max rel err {oracle_err:.3e}"));
    all_pass &= ok;

    // e^{−tH} is a symmetric contraction for PSD H at both orders.
    let mut rng = CounterRng::new(run.seed ^ 0xe594);
    let g = DenseMatrix::from_fn(6, 6, |_, _| rng.normal());
    let h = g.matmul(&g.transpose()).map_err(DriverError::Core)?.symmetrized();
    let mut worst_rho: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    for t in [0.1, 1.0, 10.0] {
        for order in [PadeOrder::One, PadeOrder::Two] {
            let m = metarkhs_core::expm::expm_pade_scaled(&h.scale(-t), order)?;
            worst_sym = worst_sym.max(m.symmetry_gap());
            worst_rho = worst_rho.max(sym_eig_max(&m.symmetrized(), 300, 1e-12));
        }
    }
    let ok1 = record("psd_contraction_radius", "6x6 PSD, t in {0.1,1,10}".into(), worst_rho, 1.0 + 1e-9);
    let ok2 = record("psd_exponent_symmetry", "6x6 PSD".into(), worst_sym, 1e-9);
    check_line("psd_contraction", ok1 && ok2, &format!("rho {worst_rho:.12}, sym {worst_sym:.3e}"));
    all_pass &= ok1 && ok2;

    // Oracle inverse pairing on a moderate-norm matrix.
    let a = DenseMatrix::from_fn(5, 5, |_, _| 0.4 * rng.normal());
    let e = expm_oracle(&a)?;
    let einv = expm_oracle(&a.scale(-1.0))?;
    let prod = e.matmul(&einv).map_err(DriverError::Core)?;
    let mut pairing = 0.0f64;
    for i in 0..5 {
        for j in 0..5 {
            let want = if i == j { 1.0 } else { 0.0 };
            pairing = pairing.max((prod[(i, j)] - want).abs());
        }
    }
    let ok = record("oracle_inverse_pairing", "5x5 random".into(), pairing, 1e-8);
    check_line("oracle_inverse_pairing", ok, &format!("max err {pairing:.3e}"));
    all_pass &= ok;

    table
        .write(&out_dir.join("expm.csv"))
        .map_err(|e| DriverError::Io(e.to_string()))?;
    Ok(all_pass)
}
