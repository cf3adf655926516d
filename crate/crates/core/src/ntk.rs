//! Empirical NTK entries and Gram matrices at fixed parameters, the RKHS
//! functional-gradient norm, and the RBF comparison kernel.
//!
//! The kernel is Θ(x₁, x₂) = J(x₁)·J(x₂)ᵀ with J the parameter Jacobian, so a
//! multi-output network has a d_y × d_y matrix-valued kernel. Gram matrices
//! are laid out in sample-major blocks. The scalar variants sum the Jacobian
//! products over output dimensions (the flattened-output construction used for
//! kernel classification).

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::linalg::{sym_eig_min_est, DenseMatrix, Vector};
use crate::math;
use crate::net::{
    self, jacobian,sample_cotangent, LossKind, NetworkSpec, ParamVector,
};

/// Kernel matrix over a sample set, symmetrized exactly.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    matrix: DenseMatrix,
    n: usize,
    block: usize,
}

impl GramMatrix {
    fn new(matrix: DenseMatrix, n: usize, block: usize) -> Self {
        debug_assert_eq!(matrix.rows(), n * block);
        let matrix = matrix.symmetrized();
        Self { matrix, n, block }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Rows per sample block (d_y for the full kernel, 1 for scalar kernels).
    pub fn block(&self) -> usize {
        self.block
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Power-iteration estimate of the smallest eigenvalue; PSD inputs should
    /// come out ≥ −1e−8.
    pub fn min_eig_est(&self) -> f64 {
        sym_eig_min_est(&self.matrix, 200)
    }
}

/// Θ(x₁, x₂) = J(x₁)·J(x₂)ᵀ, a d_y × d_y matrix.
pub fn ntk_entry(
    spec: &NetworkSpec,
    theta: &ParamVector,
    x1: &Vector,
    x2: &Vector,
) -> Result<DenseMatrix> {
    let j1 = jacobian(spec, theta, x1)?;
    let j2 = jacobian(spec, theta, x2)?;
    j1.matmul(&j2.transpose())
}

fn support_jacobians(
    spec: &NetworkSpec,
    theta: &ParamVector,
    xs: &[Vector],
) -> Result<Vec<DenseMatrix>> {
    xs.iter().map(|x| jacobian(spec, theta, x)).collect()
}

fn require_nonempty(xs: &[Vector]) -> Result<()> {
    if xs.is_empty() {
        return Err(CoreError::InvalidSpec("empty sample batch".into()));
    }
    Ok(())
}

/// Full matrix-valued Gram over a batch: (n·d_y) × (n·d_y), sample-major
/// blocks, exactly symmetrized.
pub fn gram(spec: &NetworkSpec, theta: &ParamVector, xs: &[Vector]) -> Result<GramMatrix> {
    require_nonempty(xs)?;
    let jacs = support_jacobians(spec, theta, xs)?;
    let n = xs.len();
    let dy = spec.output_dim();
    let mut h = DenseMatrix::zeros(n * dy, n * dy);
    for i in 0..n {
        for j in i..n {
            let block = jacs[i].matmul(&jacs[j].transpose())?;
            for a in 0..dy {
                for b in 0..dy {
                    let v = block[(a, b)];
                    h[(i * dy + a, j * dy + b)] = v;
                    h[(j * dy + b, i * dy + a)] = v;
                }
            }
        }
    }
    Ok(GramMatrix::new(h, n, dy))
}

/// Scalar Gram: entries are the Jacobian products summed over output
/// dimensions, Σ_c J_c(x_i)·J_c(x_j); an n × n matrix.
pub fn scalar_gram(spec: &NetworkSpec, theta: &ParamVector, xs: &[Vector]) -> Result<GramMatrix> {
    require_nonempty(xs)?;
    let jacs = support_jacobians(spec, theta, xs)?;
    let n = xs.len();
    let dy = spec.output_dim();
    let mut h = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let block = jacs[i].matmul(&jacs[j].transpose())?;
            let v: f64 = (0..dy).map(|c| block[(c, c)]).sum();
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(GramMatrix::new(h, n, 1))
}

/// Cross kernel H(x, X): d_y × (n·d_y), one row-block against each support
/// sample.
pub fn cross_gram(
    spec: &NetworkSpec,
    theta: &ParamVector,
    x: &Vector,
    xs: &[Vector],
) -> Result<DenseMatrix> {
    require_nonempty(xs)?;
    let jx = jacobian(spec, theta, x)?;
    let dy = spec.output_dim();
    let mut out = DenseMatrix::zeros(dy, xs.len() * dy);
    for (i, xi) in xs.iter().enumerate() {
        let ji = jacobian(spec, theta, xi)?;
        let block = jx.matmul(&ji.transpose())?;
        for a in 0..dy {
            for b in 0..dy {
                out[(a, i * dy + b)] = block[(a, b)];
            }
        }
    }
    Ok(out)
}

/// Scalar cross kernel: length-n vector of trace-summed entries.
pub fn scalar_cross(
    spec: &NetworkSpec,
    theta: &ParamVector,
    x: &Vector,
    xs: &[Vector],
) -> Result<Vector> {
    require_nonempty(xs)?;
    let jx = jacobian(spec, theta, x)?;
    let dy = spec.output_dim();
    let mut out = Vector::zeros(xs.len());
    for (i, xi) in xs.iter().enumerate() {
        let ji = jacobian(spec, theta, xi)?;
        let block = jx.matmul(&ji.transpose())?;
        out[i] = (0..dy).map(|c| block[(c, c)]).sum();
    }
    Ok(out)
}

/// Squared norm of the functional gradient of the empirical loss in the
/// NTK-induced RKHS, computed purely through kernel evaluations:
///
/// `(1/n²) Σ_{i,j} c_iᵀ Θ(x_i, x_j) c_j` with `c_i = ∂C(f(x_i), y_i)/∂f(x_i)`.
///
/// Equals ‖∇_θ L‖² (the reverse-mode route), which is what the identity tests
/// check.
pub fn functional_grad_norm_sq(
    spec: &NetworkSpec,
    theta: &ParamVector,
    xs: &[Vector],
    ys: &[Vector],
    kind: LossKind,
) -> Result<f64> {
    functional_grad_inner(spec, theta, (xs, ys), (xs, ys), kind)
}

/// RKHS inner product ⟨∇_f L(·, D_a), ∇_f L(·, D_b)⟩ between the functional
/// gradients of the empirical losses on two batches.
pub fn functional_grad_inner(
    spec: &NetworkSpec,
    theta: &ParamVector,
    (xs_a, ys_a): (&[Vector], &[Vector]),
    (xs_b, ys_b): (&[Vector], &[Vector]),
    kind: LossKind,
) -> Result<f64> {
    require_nonempty(xs_a)?;
    require_nonempty(xs_b)?;
    let cots = |xs: &[Vector], ys: &[Vector]| -> Result<(Vec<DenseMatrix>, Vec<Vec<f64>>)> {
        let (outs, _) = net::forward(spec, theta, xs)?;
        let jacs = support_jacobians(spec, theta, xs)?;
        let cs = outs
            .iter()
            .zip(ys.iter())
            .map(|(f, y)| sample_cotangent(f.as_slice(), y.as_slice(), kind))
            .collect();
        Ok((jacs, cs))
    };
    let (jacs_a, cs_a) = cots(xs_a, ys_a)?;
    let (jacs_b, cs_b) = cots(xs_b, ys_b)?;
    let mut total = 0.0;
    for (ja, ca) in jacs_a.iter().zip(cs_a.iter()) {
        for (jb, cb) in jacs_b.iter().zip(cs_b.iter()) {
            let theta_ij = ja.matmul(&jb.transpose())?;
            for (a, &cai) in ca.iter().enumerate() {
                for (b, &cbj) in cb.iter().enumerate() {
                    total += cai * theta_ij[(a, b)] * cbj;
                }
            }
        }
    }
    Ok(total / (xs_a.len() as f64 * xs_b.len() as f64))
}

// ---------------------------------------------------------------------------
// RBF comparison kernel
// ---------------------------------------------------------------------------

/// Gaussian kernel k(x₁, x₂) = exp(−‖x₁ − x₂‖² / (2·bandwidth²)).
pub fn rbf_kernel(x1: &Vector, x2: &Vector, bandwidth: f64) -> f64 {
    let d2: f64 = x1
        .as_slice()
        .iter()
        .zip(x2.as_slice().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    math::exp(-d2 / (2.0 * bandwidth * bandwidth))
}

/// RBF Gram matrix; drop-in scalar-kernel substitute for the NTK.
pub fn rbf_gram(xs: &[Vector], bandwidth: f64) -> Result<GramMatrix> {
    require_nonempty(xs)?;
    if !(bandwidth > 0.0) {
        return Err(CoreError::InvalidConfig(alloc::format!(
            "bandwidth: must be > 0, got {bandwidth}"
        )));
    }
    let n = xs.len();
    let mut h = DenseMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let v = rbf_kernel(&xs[i], &xs[j], bandwidth);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(GramMatrix::new(h, n, 1))
}

/// RBF cross-kernel row against a support set.
pub fn rbf_cross(x: &Vector, xs: &[Vector], bandwidth: f64) -> Vector {
    Vector::new(xs.iter().map(|xi| rbf_kernel(x, xi, bandwidth)).collect())
}

/// Median heuristic: median pairwise distance of the batch (1.0 for fewer
/// than two points).
pub fn median_bandwidth(xs: &[Vector]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 1.0;
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(xs[i].sub(&xs[j]).norm2());
        }
    }
    dists.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let m = dists[dists.len() / 2];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // index-coupled finite-difference loops
mod tests {
    use super::*;
    use crate::net::{grad_loss, init_params};
    use crate::rng::CounterRng;

    fn random_batch(rng: &mut CounterRng, n: usize, dim: usize) -> Vec<Vector> {
        (0..n)
            .map(|_| Vector::new((0..dim).map(|_| rng.normal()).collect()))
            .collect()
    }

    #[test]
    fn entry_self_is_symmetric_psd() {
        let spec = NetworkSpec::dense(&[3, 8, 2]).unwrap();
        let theta = init_params(&spec, 1);
        let x = Vector::from_slice(&[0.3, -0.7, 1.1]);
        let t = ntk_entry(&spec, &theta, &x, &x).unwrap();
        assert!(t.symmetry_gap() < 1e-12);
        // A 2x2 Gram of Jacobian rows: diagonal nonnegative, det nonnegative.
        assert!(t[(0, 0)] >= 0.0 && t[(1, 1)] >= 0.0);
        assert!(t[(0, 0)] * t[(1, 1)] - t[(0, 1)] * t[(1, 0)] >= -1e-10);
    }

    #[test]
    fn entry_transpose_symmetry() {
        let spec = NetworkSpec::dense(&[2, 6, 3]).unwrap();
        let theta = init_params(&spec, 2);
        let x1 = Vector::from_slice(&[0.5, -0.2]);
        let x2 = Vector::from_slice(&[-1.0, 0.8]);
        let t12 = ntk_entry(&spec, &theta, &x1, &x2).unwrap();
        let t21 = ntk_entry(&spec, &theta, &x2, &x1).unwrap();
        assert_eq!(t12, t21.transpose());
    }

    #[test]
    fn entry_passthrough_net_matches_hand_formula() {
        // Hidden layer fixed to the identity map and inputs kept in the
        // positive orthant, so every ReLU is active and
        // Θ(x1, x2) = (1 + x1·x2) · (I + WᵀW) by direct differentiation.
        let d = 3;
        let dy = 2;
        let spec = NetworkSpec::dense(&[d, d, dy]).unwrap();
        let mut theta = ParamVector::zeros(spec.param_count());
        let ranges = spec.param_ranges();
        for i in 0..d {
            theta.as_mut_slice()[ranges[0].weights.clone()][i * d + i] = 1.0;
        }
        let w = [[0.4, -0.3], [0.2, 0.9], [-0.5, 0.1]];
        for i in 0..d {
            for c in 0..dy {
                theta.as_mut_slice()[ranges[1].weights.clone()][i * dy + c] = w[i][c];
            }
        }
        let x1 = Vector::from_slice(&[0.7, 1.3, 0.4]);
        let x2 = Vector::from_slice(&[0.2, 0.9, 1.5]);
        let t = ntk_entry(&spec, &theta, &x1, &x2).unwrap();
        let x_dot = x1.dot(&x2);
        for a in 0..dy {
            for b in 0..dy {
                let wtw: f64 = (0..d).map(|i| w[i][a] * w[i][b]).sum();
                let expected = (1.0 + x_dot) * (if a == b { 1.0 } else { 0.0 } + wtw);
                assert!(
                    (t[(a, b)] - expected).abs() < 1e-12,
                    "({a},{b}): {} vs {expected}",
                    t[(a, b)]
                );
            }
        }
    }

    #[test]
    fn gram_single_sample_equals_entry() {
        let spec = NetworkSpec::dense(&[2, 5, 2]).unwrap();
        let theta = init_params(&spec, 3);
        let x = Vector::from_slice(&[0.4, -1.2]);
        let g = gram(&spec, &theta, &[x.clone()]).unwrap();
        let e = ntk_entry(&spec, &theta, &x, &x).unwrap().symmetrized();
        for a in 0..2 {
            for b in 0..2 {
                assert!((g.matrix()[(a, b)] - e[(a, b)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_duplicated_sample_is_rank_deficient() {
        let spec = NetworkSpec::dense(&[2, 5, 1]).unwrap();
        let theta = init_params(&spec, 4);
        let x = Vector::from_slice(&[0.4, -1.2]);
        let g = gram(&spec, &theta, &[x.clone(), x]).unwrap();
        let m = g.matrix();
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        assert!(det.abs() <= 1e-12);
    }

    #[test]
    fn gram_matches_entrywise_recomputation() {
        let spec = NetworkSpec::dense(&[3, 7, 1]).unwrap();
        let theta = init_params(&spec, 5);
        let mut rng = CounterRng::new(50);
        let xs = random_batch(&mut rng, 6, 3);
        let g = gram(&spec, &theta, &xs).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let e = ntk_entry(&spec, &theta, &xs[i], &xs[j]).unwrap();
                assert!((g.matrix()[(i, j)] - e[(0, 0)]).abs() < 1e-12);
            }
        }
        assert_eq!(g.matrix().symmetry_gap(), 0.0);
        assert!(g.min_eig_est() >= -1e-8);
    }

    #[test]
    fn cross_gram_consistent_with_gram_rows() {
        let spec = NetworkSpec::dense(&[2, 6, 2]).unwrap();
        let theta = init_params(&spec, 6);
        let mut rng = CounterRng::new(51);
        let xs = random_batch(&mut rng, 4, 2);
        let g = gram(&spec, &theta, &xs).unwrap();
        let row = cross_gram(&spec, &theta, &xs[2], &xs).unwrap();
        // Unsymmetrized cross row vs symmetrized gram block: tolerance-level.
        for a in 0..2 {
            for col in 0..8 {
                assert!((row[(a, col)] - g.matrix()[(2 * 2 + a, col)]).abs() < 1e-9);
            }
        }
        let single = cross_gram(&spec, &theta, &xs[0], &xs[..1]).unwrap();
        let e = ntk_entry(&spec, &theta, &xs[0], &xs[0]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((single[(a, b)] - e[(a, b)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scalar_gram_is_block_trace() {
        let spec = NetworkSpec::dense(&[2, 5, 3]).unwrap();
        let theta = init_params(&spec, 7);
        let mut rng = CounterRng::new(52);
        let xs = random_batch(&mut rng, 4, 2);
        let full = gram(&spec, &theta, &xs).unwrap();
        let scalar = scalar_gram(&spec, &theta, &xs).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let tr: f64 = (0..3).map(|c| full.matrix()[(i * 3 + c, j * 3 + c)]).sum();
                assert!((scalar.matrix()[(i, j)] - tr).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn grad_norm_zero_residual_is_zero() {
        let spec = NetworkSpec::dense(&[2, 4, 1]).unwrap();
        let theta = init_params(&spec, 8);
        let xs = [Vector::from_slice(&[0.3, 0.4]), Vector::from_slice(&[-0.5, 1.0])];
        let (outs, _) = net::forward(&spec, &theta, &xs).unwrap();
        let v = functional_grad_norm_sq(&spec, &theta, &xs, &outs, LossKind::Squared).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn grad_norm_single_sample_expansion() {
        let spec = NetworkSpec::dense(&[2, 6, 1]).unwrap();
        let theta = init_params(&spec, 9);
        let x = Vector::from_slice(&[0.9, -0.4]);
        let y = Vector::from_slice(&[0.25]);
        let (outs, _) = net::forward(&spec, &theta, core::slice::from_ref(&x)).unwrap();
        let r = outs[0][0] - y[0];
        let t = ntk_entry(&spec, &theta, &x, &x).unwrap()[(0, 0)];
        let got = functional_grad_norm_sq(
            &spec,
            &theta,
            core::slice::from_ref(&x),
            core::slice::from_ref(&y),
            LossKind::Squared,
        )
        .unwrap();
        assert!((got - r * r * t).abs() <= 1e-10 * (1.0 + r * r * t));
    }

    #[test]
    fn kernel_norm_equals_backprop_norm_both_losses() {
        let mut rng = CounterRng::new(53);
        for (dims, kind) in [
            (alloc::vec![2usize, 8, 1], LossKind::Squared),
            (alloc::vec![3, 6, 5, 3], LossKind::CrossEntropy),
        ] {
            let spec = NetworkSpec::dense(&dims).unwrap();
            let theta = init_params(&spec, rng.next_u64());
            let n = 4;
            let xs = random_batch(&mut rng, n, dims[0]);
            let dy = *dims.last().unwrap();
            let ys: Vec<Vector> = (0..n)
                .map(|_| match kind {
                    LossKind::Squared => {
                        Vector::new((0..dy).map(|_| rng.normal()).collect())
                    }
                    LossKind::CrossEntropy => {
                        let mut y = Vector::zeros(dy);
                        y[(rng.next_u64() as usize) % dy] = 1.0;
                        y
                    }
                })
                .collect();
            let kernel = functional_grad_norm_sq(&spec, &theta, &xs, &ys, kind).unwrap();
            let g = grad_loss(&spec, &theta, &xs, &ys, kind).unwrap();
            let param = g.dot(&g);
            assert!(
                (kernel - param).abs() <= 1e-8 * param.max(1e-12),
                "{kernel} vs {param}"
            );
        }
    }

    #[test]
    fn rbf_diagonal_is_one_and_decays() {
        let mut rng = CounterRng::new(54);
        let xs = random_batch(&mut rng, 5, 3);
        let g = rbf_gram(&xs, 0.7).unwrap();
        for i in 0..5 {
            assert_eq!(g.matrix()[(i, i)], 1.0);
        }
        let far = Vector::from_slice(&[100.0, 0.0, 0.0]);
        let near = Vector::from_slice(&[0.0, 0.0, 0.0]);
        assert!(rbf_kernel(&far, &near, 1.0) <= 1e-10);
    }

    #[test]
    fn rbf_collinear_hand_values() {
        let xs = [
            Vector::from_slice(&[0.0]),
            Vector::from_slice(&[1.0]),
            Vector::from_slice(&[2.0]),
        ];
        let bw = 1.5;
        let g = rbf_gram(&xs, bw).unwrap();
        let k1 = math::exp(-1.0 / (2.0 * bw * bw));
        let k2 = math::exp(-4.0 / (2.0 * bw * bw));
        assert!((g.matrix()[(0, 1)] - k1).abs() < 1e-12);
        assert!((g.matrix()[(0, 2)] - k2).abs() < 1e-12);
    }

    #[test]
    fn median_bandwidth_equispaced() {
        let xs = [
            Vector::from_slice(&[0.0]),
            Vector::from_slice(&[1.0]),
            Vector::from_slice(&[2.0]),
        ];
        // Pairwise distances {1, 1, 2}; median is 1.
        assert_eq!(median_bandwidth(&xs), 1.0);
    }
}
