//! Dense row-major matrices and vectors with the operations the kernel
//! computations need: products, SPD solves with jitter escalation, LU solves,
//! and power-iteration spectral estimates.
//!
//! Everything is 64-bit. Values are immutable once constructed; all
//! operations return fresh allocations, so they are safe to share between
//! worker threads.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math;
use crate::rng::CounterRng;

/// Symmetry tolerance required of SPD solve inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Maximum number of ×10 jitter escalations before a solve is declared
/// kernel-singular.
const MAX_JITTER_ESCALATIONS: u32 = 8;

// ---------------------------------------------------------------------------
// Vector
// ---------------------------------------------------------------------------

/// A dense 64-bit float vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn from_slice(data: &[f64]) -> Self {
        Self { data: data.to_vec() }
    }

    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm2(&self) -> f64 {
        math::sqrt(self.dot(self))
    }

    pub fn inf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(math::abs(x)))
    }

    /// self += c · other
    pub fn add_scaled(&mut self, c: f64, other: &Vector) {
        assert_eq!(self.len(), other.len(), "add_scaled length mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn scale(&self, c: f64) -> Vector {
        Vector::new(self.data.iter().map(|x| c * x).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len(), "sub length mismatch");
        Vector::new(
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl core::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl core::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// DenseMatrix
// ---------------------------------------------------------------------------

/// A dense matrix in row-major storage: `data[i * cols + j] = A[i, j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::Shape {
                op: "from_vec",
                lhs: (rows, cols),
                rhs: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(CoreError::Shape {
                    op: "from_rows",
                    lhs: (1, c),
                    rhs: (1, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in entries.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        matmul(self, other)
    }

    pub fn mul_vec(&self, v: &Vector) -> Result<Vector> {
        if self.cols != v.len() {
            return Err(CoreError::Shape {
                op: "mul_vec",
                lhs: (self.rows, self.cols),
                rhs: (v.len(), 1),
            });
        }
        let mut out = Vector::zeros(self.rows);
        for i in 0..self.rows {
            out[i] = dot(self.row(i), v.as_slice());
        }
        Ok(out)
    }

    /// Aᵀ·v without materializing the transpose.
    pub fn tr_mul_vec(&self, v: &Vector) -> Result<Vector> {
        if self.rows != v.len() {
            return Err(CoreError::Shape {
                op: "tr_mul_vec",
                lhs: (self.cols, self.rows),
                rhs: (v.len(), 1),
            });
        }
        let mut out = Vector::zeros(self.cols);
        for i in 0..self.rows {
            let vi = v[i];
            if vi != 0.0 {
                for (o, a) in out.as_mut_slice().iter_mut().zip(self.row(i)) {
                    *o += a * vi;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &DenseMatrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(CoreError::Shape {
                op,
                lhs: (self.rows, self.cols),
                rhs: (other.rows, other.cols),
            });
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(DenseMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, c: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    /// A + c·I (square only).
    pub fn add_diag(&self, c: f64) -> DenseMatrix {
        debug_assert!(self.is_square());
        let mut m = self.clone();
        for i in 0..self.rows {
            m.data[i * self.cols + i] += c;
        }
        m
    }

    pub fn mean_diag(&self) -> f64 {
        if self.rows == 0 {
            return 0.0;
        }
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.data[i * self.cols + i]).sum::<f64>() / n as f64
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.cols {
            let s: f64 = (0..self.rows)
                .map(|i| math::abs(self.data[i * self.cols + j]))
                .sum();
            best = best.max(s);
        }
        best
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| math::abs(*x)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(math::abs(x)))
    }

    /// Largest |a_ij − a_ji| over all pairs (0 for non-square is meaningless;
    /// callers check squareness first).
    pub fn symmetry_gap(&self) -> f64 {
        let mut gap = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                gap = gap.max(math::abs(
                    self.data[i * self.cols + j] - self.data[j * self.cols + i],
                ));
            }
        }
        gap
    }

    /// (A + Aᵀ)/2, making symmetry exact.
    pub fn symmetrized(&self) -> DenseMatrix {
        debug_assert!(self.is_square());
        let n = self.rows;
        let mut m = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl core::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Standard matrix product.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(CoreError::Shape {
            op: "matmul",
            lhs: (a.rows, a.cols),
            rhs: (b.rows, b.cols),
        });
    }
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    // i-k-j loop order keeps the inner loop contiguous in both b and out.
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += aik * bv;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// SPD solve with jitter escalation
// ---------------------------------------------------------------------------

/// Outcome details of an SPD solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdReport {
    /// Jitter actually added to the diagonal.
    pub jitter_used: f64,
    /// Number of ×10 escalations performed (0 = first try succeeded).
    pub escalations: u32,
}

/// Solve (A + jitter·I)·X = B for SPD `A` via Cholesky.
///
/// If the factorization fails, the jitter is escalated ×10 per retry up to a
/// cap; past the cap a kernel-singular error is returned carrying the smallest
/// diagonal pivot seen.
pub fn solve_spd(a: &DenseMatrix, b: &DenseMatrix, jitter: f64) -> Result<DenseMatrix> {
    solve_spd_tracked(a, b, jitter).map(|(x, _)| x)
}

/// [`solve_spd`] variant that also reports the final jitter.
pub fn solve_spd_tracked(
    a: &DenseMatrix,
    b: &DenseMatrix,
    jitter: f64,
) -> Result<(DenseMatrix, SpdReport)> {
    if !a.is_square() {
        return Err(CoreError::NotSquare { rows: a.rows, cols: a.cols });
    }
    if a.rows != b.rows {
        return Err(CoreError::Shape {
            op: "solve_spd",
            lhs: (a.rows, a.cols),
            rhs: (b.rows, b.cols),
        });
    }
    let gap = a.symmetry_gap();
    if gap > SYMMETRY_TOL {
        return Err(CoreError::NotSymmetric { max_asymmetry: gap });
    }
    if !(jitter >= 0.0) {
        return Err(CoreError::InvalidConfig(alloc::format!(
            "jitter: must be >= 0, got {jitter}"
        )));
    }

    let scale = {
        let m = math::abs(a.mean_diag());
        if m > 0.0 { m } else { 1.0 }
    };
    let mut current = jitter;
    let mut worst_pivot = f64::INFINITY;
    for escalations in 0..=MAX_JITTER_ESCALATIONS {
        let shifted = if current == 0.0 { a.clone() } else { a.add_diag(current) };
        match cholesky(&shifted) {
            Ok(l) => {
                let x = cholesky_solve(&l, b);
                return Ok((x, SpdReport { jitter_used: current, escalations }));
            }
            Err(pivot) => {
                worst_pivot = worst_pivot.min(pivot);
                current = if current == 0.0 { 1e-12 * scale } else { current * 10.0 };
            }
        }
    }
    Err(CoreError::KernelSingular { min_pivot: worst_pivot })
}

/// Lower Cholesky factor, or the offending pivot on failure. Pivots that
/// collapse below roundoff relative to the diagonal scale count as failures:
/// they signal a numerically singular matrix whose "factorization" would
/// produce garbage solutions.
fn cholesky(a: &DenseMatrix) -> core::result::Result<DenseMatrix, f64> {
    let n = a.rows;
    let scale = (0..n).fold(0.0f64, |m, i| m.max(math::abs(a[(i, i)])));
    let floor = f64::EPSILON * scale * n as f64;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) || !d.is_finite() {
            return Err(d);
        }
        let ljj = math::sqrt(d);
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solve L·Lᵀ·X = B given the lower factor.
fn cholesky_solve(l: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = l.rows;
    let m = b.cols;
    let mut x = b.clone();
    // Forward: L·Y = B
    for i in 0..n {
        for c in 0..m {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    // Backward: Lᵀ·X = Y
    for i in (0..n).rev() {
        for c in 0..m {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

// ---------------------------------------------------------------------------
// LU solve (general square systems; used by the Padé denominators)
// ---------------------------------------------------------------------------

/// Solve A·X = B by LU with partial pivoting.
pub fn solve_lu(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(CoreError::NotSquare { rows: a.rows, cols: a.cols });
    }
    if a.rows != b.rows {
        return Err(CoreError::Shape {
            op: "solve_lu",
            lhs: (a.rows, a.cols),
            rhs: (b.rows, b.cols),
        });
    }
    let n = a.rows;
    let m = b.cols;
    let mut lu = a.clone();
    let mut x = b.clone();
    let tiny = 1e-300;
    let mut min_pivot = f64::INFINITY;
    for col in 0..n {
        let mut best = col;
        let mut best_val = math::abs(lu[(col, col)]);
        for r in (col + 1)..n {
            let v = math::abs(lu[(r, col)]);
            if v > best_val {
                best_val = v;
                best = r;
            }
        }
        min_pivot = min_pivot.min(best_val);
        if best_val < tiny || !best_val.is_finite() {
            return Err(CoreError::Singular { min_pivot });
        }
        if best != col {
            for j in 0..n {
                let t = lu[(col, j)];
                lu[(col, j)] = lu[(best, j)];
                lu[(best, j)] = t;
            }
            for j in 0..m {
                let t = x[(col, j)];
                x[(col, j)] = x[(best, j)];
                x[(best, j)] = t;
            }
        }
        let pivot = lu[(col, col)];
        for r in (col + 1)..n {
            let f = lu[(r, col)] / pivot;
            if f == 0.0 {
                continue;
            }
            lu[(r, col)] = f;
            for j in (col + 1)..n {
                let v = lu[(col, j)];
                lu[(r, j)] -= f * v;
            }
            for j in 0..m {
                let v = x[(col, j)];
                x[(r, j)] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        let pivot = lu[(col, col)];
        for j in 0..m {
            let mut s = x[(col, j)];
            for k in (col + 1)..n {
                s -= lu[(col, k)] * x[(k, j)];
            }
            x[(col, j)] = s / pivot;
        }
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Power-iteration spectral estimates
// ---------------------------------------------------------------------------

fn power_start(n: usize) -> Vector {
    // Deterministic pseudo-random start so we almost surely have a component
    // along the dominant eigenvector.
    let mut rng = CounterRng::keyed(&[0xb0a7_0000, n as u64]);
    let mut v = Vector::new((0..n).map(|_| rng.normal()).collect());
    let nrm = v.norm2();
    if nrm > 0.0 {
        v = v.scale(1.0 / nrm);
    }
    v
}

/// Largest singular value of `a` by power iteration on AᵀA.
pub fn spectral_norm(a: &DenseMatrix, iters: usize, tol: f64) -> f64 {
    if a.rows == 0 || a.cols == 0 {
        return 0.0;
    }
    let mut v = power_start(a.cols);
    let mut sigma = 0.0f64;
    for _ in 0..iters {
        let av = a.mul_vec(&v).expect("spectral_norm shapes");
        let atav = a.tr_mul_vec(&av).expect("spectral_norm shapes");
        let nrm = atav.norm2();
        if nrm == 0.0 {
            return 0.0;
        }
        let new_sigma = math::sqrt(nrm);
        let next = atav.scale(1.0 / nrm);
        let done = math::abs(new_sigma - sigma) <= tol * new_sigma.max(1.0);
        sigma = new_sigma;
        v = next;
        if done {
            break;
        }
    }
    sigma
}

/// Largest |eigenvalue| of a symmetric matrix by power iteration.
pub fn sym_eig_max(a: &DenseMatrix, iters: usize, tol: f64) -> f64 {
    debug_assert!(a.is_square());
    if a.rows == 0 {
        return 0.0;
    }
    let mut v = power_start(a.rows);
    let mut lambda = 0.0f64;
    for _ in 0..iters {
        let av = a.mul_vec(&v).expect("sym_eig_max shapes");
        let nrm = av.norm2();
        if nrm == 0.0 {
            return 0.0;
        }
        let done = math::abs(nrm - lambda) <= tol * nrm.max(1.0);
        lambda = nrm;
        v = av.scale(1.0 / nrm);
        if done {
            break;
        }
    }
    lambda
}

/// Estimate of the smallest eigenvalue of a symmetric matrix: power-iterate
/// the complement `m·I − A` where `m` bounds the spectrum from above.
pub fn sym_eig_min_est(a: &DenseMatrix, iters: usize) -> f64 {
    debug_assert!(a.is_square());
    if a.rows == 0 {
        return 0.0;
    }
    let m = sym_eig_max(a, iters, 1e-10);
    if m == 0.0 {
        return 0.0;
    }
    let shifted = a.scale(-1.0).add_diag(m);
    let mu = sym_eig_max(&shifted, iters, 1e-10);
    m - mu
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_matrix(rng: &mut CounterRng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| rng.normal())
    }

    /// Naive triple-loop product used as the independent reference.
    fn matmul_naive(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    fn max_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.data()
            .iter()
            .zip(b.data().iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn matmul_identity() {
        let mut rng = CounterRng::new(1);
        let m = random_matrix(&mut rng, 3, 3);
        let i3 = DenseMatrix::identity(3);
        assert_eq!(i3.matmul(&m).unwrap(), m);
        assert_eq!(m.matmul(&i3).unwrap(), m);
    }

    #[test]
    fn matmul_hand_checked_2x2() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[&[0.0], &[1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = CounterRng::new(2);
        let a = random_matrix(&mut rng, 5, 7);
        let b = random_matrix(&mut rng, 7, 3);
        let fast = a.matmul(&b).unwrap();
        let slow = matmul_naive(&a, &b);
        assert!(max_diff(&fast, &slow) < 1e-12);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        match a.matmul(&b) {
            Err(CoreError::Shape { lhs, rhs, .. }) => {
                assert_eq!(lhs, (2, 3));
                assert_eq!(rhs, (2, 3));
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn matmul_associative() {
        let mut rng = CounterRng::new(3);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 4, 5);
            let b = random_matrix(&mut rng, 5, 6);
            let c = random_matrix(&mut rng, 6, 3);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.max_abs().max(1.0);
            assert!(max_diff(&left, &right) / scale < 1e-10);
        }
    }

    #[test]
    fn solve_spd_identity_returns_rhs() {
        let mut rng = CounterRng::new(4);
        let b = random_matrix(&mut rng, 4, 2);
        let x = solve_spd(&DenseMatrix::identity(4), &b, 0.0).unwrap();
        assert!(max_diff(&x, &b) < 1e-14);
    }

    #[test]
    fn solve_spd_diagonal() {
        let a = DenseMatrix::diag(&[2.0, 4.0]);
        let b = DenseMatrix::from_rows(&[&[2.0], &[8.0]]).unwrap();
        let x = solve_spd(&a, &b, 0.0).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((x[(1, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn solve_spd_residual_random() {
        let mut rng = CounterRng::new(5);
        let g = random_matrix(&mut rng, 8, 8);
        let a = g.matmul(&g.transpose()).unwrap().add_diag(1.0).symmetrized();
        let b = random_matrix(&mut rng, 8, 1);
        let (x, report) = solve_spd_tracked(&a, &b, 0.0).unwrap();
        assert_eq!(report.escalations, 0);
        let resid = a.matmul(&x).unwrap().sub(&b).unwrap();
        assert!(resid.max_abs() <= 1e-9 * (1.0 + b.max_abs()));
    }

    #[test]
    fn solve_spd_rejects_asymmetric() {
        let a = DenseMatrix::from_rows(&[&[1.0, 0.5], &[0.0, 1.0]]).unwrap();
        let b = DenseMatrix::identity(2);
        assert!(matches!(
            solve_spd(&a, &b, 0.0),
            Err(CoreError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn solve_spd_escalates_jitter_on_semidefinite() {
        // Rank-1 PSD matrix: plain Cholesky fails, jitter escalation recovers.
        let a = DenseMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[&[1.0], &[1.0]]).unwrap();
        let (_, report) = solve_spd_tracked(&a, &b, 0.0).unwrap();
        assert!(report.escalations > 0);
        assert!(report.jitter_used > 0.0);
    }

    #[test]
    fn solve_spd_kernel_singular_carries_pivot() {
        let a = DenseMatrix::from_rows(&[&[0.0, 0.0], &[0.0, -1.0]]).unwrap();
        let b = DenseMatrix::identity(2);
        // Negative diagonal cannot be fixed by our jitter range.
        match solve_spd(&a, &b, 0.0) {
            Err(CoreError::KernelSingular { min_pivot }) => assert!(min_pivot <= 0.0),
            other => panic!("expected kernel-singular, got {other:?}"),
        }
    }

    #[test]
    fn solve_lu_matches_spd_route() {
        let mut rng = CounterRng::new(6);
        let g = random_matrix(&mut rng, 6, 6);
        let a = g.matmul(&g.transpose()).unwrap().add_diag(1.0).symmetrized();
        let b = random_matrix(&mut rng, 6, 2);
        let x1 = solve_lu(&a, &b).unwrap();
        let x2 = solve_spd(&a, &b, 0.0).unwrap();
        assert!(max_diff(&x1, &x2) < 1e-9);
    }

    #[test]
    fn spectral_norm_diagonal() {
        let a = DenseMatrix::diag(&[3.0, -5.0]);
        let s = spectral_norm(&a, 50, 1e-8);
        assert!((s - 5.0).abs() < 1e-6);
    }

    #[test]
    fn spectral_norm_zero_matrix() {
        assert_eq!(spectral_norm(&DenseMatrix::zeros(4, 4), 50, 1e-8), 0.0);
    }

    #[test]
    fn sym_eig_min_detects_indefinite() {
        let a = DenseMatrix::diag(&[2.0, -0.5, 1.0]);
        let lo = sym_eig_min_est(&a, 200);
        assert!((lo + 0.5).abs() < 1e-6, "got {lo}");
    }

    proptest! {
        #[test]
        fn tr_mul_vec_matches_transpose(seed in 0u64..500) {
            let mut rng = CounterRng::new(seed);
            let a = random_matrix(&mut rng, 4, 6);
            let v = Vector::new((0..4).map(|_| rng.normal()).collect());
            let fast = a.tr_mul_vec(&v).unwrap();
            let slow = a.transpose().mul_vec(&v).unwrap();
            for i in 0..6 {
                prop_assert!((fast[i] - slow[i]).abs() < 1e-12);
            }
        }
    }
}
