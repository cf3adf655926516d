//! Finite ReLU networks: dense layers with an optional 1-D convolutional
//! front, forward traces, reverse-mode parameter/input gradients, per-output
//! Jacobians, and the forward-over-reverse passes the kernel predictors
//! differentiate through.
//!
//! Conventions: every hidden layer is ReLU (subgradient 0 at 0), the output
//! layer is linear, and parameters live in a flat [`ParamVector`] laid out
//! layer-major, weights then bias per layer. Squared loss uses the 1/(2n)
//! normalization; cross-entropy is softmax followed by mean negative
//! log-likelihood.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{CoreError, Result};
use crate::linalg::{spectral_norm, DenseMatrix, Vector};
use crate::math;
use crate::rng::CounterRng;

// ---------------------------------------------------------------------------
// Specs and parameters
// ---------------------------------------------------------------------------

/// One layer of the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { fan_in: usize, fan_out: usize },
    /// Single-channel circular 1-D convolution over a signal of length `len`
    /// (output length equals input length, stride 1).
    Conv1d { len: usize, kernel_width: usize },
}

impl LayerSpec {
    pub fn in_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_in, .. } => fan_in,
            LayerSpec::Conv1d { len, .. } => len,
        }
    }

    pub fn out_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_out, .. } => fan_out,
            LayerSpec::Conv1d { len, .. } => len,
        }
    }

    pub fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_in, fan_out } => fan_in * fan_out,
            LayerSpec::Conv1d { kernel_width, .. } => kernel_width,
        }
    }

    pub fn bias_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_out, .. } => fan_out,
            LayerSpec::Conv1d { .. } => 1,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    /// Fan-in used for He initialization.
    fn init_fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_in, .. } => fan_in,
            LayerSpec::Conv1d { kernel_width, .. } => kernel_width,
        }
    }
}

/// Architecture description: hidden ReLU layers, linear output layer.
/// Convolutional layers, if any, precede all dense layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
}

/// Parameter slice locations of one layer within the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRange {
    pub weights: Range<usize>,
    pub bias: Range<usize>,
}

impl NetworkSpec {
    /// Fully-connected network from a dimension chain
    /// `[d_x, h_1, ..., h_L, d_y]` (at least one hidden layer).
    pub fn dense(dims: &[usize]) -> Result<Self> {
        if dims.len() < 3 {
            return Err(CoreError::InvalidSpec(format!(
                "need at least one hidden layer, got {} dims",
                dims.len()
            )));
        }
        let layers = dims
            .windows(2)
            .map(|w| LayerSpec::Dense { fan_in: w[0], fan_out: w[1] })
            .collect();
        let spec = Self { layers };
        spec.validate()?;
        Ok(spec)
    }

    /// `conv_layers` circular conv layers over the raw input signal followed
    /// by dense layers `[input_dim → hidden... → output_dim]`.
    pub fn conv1d_front(
        input_dim: usize,
        conv_layers: usize,
        kernel_width: usize,
        hidden: &[usize],
        output_dim: usize,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        for _ in 0..conv_layers {
            layers.push(LayerSpec::Conv1d { len: input_dim, kernel_width });
        }
        let mut prev = input_dim;
        for &h in hidden {
            layers.push(LayerSpec::Dense { fan_in: prev, fan_out: h });
            prev = h;
        }
        layers.push(LayerSpec::Dense { fan_in: prev, fan_out: output_dim });
        let spec = Self { layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_layers(layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self { layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(CoreError::InvalidSpec(
                "network needs at least one hidden layer".into(),
            ));
        }
        let mut seen_dense = false;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(CoreError::InvalidSpec(format!("layer {i} has a zero dimension")));
            }
            match layer {
                LayerSpec::Dense { .. } => seen_dense = true,
                LayerSpec::Conv1d { len, kernel_width } => {
                    if seen_dense {
                        return Err(CoreError::InvalidSpec(format!(
                            "layer {i}: conv layers must precede all dense layers"
                        )));
                    }
                    if *kernel_width == 0 || kernel_width > len {
                        return Err(CoreError::InvalidSpec(format!(
                            "layer {i}: kernel width {kernel_width} invalid for length {len}"
                        )));
                    }
                }
            }
            if i > 0 && self.layers[i - 1].out_dim() != layer.in_dim() {
                return Err(CoreError::InvalidSpec(format!(
                    "layer {i} fan-in {} does not match previous fan-out {}",
                    layer.in_dim(),
                    self.layers[i - 1].out_dim()
                )));
            }
        }
        if matches!(self.layers.last(), Some(LayerSpec::Conv1d { .. })) {
            return Err(CoreError::InvalidSpec("output layer must be dense".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Number of hidden layers L (layer count minus the linear head).
    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Flat-vector slice ranges per layer, in layout order.
    pub fn param_ranges(&self) -> Vec<LayerRange> {
        let mut offset = 0;
        self.layers
            .iter()
            .map(|l| {
                let w = offset..offset + l.weight_count();
                let b = w.end..w.end + l.bias_count();
                offset = b.end;
                LayerRange { weights: w, bias: b }
            })
            .collect()
    }
}

/// Flattened network parameters; the single source of truth for model state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    data: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { data }
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

    /// self += c · v
    pub fn add_scaled(&mut self, c: f64, v: &[f64]) {
        assert_eq!(self.data.len(), v.len(), "param length mismatch");
        for (a, b) in self.data.iter_mut().zip(v.iter()) {
            *a += c * b;
        }
    }

    pub fn inf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(math::abs(x)))
    }
}

/// Per-layer weight/bias views of a flat parameter vector.
pub fn layer_params<'a>(spec: &NetworkSpec, theta: &'a ParamVector) -> Vec<(&'a [f64], &'a [f64])> {
    spec.param_ranges()
        .into_iter()
        .map(|r| (&theta.as_slice()[r.weights], &theta.as_slice()[r.bias]))
        .collect()
}

/// He-style initialization: weights ~ Normal(0, 2/fan_in) (kernel width acts
/// as fan-in for conv layers), biases zero. Deterministic given the seed.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> ParamVector {
    let mut data = vec![0.0; spec.param_count()];
    let ranges = spec.param_ranges();
    for (l, (layer, range)) in spec.layers.iter().zip(ranges.iter()).enumerate() {
        let sigma = math::sqrt(2.0 / layer.init_fan_in() as f64);
        let mut rng = CounterRng::keyed(&[seed, l as u64]);
        for w in &mut data[range.weights.clone()] {
            *w = sigma * rng.normal();
        }
        // biases stay zero
    }
    ParamVector::from_vec(data)
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

/// Per-layer pre-activations and activations for one input batch.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input batch, one row per sample.
    input: DenseMatrix,
    /// Pre-activations per layer (batch × out_dim).
    pre: Vec<DenseMatrix>,
    /// Post-activations per layer; the last entry equals the linear output.
    post: Vec<DenseMatrix>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    pub fn layer_count(&self) -> usize {
        self.pre.len()
    }

    /// Activation matrix g^h feeding layer `l` (the input batch for l = 0).
    pub fn activation_in(&self, l: usize) -> &DenseMatrix {
        if l == 0 {
            &self.input
        } else {
            &self.post[l - 1]
        }
    }

    pub fn pre_activation(&self, l: usize) -> &DenseMatrix {
        &self.pre[l]
    }

    pub fn output(&self) -> &DenseMatrix {
        &self.post[self.post.len() - 1]
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// ReLU subgradient with the convention σ'(0) = 0.
fn relu_mask(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn dense_forward(z: &[f64], w: &[f64], b: &[f64], fan_in: usize, fan_out: usize, out: &mut [f64]) {
    out.copy_from_slice(b);
    for (i, &zi) in z.iter().enumerate().take(fan_in) {
        if zi == 0.0 {
            continue;
        }
        let wrow = &w[i * fan_out..(i + 1) * fan_out];
        for (o, &wij) in out.iter_mut().zip(wrow.iter()) {
            *o += zi * wij;
        }
    }
}

fn conv_forward(z: &[f64], k: &[f64], b: f64, out: &mut [f64]) {
    let d = z.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = b;
        for (j, &kj) in k.iter().enumerate() {
            s += kj * z[(i + j) % d];
        }
        *o = s;
    }
}

/// delta·Wᵀ: cotangent on the layer input given the cotangent on the
/// pre-activation.
fn dense_vjp_input(delta: &[f64], w: &[f64], fan_in: usize, fan_out: usize, out: &mut [f64]) {
    for i in 0..fan_in {
        out[i] = crate::linalg::dot(delta, &w[i * fan_out..(i + 1) * fan_out]);
    }
}

fn conv_vjp_input(delta: &[f64], k: &[f64], out: &mut [f64]) {
    let d = delta.len();
    for (q, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, &kj) in k.iter().enumerate() {
            s += kj * delta[(q + d - j) % d];
        }
        *o = s;
    }
}

fn dense_grad_params(z: &[f64], delta: &[f64], gw: &mut [f64], gb: &mut [f64]) {
    let fan_out = delta.len();
    for (i, &zi) in z.iter().enumerate() {
        if zi == 0.0 {
            continue;
        }
        let grow = &mut gw[i * fan_out..(i + 1) * fan_out];
        for (g, &dj) in grow.iter_mut().zip(delta.iter()) {
            *g += zi * dj;
        }
    }
    for (g, &dj) in gb.iter_mut().zip(delta.iter()) {
        *g += dj;
    }
}

fn conv_grad_params(z: &[f64], delta: &[f64], gk: &mut [f64], gb: &mut [f64]) {
    let d = z.len();
    for (j, g) in gk.iter_mut().enumerate() {
        let mut s = 0.0;
        for (i, &di) in delta.iter().enumerate() {
            s += di * z[(i + j) % d];
        }
        *g += s;
    }
    gb[0] += delta.iter().sum::<f64>();
}

fn check_input_dim(spec: &NetworkSpec, x: &Vector) -> Result<()> {
    if x.len() != spec.input_dim() {
        return Err(CoreError::Shape {
            op: "forward",
            lhs: (1, spec.input_dim()),
            rhs: (1, x.len()),
        });
    }
    Ok(())
}

fn forward_trace(spec: &NetworkSpec, theta: &ParamVector, xs: &[Vector]) -> Result<ForwardTrace> {
    debug_assert_eq!(theta.len(), spec.param_count(), "param count mismatch");
    let batch = xs.len();
    let d_in = spec.input_dim();
    let mut input = DenseMatrix::zeros(batch, d_in);
    for (i, x) in xs.iter().enumerate() {
        check_input_dim(spec, x)?;
        input.row_mut(i).copy_from_slice(x.as_slice());
    }
    let params = layer_params(spec, theta);
    let last = spec.layers.len() - 1;
    let mut pre = Vec::with_capacity(spec.layers.len());
    let mut post = Vec::with_capacity(spec.layers.len());
    for (l, layer) in spec.layers.iter().enumerate() {
        let (w, b) = params[l];
        let src = if l == 0 { &input } else { &post[l - 1] };
        let mut a = DenseMatrix::zeros(batch, layer.out_dim());
        for s in 0..batch {
            match *layer {
                LayerSpec::Dense { fan_in, fan_out } => {
                    dense_forward(src.row(s), w, b, fan_in, fan_out, a.row_mut(s));
                }
                LayerSpec::Conv1d { .. } => {
                    conv_forward(src.row(s), w, b[0], a.row_mut(s));
                }
            }
        }
        let z = if l == last {
            a.clone()
        } else {
            let mut z = a.clone();
            for s in 0..batch {
                for v in z.row_mut(s) {
                    *v = relu(*v);
                }
            }
            z
        };
        pre.push(a);
        post.push(z);
    }
    Ok(ForwardTrace { input, pre, post })
}

/// Evaluate the network on a batch, returning outputs and the trace needed
/// for reverse-mode passes.
pub fn forward(
    spec: &NetworkSpec,
    theta: &ParamVector,
    xs: &[Vector],
) -> Result<(Vec<Vector>, ForwardTrace)> {
    let trace = forward_trace(spec, theta, xs)?;
    let out = trace.output();
    let outputs = (0..xs.len())
        .map(|i| Vector::from_slice(out.row(i)))
        .collect();
    Ok((outputs, trace))
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Loss kinds supported by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// ½‖f − y‖² per sample, 1/(2n)Σ over a batch.
    Squared,
    /// Softmax + mean negative log-likelihood (requires d_y ≥ 2).
    CrossEntropy,
}

fn check_loss(spec: &NetworkSpec, kind: LossKind) -> Result<()> {
    if kind == LossKind::CrossEntropy && spec.output_dim() < 2 {
        return Err(CoreError::UnsupportedLoss(
            "cross-entropy requires at least two output dimensions",
        ));
    }
    Ok(())
}

/// Per-sample cost C(f, y).
pub fn sample_cost(out: &[f64], target: &[f64], kind: LossKind) -> f64 {
    match kind {
        LossKind::Squared => {
            0.5 * out
                .iter()
                .zip(target.iter())
                .map(|(f, y)| (f - y) * (f - y))
                .sum::<f64>()
        }
        LossKind::CrossEntropy => {
            let m = out.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + math::ln(out.iter().map(|&f| math::exp(f - m)).sum::<f64>());
            let mass: f64 = target.iter().sum();
            mass * lse - out.iter().zip(target.iter()).map(|(f, y)| y * f).sum::<f64>()
        }
    }
}

/// ∂C/∂f for one sample.
pub fn sample_cotangent(out: &[f64], target: &[f64], kind: LossKind) -> Vec<f64> {
    match kind {
        LossKind::Squared => out.iter().zip(target.iter()).map(|(f, y)| f - y).collect(),
        LossKind::CrossEntropy => {
            let m = out.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let exps: Vec<f64> = out.iter().map(|&f| math::exp(f - m)).collect();
            let z: f64 = exps.iter().sum();
            let mass: f64 = target.iter().sum();
            exps.iter()
                .zip(target.iter())
                .map(|(e, y)| mass * e / z - y)
                .collect()
        }
    }
}

/// Empirical loss L(f_θ, D) = (1/n) Σ C(f(x_i), y_i).
pub fn batch_loss(
    spec: &NetworkSpec,
    theta: &ParamVector,
    xs: &[Vector],
    ys: &[Vector],
    kind: LossKind,
) -> Result<f64> {
    let (loss, _) = loss_and_grad_inner(spec, theta, xs, ys, kind, false)?;
    Ok(loss)
}

/// Loss and its parameter gradient in one pass.
pub fn loss_and_grad(
    spec: &NetworkSpec,
    theta: &ParamVector,
    xs: &[Vector],
    ys: &[Vector],
    kind: LossKind,
) -> Result<(f64, Vector)> {
    let (loss, grad) = loss_and_grad_inner(spec, theta, xs, ys, kind, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

/// ∇_θ L(f_θ, D) by reverse-mode accumulation through the forward trace.
pub fn grad_loss(
    spec: &NetworkSpec,
    theta: &ParamVector,
    xs: &[Vector],
    ys: &[Vector],
    kind: LossKind,
) -> Result<Vector> {
    loss_and_grad(spec, theta, xs, ys, kind).map(|(_, g)| g)
}

fn loss_and_grad_inner(
    spec: &NetworkSpec,
    theta: &ParamVector,
    xs: &[Vector],
    ys: &[Vector],
    kind: LossKind,
    want_grad: bool,
) -> Result<(f64, Option<Vector>)> {
    check_loss(spec, kind)?;
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(CoreError::Shape {
            op: "batch",
            lhs: (xs.len(), 1),
            rhs: (ys.len(), 1),
        });
    }
    let d_y = spec.output_dim();
    for y in ys {
        if y.len() != d_y {
            return Err(CoreError::Shape {
                op: "targets",
                lhs: (1, d_y),
                rhs: (1, y.len()),
            });
        }
    }
    let trace = forward_trace(spec, theta, xs)?;
    let n = xs.len() as f64;
    let out = trace.output();
    let mut loss = 0.0;
    let mut cots = DenseMatrix::zeros(xs.len(), d_y);
    for i in 0..xs.len() {
        loss += sample_cost(out.row(i), ys[i].as_slice(), kind);
        if want_grad {
            let c = sample_cotangent(out.row(i), ys[i].as_slice(), kind);
            for (j, v) in c.into_iter().enumerate() {
                cots[(i, j)] = v / n;
            }
        }
    }
    loss /= n;
    if !want_grad {
        return Ok((loss, None));
    }
    let grad = backward_params(spec, theta, &trace, &cots);
    Ok((loss, Some(Vector::new(grad))))
}

/// Reverse pass over the whole batch: cotangents on the network output →
/// accumulated parameter gradient.
fn backward_params(
    spec: &NetworkSpec,
    theta: &ParamVector,
    trace: &ForwardTrace,
    out_cots: &DenseMatrix,
) -> Vec<f64> {
    let params = layer_params(spec, theta);
    let ranges = spec.param_ranges();
    let mut grad = vec![0.0; spec.param_count()];
    let batch = trace.batch_size();
    let mut delta = out_cots.clone();
    for l in (0..spec.layers.len()).rev() {
        let layer = &spec.layers[l];
        let (w, _) = params[l];
        let range = &ranges[l];
        let src = trace.activation_in(l);
        let mut delta_prev = DenseMatrix::zeros(batch, layer.in_dim());
        for s in 0..batch {
            let (gw, gb) = split_grad(&mut grad, range);
            match *layer {
                LayerSpec::Dense { fan_in, fan_out } => {
                    dense_grad_params(src.row(s), delta.row(s), gw, gb);
                    dense_vjp_input(delta.row(s), w, fan_in, fan_out, delta_prev.row_mut(s));
                }
                LayerSpec::Conv1d { .. } => {
                    conv_grad_params(src.row(s), delta.row(s), gw, gb);
                    conv_vjp_input(delta.row(s), w, delta_prev.row_mut(s));
                }
            }
        }
        if l > 0 {
            let pre_prev = trace.pre_activation(l - 1);
            for s in 0..batch {
                for (d, &a) in delta_prev.row_mut(s).iter_mut().zip(pre_prev.row(s)) {
                    *d *= relu_mask(a);
                }
            }
        }
        delta = delta_prev;
    }
    grad
}

fn split_grad<'a>(grad: &'a mut [f64], range: &LayerRange) -> (&'a mut [f64], &'a mut [f64]) {
    let (head, rest) = grad.split_at_mut(range.bias.start);
    (&mut head[range.weights.clone()], &mut rest[..range.bias.len()])
}

// ---------------------------------------------------------------------------
// Jacobians and input gradients
// ---------------------------------------------------------------------------

/// Smallest |pre-activation| over all hidden units and samples: the distance
/// to the nearest ReLU kink. Finite-difference oracles are only trustworthy
/// when the probe stays inside one activation pattern, so gradient checks
/// reject draws with a small margin.
pub fn activation_margin(spec: &NetworkSpec, theta: &ParamVector, xs: &[Vector]) -> Result<f64> {
    let trace = forward_trace(spec, theta, xs)?;
    let mut margin = f64::INFINITY;
    for l in 0..spec.layers.len() - 1 {
        let pre = trace.pre_activation(l);
        for s in 0..trace.batch_size() {
            for &a in pre.row(s) {
                margin = margin.min(math::abs(a));
            }
        }
    }
    Ok(margin)
}

/// Parameter VJP at a single input: J(x)ᵀ·cot without materializing the
/// Jacobian.
pub fn vjp_params(
    spec: &NetworkSpec,
    theta: &ParamVector,
    x: &Vector,
    cot: &[f64],
) -> Result<Vector> {
    let trace = forward_trace(spec, theta, core::slice::from_ref(x))?;
    let mut c = DenseMatrix::zeros(1, spec.output_dim());
    c.row_mut(0).copy_from_slice(cot);
    Ok(Vector::new(backward_params(spec, theta, &trace, &c)))
}

/// Parameter Jacobian at a single input: row j is ∇_θ f_j(x), computed by
/// d_y reverse-mode passes.
pub fn jacobian(spec: &NetworkSpec, theta: &ParamVector, x: &Vector) -> Result<DenseMatrix> {
    let trace = forward_trace(spec, theta, core::slice::from_ref(x))?;
    let d_y = spec.output_dim();
    let p = spec.param_count();
    let mut jac = DenseMatrix::zeros(d_y, p);
    for c in 0..d_y {
        let mut cot = DenseMatrix::zeros(1, d_y);
        cot[(0, c)] = 1.0;
        let row = backward_params(spec, theta, &trace, &cot);
        jac.row_mut(c).copy_from_slice(&row);
    }
    Ok(jac)
}

/// Gradient of ⟨cot, f(x)⟩ with respect to the input x.
pub fn input_grad(
    spec: &NetworkSpec,
    theta: &ParamVector,
    x: &Vector,
    cot: &[f64],
) -> Result<Vector> {
    let trace = forward_trace(spec, theta, core::slice::from_ref(x))?;
    let params = layer_params(spec, theta);
    let mut delta: Vec<f64> = cot.to_vec();
    for l in (0..spec.layers.len()).rev() {
        let layer = &spec.layers[l];
        let (w, _) = params[l];
        let mut prev = vec![0.0; layer.in_dim()];
        match *layer {
            LayerSpec::Dense { fan_in, fan_out } => {
                dense_vjp_input(&delta, w, fan_in, fan_out, &mut prev);
            }
            LayerSpec::Conv1d { .. } => conv_vjp_input(&delta, w, &mut prev),
        }
        if l > 0 {
            let pre_prev = trace.pre_activation(l - 1);
            for (d, &a) in prev.iter_mut().zip(pre_prev.row(0)) {
                *d *= relu_mask(a);
            }
        }
        delta = prev;
    }
    Ok(Vector::new(delta))
}

/// Gradient of the per-sample cost C(f(x), y) with respect to the input.
pub fn cost_input_grad(
    spec: &NetworkSpec,
    theta: &ParamVector,
    x: &Vector,
    y: &Vector,
    kind: LossKind,
) -> Result<Vector> {
    check_loss(spec, kind)?;
    let (outs, _) = forward(spec, theta, core::slice::from_ref(x))?;
    let cot = sample_cotangent(outs[0].as_slice(), y.as_slice(), kind);
    input_grad(spec, theta, x, &cot)
}

// ---------------------------------------------------------------------------
// Forward-over-reverse: J(x)·u and its input gradient
// ---------------------------------------------------------------------------

/// Forward tangent pass in a parameter direction: returns
/// `(f(x), J(x)·dir)` without materializing the Jacobian.
pub fn jvp_param(
    spec: &NetworkSpec,
    theta: &ParamVector,
    x: &Vector,
    dir: &[f64],
) -> Result<(Vector, Vector)> {
    check_input_dim(spec, x)?;
    debug_assert_eq!(dir.len(), spec.param_count());
    let params = layer_params(spec, theta);
    let ranges = spec.param_ranges();
    let last = spec.layers.len() - 1;
    let mut z: Vec<f64> = x.as_slice().to_vec();
    let mut tz: Vec<f64> = vec![0.0; z.len()];
    for (l, layer) in spec.layers.iter().enumerate() {
        let (w, b) = params[l];
        let range = &ranges[l];
        let (uw, ub) = (&dir[range.weights.clone()], &dir[range.bias.clone()]);
        let out_dim = layer.out_dim();
        let mut a = vec![0.0; out_dim];
        let mut ta = vec![0.0; out_dim];
        match *layer {
            LayerSpec::Dense { fan_in, fan_out } => {
                dense_forward(&z, w, b, fan_in, fan_out, &mut a);
                // t_a = t_z·W + z·U + u_b
                let zero_bias = vec![0.0; fan_out];
                dense_forward(&tz, w, &zero_bias, fan_in, fan_out, &mut ta);
                let mut zu = vec![0.0; fan_out];
                dense_forward(&z, uw, ub, fan_in, fan_out, &mut zu);
                for (t, v) in ta.iter_mut().zip(zu.iter()) {
                    *t += v;
                }
            }
            LayerSpec::Conv1d { .. } => {
                conv_forward(&z, w, b[0], &mut a);
                conv_forward(&tz, w, 0.0, &mut ta);
                let mut zu = vec![0.0; out_dim];
                conv_forward(&z, uw, ub[0], &mut zu);
                for (t, v) in ta.iter_mut().zip(zu.iter()) {
                    *t += v;
                }
            }
        }
        if l == last {
            return Ok((Vector::new(a), Vector::new(ta)));
        }
        z = a.iter().map(|&v| relu(v)).collect();
        tz = ta
            .iter()
            .zip(a.iter())
            .map(|(&t, &v)| t * relu_mask(v))
            .collect();
    }
    unreachable!("network has at least one layer")
}

/// Gradient of ⟨cot, J(x)·dir⟩ with respect to the input x, holding θ and
/// `dir` fixed and treating the ReLU activation pattern as locally constant.
///
/// This is the reverse pass through the forward-tangent graph; it is what a
/// white-box attack on a kernel predictor needs to differentiate a cross-kernel
/// row H(x, X) by reverse mode.
pub fn jvp_param_input_grad(
    spec: &NetworkSpec,
    theta: &ParamVector,
    x: &Vector,
    dir: &[f64],
    cot: &[f64],
) -> Result<Vector> {
    let trace = forward_trace(spec, theta, core::slice::from_ref(x))?;
    let params = layer_params(spec, theta);
    let ranges = spec.param_ranges();
    let layer_count = spec.layers.len();
    // Cotangents on t_z^h and z^h, initialized from the top layer where the
    // tangent output t_a = t_z·W + z·U + u_b receives `cot`.
    let mut lt: Vec<f64>;
    let mut lz: Vec<f64>;
    {
        let l = layer_count - 1;
        let layer = &spec.layers[l];
        let (w, _) = params[l];
        let uw = &dir[ranges[l].weights.clone()];
        let in_dim = layer.in_dim();
        lt = vec![0.0; in_dim];
        lz = vec![0.0; in_dim];
        match *layer {
            LayerSpec::Dense { fan_in, fan_out } => {
                dense_vjp_input(cot, w, fan_in, fan_out, &mut lt);
                dense_vjp_input(cot, uw, fan_in, fan_out, &mut lz);
            }
            LayerSpec::Conv1d { .. } => {
                conv_vjp_input(cot, w, &mut lt);
                conv_vjp_input(cot, uw, &mut lz);
            }
        }
    }
    for l in (0..layer_count - 1).rev() {
        let layer = &spec.layers[l];
        let (w, _) = params[l];
        let uw = &dir[ranges[l].weights.clone()];
        let mask: Vec<f64> = trace
            .pre_activation(l)
            .row(0)
            .iter()
            .map(|&a| relu_mask(a))
            .collect();
        // μ = λ_t ⊙ σ', ν = λ_z ⊙ σ'
        let mu: Vec<f64> = lt.iter().zip(mask.iter()).map(|(a, m)| a * m).collect();
        let nu: Vec<f64> = lz.iter().zip(mask.iter()).map(|(a, m)| a * m).collect();
        let in_dim = layer.in_dim();
        let mut new_lt = vec![0.0; in_dim];
        let mut new_lz = vec![0.0; in_dim];
        let mut tmp = vec![0.0; in_dim];
        match *layer {
            LayerSpec::Dense { fan_in, fan_out } => {
                dense_vjp_input(&mu, w, fan_in, fan_out, &mut new_lt);
                dense_vjp_input(&mu, uw, fan_in, fan_out, &mut new_lz);
                dense_vjp_input(&nu, w, fan_in, fan_out, &mut tmp);
            }
            LayerSpec::Conv1d { .. } => {
                conv_vjp_input(&mu, w, &mut new_lt);
                conv_vjp_input(&mu, uw, &mut new_lz);
                conv_vjp_input(&nu, w, &mut tmp);
            }
        }
        for (a, b) in new_lz.iter_mut().zip(tmp.iter()) {
            *a += b;
        }
        lt = new_lt;
        lz = new_lz;
    }
    Ok(Vector::new(lz))
}

// ---------------------------------------------------------------------------
// Spectral norms
// ---------------------------------------------------------------------------

/// Per-layer spectral norms s_1..s_{L+1}: dense layers report ‖W‖₂ by power
/// iteration (50 iterations, tol 1e-8); conv layers report √d_x·‖k‖₂ with d_x
/// the network input dimension.
pub fn spectral_norms(spec: &NetworkSpec, theta: &ParamVector) -> Vec<f64> {
    let d_x = spec.input_dim() as f64;
    layer_params(spec, theta)
        .into_iter()
        .zip(spec.layers.iter())
        .map(|((w, _), layer)| match *layer {
            LayerSpec::Dense { fan_in, fan_out } => {
                let m = DenseMatrix::from_vec(fan_in, fan_out, w.to_vec())
                    .expect("layer weight shape");
                spectral_norm(&m, 50, 1e-8)
            }
            LayerSpec::Conv1d { .. } => {
                math::sqrt(d_x) * math::sqrt(w.iter().map(|x| x * x).sum::<f64>())
            }
        })
        .collect()
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // index-coupled finite-difference loops
mod tests {
    use super::*;
    use crate::linalg::spectral_norm as mat_spectral_norm;
    use proptest::prelude::*;

    fn random_vec(rng: &mut CounterRng, n: usize) -> Vector {
        Vector::new((0..n).map(|_| rng.normal()).collect())
    }

    fn random_batch(rng: &mut CounterRng, n: usize, dim: usize) -> Vec<Vector> {
        (0..n).map(|_| random_vec(rng, dim)).collect()
    }

    /// Central-difference gradient of the batch loss, the independent
    /// reference for every reverse-mode check.
    fn fd_grad(
        spec: &NetworkSpec,
        theta: &ParamVector,
        xs: &[Vector],
        ys: &[Vector],
        kind: LossKind,
    ) -> Vec<f64> {
        let mut g = vec![0.0; theta.len()];
        for i in 0..theta.len() {
            let h = 1e-5 * theta.as_slice()[i].abs().max(1.0);
            let mut plus = theta.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = theta.clone();
            minus.as_mut_slice()[i] -= h;
            let lp = batch_loss(spec, &plus, xs, ys, kind).unwrap();
            let lm = batch_loss(spec, &minus, xs, ys, kind).unwrap();
            g[i] = (lp - lm) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let scale: f64 = b.iter().map(|y| y * y).sum::<f64>();
        (diff / scale.max(1e-300)).sqrt()
    }

    #[test]
    fn spec_validation_rules() {
        assert!(NetworkSpec::dense(&[2, 3]).is_err()); // no hidden layer
        assert!(NetworkSpec::dense(&[2, 3, 1]).is_ok());
        assert!(NetworkSpec::conv1d_front(6, 2, 3, &[4], 2).is_ok());
        // conv after dense rejected
        let layers = vec![
            LayerSpec::Dense { fan_in: 4, fan_out: 4 },
            LayerSpec::Conv1d { len: 4, kernel_width: 2 },
            LayerSpec::Dense { fan_in: 4, fan_out: 1 },
        ];
        assert!(NetworkSpec::from_layers(layers).is_err());
        // dimension chain must match
        let layers = vec![
            LayerSpec::Dense { fan_in: 4, fan_out: 3 },
            LayerSpec::Dense { fan_in: 4, fan_out: 1 },
        ];
        assert!(NetworkSpec::from_layers(layers).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = NetworkSpec::dense(&[3, 16, 16, 2]).unwrap();
        let a = init_params(&spec, 77);
        let b = init_params(&spec, 77);
        assert_eq!(a, b);
        let c = init_params(&spec, 78);
        assert_ne!(a, c);
        for (_, bias) in layer_params(&spec, &a) {
            assert!(bias.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn init_variance_tracks_fan_in() {
        let spec = NetworkSpec::dense(&[100, 120, 1]).unwrap();
        let theta = init_params(&spec, 5);
        let (w, _) = layer_params(&spec, &theta)[0];
        let var = w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
        let expected = 2.0 / 100.0;
        assert!((var - expected).abs() < 0.2 * expected, "var {var}");
    }

    #[test]
    fn param_vector_roundtrips_through_layer_view() {
        let spec = NetworkSpec::conv1d_front(5, 1, 3, &[4], 2).unwrap();
        let mut rng = CounterRng::new(3);
        let theta =
            ParamVector::from_vec((0..spec.param_count()).map(|_| rng.normal()).collect());
        let mut rebuilt = vec![0.0; theta.len()];
        for (range, (w, b)) in spec.param_ranges().iter().zip(layer_params(&spec, &theta)) {
            rebuilt[range.weights.clone()].copy_from_slice(w);
            rebuilt[range.bias.clone()].copy_from_slice(b);
        }
        assert_eq!(theta.as_slice(), rebuilt.as_slice());
    }

    #[test]
    fn forward_zero_params_outputs_zero() {
        let spec = NetworkSpec::dense(&[3, 4, 2]).unwrap();
        let theta = ParamVector::zeros(spec.param_count());
        let xs = [Vector::from_slice(&[1.0, -2.0, 0.5])];
        let (outs, _) = forward(&spec, &theta, &xs).unwrap();
        assert_eq!(outs[0].as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn forward_hand_computed_one_hidden() {
        // W1 = [[1, -1], [2, 0]], b1 = [0.5, 0], W2 = [[1], [1]], b2 = [-0.25]
        // x = [1, -1]: a1 = [1*1 + (-1)*2 + 0.5, 1*(-1)] = [-0.5, -1] -> relu 0
        // out = -0.25
        let spec = NetworkSpec::dense(&[2, 2, 1]).unwrap();
        let mut theta = ParamVector::zeros(spec.param_count());
        let r = spec.param_ranges();
        theta.as_mut_slice()[r[0].weights.clone()].copy_from_slice(&[1.0, -1.0, 2.0, 0.0]);
        theta.as_mut_slice()[r[0].bias.clone()].copy_from_slice(&[0.5, 0.0]);
        theta.as_mut_slice()[r[1].weights.clone()].copy_from_slice(&[1.0, 1.0]);
        theta.as_mut_slice()[r[1].bias.clone()].copy_from_slice(&[-0.25]);
        let (outs, _) = forward(&spec, &theta, &[Vector::from_slice(&[1.0, -1.0])]).unwrap();
        assert_eq!(outs[0][0], -0.25);
        // x = [1, 1]: a1 = [1 + 2 + 0.5, -1] = [3.5, -1] -> z = [3.5, 0], out = 3.25
        let (outs, _) = forward(&spec, &theta, &[Vector::from_slice(&[1.0, 1.0])]).unwrap();
        assert_eq!(outs[0][0], 3.25);
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = NetworkSpec::conv1d_front(6, 2, 3, &[8], 2).unwrap();
        let theta = init_params(&spec, 11);
        let mut rng = CounterRng::new(12);
        let xs = random_batch(&mut rng, 4, 6);
        let (a, _) = forward(&spec, &theta, &xs).unwrap();
        let (b, _) = forward(&spec, &theta, &xs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_piecewise_linear_on_fixed_activation_pattern() {
        // Bias-free ReLU nets are positively homogeneous: if no activation
        // boundary is crossed between x and λx, forward(λx) = λ·forward(x).
        let spec = NetworkSpec::dense(&[3, 8, 8, 2]).unwrap();
        let mut theta = init_params(&spec, 13);
        for range in spec.param_ranges() {
            theta.as_mut_slice()[range.bias].fill(0.0);
        }
        let mut rng = CounterRng::new(14);
        let x = random_vec(&mut rng, 3);
        for lambda in [0.25, 0.5, 1.0] {
            let scaled = x.scale(lambda);
            let (_, trace_a) = forward(&spec, &theta, core::slice::from_ref(&x)).unwrap();
            let (out_b, trace_b) = forward(&spec, &theta, core::slice::from_ref(&scaled)).unwrap();
            // Activation patterns must match for the homogeneity claim.
            for l in 0..trace_a.layer_count() - 1 {
                let pa = trace_a.pre_activation(l);
                let pb = trace_b.pre_activation(l);
                for j in 0..pa.cols() {
                    assert_eq!(relu_mask(pa[(0, j)]), relu_mask(pb[(0, j)]));
                }
            }
            let (out_a, _) = forward(&spec, &theta, core::slice::from_ref(&x)).unwrap();
            for c in 0..2 {
                assert!((out_b[0][c] - lambda * out_a[0][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grad_zero_residuals_is_zero() {
        let spec = NetworkSpec::dense(&[2, 4, 1]).unwrap();
        let theta = init_params(&spec, 15);
        let mut rng = CounterRng::new(16);
        let xs = random_batch(&mut rng, 3, 2);
        let (ys, _) = forward(&spec, &theta, &xs).unwrap();
        let g = grad_loss(&spec, &theta, &xs, &ys, LossKind::Squared).unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn grad_matches_finite_differences_across_depths() {
        let mut rng = CounterRng::new(17);
        let cases: [(Vec<usize>, LossKind); 4] = [
            (vec![2, 6, 1], LossKind::Squared),
            (vec![3, 5, 4, 2], LossKind::Squared),
            (vec![2, 4, 4, 4, 3], LossKind::CrossEntropy),
            (vec![3, 8, 2], LossKind::CrossEntropy),
        ];
        for (dims, kind) in cases {
            let spec = NetworkSpec::dense(&dims).unwrap();
            let theta = init_params(&spec, rng.next_u64());
            let n = 4;
            let dy = *dims.last().unwrap();
            let xs = random_batch(&mut rng, n, dims[0]);
            let ys: Vec<Vector> = (0..n)
                .map(|_| match kind {
                    LossKind::Squared => random_vec(&mut rng, dy),
                    LossKind::CrossEntropy => {
                        let mut y = Vector::zeros(dy);
                        y[(rng.next_u64() as usize) % dy] = 1.0;
                        y
                    }
                })
                .collect();
            let g = grad_loss(&spec, &theta, &xs, &ys, kind).unwrap();
            let fd = fd_grad(&spec, &theta, &xs, &ys, kind);
            assert!(
                rel_err(g.as_slice(), &fd) < 1e-5,
                "dims {dims:?} err {}",
                rel_err(g.as_slice(), &fd)
            );
        }
    }

    #[test]
    fn grad_matches_finite_differences_conv() {
        let mut rng = CounterRng::new(18);
        let spec = NetworkSpec::conv1d_front(6, 2, 3, &[5], 2).unwrap();
        let theta = init_params(&spec, 19);
        let xs = random_batch(&mut rng, 3, 6);
        let ys = random_batch(&mut rng, 3, 2);
        let g = grad_loss(&spec, &theta, &xs, &ys, LossKind::Squared).unwrap();
        let fd = fd_grad(&spec, &theta, &xs, &ys, LossKind::Squared);
        assert!(rel_err(g.as_slice(), &fd) < 1e-5);
    }

    #[test]
    fn linear_regime_last_layer_grad_is_xt_r() {
        // Identity pass-through hidden layer on positive inputs: the output
        // block of the gradient is (1/n)·Z₁ᵀr with Z₁ = X.
        let d = 3;
        let spec = NetworkSpec::dense(&[d, d, 1]).unwrap();
        let mut theta = ParamVector::zeros(spec.param_count());
        let r = spec.param_ranges();
        for i in 0..d {
            theta.as_mut_slice()[r[0].weights.clone()][i * d + i] = 1.0;
        }
        theta.as_mut_slice()[r[1].weights.clone()].copy_from_slice(&[0.3, -0.7, 0.2]);
        let xs = [
            Vector::from_slice(&[0.5, 1.0, 0.25]),
            Vector::from_slice(&[1.5, 0.5, 2.0]),
        ];
        let ys = [Vector::from_slice(&[1.0]), Vector::from_slice(&[-1.0])];
        let (outs, _) = forward(&spec, &theta, &xs).unwrap();
        let g = grad_loss(&spec, &theta, &xs, &ys, LossKind::Squared).unwrap();
        let n = xs.len() as f64;
        for i in 0..d {
            let expected: f64 = xs
                .iter()
                .zip(outs.iter().zip(ys.iter()))
                .map(|(x, (f, y))| x[i] * (f[0] - y[0]))
                .sum::<f64>()
                / n;
            let got = g.as_slice()[r[1].weights.clone()][i];
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_rejects_single_output() {
        let spec = NetworkSpec::dense(&[2, 3, 1]).unwrap();
        let theta = init_params(&spec, 20);
        let xs = [Vector::from_slice(&[0.1, 0.2])];
        let ys = [Vector::from_slice(&[1.0])];
        assert!(matches!(
            grad_loss(&spec, &theta, &xs, &ys, LossKind::CrossEntropy),
            Err(CoreError::UnsupportedLoss(_))
        ));
    }

    #[test]
    fn jacobian_rows_agree_with_grad_loss_identity() {
        // For a single squared-loss sample, ∇L = rᵀ·J (n = 1).
        let spec = NetworkSpec::dense(&[2, 5, 3]).unwrap();
        let theta = init_params(&spec, 21);
        let mut rng = CounterRng::new(22);
        let x = random_vec(&mut rng, 2);
        let y = random_vec(&mut rng, 3);
        let (outs, _) = forward(&spec, &theta, core::slice::from_ref(&x)).unwrap();
        let jac = jacobian(&spec, &theta, &x).unwrap();
        let g = grad_loss(
            &spec,
            &theta,
            core::slice::from_ref(&x),
            core::slice::from_ref(&y),
            LossKind::Squared,
        )
        .unwrap();
        for p in 0..theta.len() {
            let expected: f64 = (0..3).map(|c| (outs[0][c] - y[c]) * jac[(c, p)]).sum();
            assert!((g[p] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn jacobian_zero_params_only_output_bias() {
        let spec = NetworkSpec::dense(&[2, 4, 2]).unwrap();
        let theta = ParamVector::zeros(spec.param_count());
        let jac = jacobian(&spec, &theta, &Vector::from_slice(&[0.7, -0.3])).unwrap();
        let r = spec.param_ranges();
        for c in 0..2 {
            for p in r[0].weights.clone().chain(r[0].bias.clone()) {
                assert_eq!(jac[(c, p)], 0.0);
            }
            for p in r[1].weights.clone() {
                assert_eq!(jac[(c, p)], 0.0);
            }
            for (k, p) in r[1].bias.clone().enumerate() {
                assert_eq!(jac[(c, p)], if k == c { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences_of_forward() {
        let spec = NetworkSpec::conv1d_front(5, 1, 3, &[6], 2).unwrap();
        let theta = init_params(&spec, 23);
        let mut rng = CounterRng::new(24);
        let x = random_vec(&mut rng, 5);
        let jac = jacobian(&spec, &theta, &x).unwrap();
        for c in 0..2 {
            let mut fd = vec![0.0; theta.len()];
            for p in 0..theta.len() {
                let h = 1e-5 * theta.as_slice()[p].abs().max(1.0);
                let mut plus = theta.clone();
                plus.as_mut_slice()[p] += h;
                let mut minus = theta.clone();
                minus.as_mut_slice()[p] -= h;
                let (op, _) = forward(&spec, &plus, core::slice::from_ref(&x)).unwrap();
                let (om, _) = forward(&spec, &minus, core::slice::from_ref(&x)).unwrap();
                fd[p] = (op[0][c] - om[0][c]) / (2.0 * h);
            }
            assert!(rel_err(jac.row(c), &fd) < 1e-5);
        }
    }

    #[test]
    fn spectral_norms_diagonal_and_zero() {
        let spec = NetworkSpec::dense(&[2, 2, 2]).unwrap();
        let mut theta = ParamVector::zeros(spec.param_count());
        let r = spec.param_ranges();
        theta.as_mut_slice()[r[0].weights.clone()].copy_from_slice(&[3.0, 0.0, 0.0, -5.0]);
        let s = spectral_norms(&spec, &theta);
        assert!((s[0] - 5.0).abs() < 1e-6);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn spectral_norms_match_long_power_iteration() {
        let mut rng = CounterRng::new(25);
        let w = DenseMatrix::from_fn(10, 10, |_, _| rng.normal());
        let spec = NetworkSpec::dense(&[10, 10, 1]).unwrap();
        let mut theta = init_params(&spec, 26);
        let r = spec.param_ranges();
        theta.as_mut_slice()[r[0].weights.clone()].copy_from_slice(w.data());
        let s = spectral_norms(&spec, &theta);
        let reference = mat_spectral_norm(&w, 200, 0.0);
        assert!((s[0] - reference).abs() < 1e-6);
    }

    #[test]
    fn conv_spectral_norm_is_scaled_kernel_norm() {
        let spec = NetworkSpec::conv1d_front(9, 1, 3, &[4], 1).unwrap();
        let mut theta = ParamVector::zeros(spec.param_count());
        let r = spec.param_ranges();
        theta.as_mut_slice()[r[0].weights.clone()].copy_from_slice(&[1.0, 2.0, 2.0]);
        let s = spectral_norms(&spec, &theta);
        assert!((s[0] - 3.0 * 3.0).abs() < 1e-12); // sqrt(9)·sqrt(1+4+4)
    }

    #[test]
    fn jvp_param_matches_jacobian_product() {
        let spec = NetworkSpec::conv1d_front(5, 1, 2, &[7], 3).unwrap();
        let theta = init_params(&spec, 27);
        let mut rng = CounterRng::new(28);
        let x = random_vec(&mut rng, 5);
        let dir: Vec<f64> = (0..theta.len()).map(|_| rng.normal()).collect();
        let (out, tangent) = jvp_param(&spec, &theta, &x, &dir).unwrap();
        let (fwd, _) = forward(&spec, &theta, core::slice::from_ref(&x)).unwrap();
        assert_eq!(out, fwd[0]);
        let jac = jacobian(&spec, &theta, &x).unwrap();
        for c in 0..3 {
            let expected = crate::linalg::dot(jac.row(c), &dir);
            assert!((tangent[c] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn input_grad_matches_finite_differences() {
        let spec = NetworkSpec::dense(&[4, 6, 2]).unwrap();
        let theta = init_params(&spec, 29);
        let mut rng = CounterRng::new(30);
        let x = random_vec(&mut rng, 4);
        let cot = [0.7, -1.3];
        let g = input_grad(&spec, &theta, &x, &cot).unwrap();
        for i in 0..4 {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let (op, _) = forward(&spec, &theta, core::slice::from_ref(&xp)).unwrap();
            let (om, _) = forward(&spec, &theta, core::slice::from_ref(&xm)).unwrap();
            let fd: f64 = (0..2)
                .map(|c| cot[c] * (op[0][c] - om[0][c]))
                .sum::<f64>()
                / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{} vs {fd}", g[i]);
        }
    }

    #[test]
    fn jvp_input_grad_matches_finite_differences() {
        // d/dx ⟨cot, J(x)·dir⟩ against central differences of the tangent.
        for spec in [
            NetworkSpec::dense(&[4, 6, 5, 2]).unwrap(),
            NetworkSpec::conv1d_front(4, 1, 2, &[6], 2).unwrap(),
        ] {
            let theta = init_params(&spec, 31);
            let mut rng = CounterRng::new(32);
            let x = random_vec(&mut rng, 4);
            let dir: Vec<f64> = (0..theta.len()).map(|_| rng.normal()).collect();
            let cot = [0.9, 0.4];
            let g = jvp_param_input_grad(&spec, &theta, &x, &dir, &cot).unwrap();
            for i in 0..4 {
                let h = 1e-6;
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let (_, tp) = jvp_param(&spec, &theta, &xp, &dir).unwrap();
                let (_, tm) = jvp_param(&spec, &theta, &xm, &dir).unwrap();
                let fd: f64 = (0..2)
                    .map(|c| cot[c] * (tp[c] - tm[c]))
                    .sum::<f64>()
                    / (2.0 * h);
                assert!(
                    (g[i] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                    "coord {i}: {} vs {fd}",
                    g[i]
                );
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn forward_never_produces_non_finite(seed in 0u64..1000) {
            let spec = NetworkSpec::dense(&[3, 8, 2]).unwrap();
            let theta = init_params(&spec, seed);
            let mut rng = CounterRng::new(seed ^ 0xabcd);
            let xs = random_batch(&mut rng, 3, 3);
            let (outs, _) = forward(&spec, &theta, &xs).unwrap();
            for o in outs {
                prop_assert!(o.all_finite());
            }
        }
    }
}
