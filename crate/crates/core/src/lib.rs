//! Meta-learning in the reproducing kernel Hilbert space induced by a
//! network's empirical neural tangent kernel (NTK).
//!
//! The crate implements two kernel-space meta-learning algorithms plus the
//! usual gradient-based baselines, all over small finite ReLU networks:
//!
//! - **Meta-RKHS-I** ([`meta::meta_rkhs_1_objective`]): multi-task loss minus a
//!   fast-adaptation regularizer, the squared functional-gradient norm in the
//!   NTK-induced RKHS. The kernel norm equals the parameter-space gradient
//!   norm, which is what [`ntk::functional_grad_norm_sq`] verifies against
//!   backprop.
//! - **Meta-RKHS-II** ([`adapt::adapt_closed_form`]): task adaptation solved in
//!   closed form as linearized kernel-regression dynamics,
//!   `f_t(x) = f(x) + H(x, X)·H⁻¹·(e^{−tH/n} − I)·(f(X) − Y)`, with the matrix
//!   exponential evaluated by Padé approximants ([`expm`]).
//! - **MAML / FOMAML / Reptile** ([`meta::maml_meta_grad`]) with
//!   Hessian-vector products by central differences of exact gradients.
//!
//! Everything is written against an independent verification path: a
//! reverse-mode autodiff core ([`net`]), finite-difference oracles and an RK4
//! integrator for the linearized flow ([`oracle`]), and an ℓ∞ PGD evaluation
//! harness ([`attack`]).
//!
//! The crate is `no_std`-compatible (requires `alloc`); all float math goes
//! through `libm` so results are identical with or without the `std` feature.
#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]
// Validation uses `!(x >= 0.0)`-style comparisons on purpose: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod adapt;
pub mod attack;
pub mod error;
pub mod expm;
pub mod linalg;
mod math;
pub mod meta;
pub mod net;
pub mod ntk;
pub mod oracle;
pub mod rng;
pub mod tasks;

pub use error::{CoreError, Result};
pub use linalg::{DenseMatrix, Vector};
pub use net::{LossKind, NetworkSpec, ParamVector};
pub use tasks::Task;
