//! Quasi-stationary distributions (QSDs) of finite-state absorbing Markov
//! chains.
//!
//! A strictly sub-Markovian kernel `K` loses mass to an implicit absorbing
//! state. Its QSD is the principal left eigenvector of `K`, normalized to a
//! probability vector; equivalently, the unique fixed point `α = α K_α` of
//! the regenerative Markovian kernel `K_α` that redirects absorbed mass back
//! into the state space according to `α`.
//!
//! This crate provides:
//!
//! - [`kernel`]: sub-Markovian kernels, probability vectors, the regenerative
//!   kernel `K_α`, and transition sampling.
//! - [`exact`]: oracle-grade solvers — QSD and stationary distributions by
//!   power iteration, the exact average reward, value function, and policy
//!   gradient of the KL objective.
//! - [`policy`]: softmax parametrization `α_θ`, the per-transition reward
//!   `R_θ(x,y) = -ln(K_{α_θ}(x,y)/K_{β_θ}(x,y))`, and all score/gradient
//!   formulas in exact and sampled forms.
//! - [`actor_critic`]: the three-timescale trainer coupling policy, value
//!   table, and average-reward estimate through the differential TD error.
//! - [`baselines`]: classical episode-based estimators (weighted empirical
//!   averaging, projected stochastic approximation, Polyak averaging) and the
//!   Euclidean simplex projection.
//! - [`bench`]: benchmark chain generators, error metrics, experiment
//!   orchestration, and log-log slope diagnostics.
//!
//! Core numerics are generic over the scalar type via [`Float`]; `f64` is the
//! concrete type used by the CLI and all shipped experiments.
//!
//! ```
//! use qsd::{exact, SubMarkovKernel};
//!
//! // two transient states; absorption probability 0.3 from each
//! let k: SubMarkovKernel<f64> =
//!     SubMarkovKernel::from_rows(vec![vec![0.5, 0.2], vec![0.3, 0.4]]).unwrap();
//! let alpha = exact::qsd(&k).unwrap();
//! assert!((alpha.w(0) - 0.6).abs() < 1e-10);
//! assert!((alpha.w(1) - 0.4).abs() < 1e-10);
//!
//! // the QSD is the fixed point of the regenerative kernel: α = α K_α
//! let beta = k.one_step_distribution(&alpha).unwrap();
//! assert!(alpha.l1_distance(&beta) < 1e-10);
//! ```

pub mod actor_critic;
pub mod baselines;
pub mod bench;
pub mod error;
pub mod exact;
pub mod kernel;
pub mod policy;
pub mod schedule;

pub use error::{Error, Result};
pub use kernel::{Distribution, SubMarkovKernel};
pub use policy::{SoftmaxPolicy, ValueTable};

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Scalar trait for all core numerics: `f32` and `f64` both satisfy it.
pub trait Float:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy cast from `f64`, for literals and tolerances in generic code.
    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Float")
    }

    /// Lossy cast from `usize` (state counts, iteration indices).
    fn cast_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to any Float")
    }
}

impl Float for f32 {}
impl Float for f64 {}

/// `f64` aliases for the concrete types used by the CLI and experiments.
pub type Kernel64 = SubMarkovKernel<f64>;
pub type Dist64 = Distribution<f64>;
pub type Policy64 = SoftmaxPolicy<f64>;
