//! Softmax policy `α_θ`, tabular value function, the per-transition reward,
//! and the score/gradient formulas used by both the exact solvers and the
//! sampled trainer.
//!
//! With `P_θ = K_{α_θ}` and `Q_θ = K_{β_θ}` (where `β_θ = α_θ K_{α_θ}`), the
//! one-step reward is
//!
//! ```text
//! R_θ(x,y) = -ln( K_{α_θ}(x,y) / K_{β_θ}(x,y) )
//! ```
//!
//! and the average reward `r(θ) = E[R_θ] ≤ 0` vanishes exactly at the QSD.
//! Gradients reduce to softmax scores:
//!
//! ```text
//! ∇ ln K_{α_θ}(x,y) = exit(x)/K_{α_θ}(x,y) · ∇α_θ(y)
//! ∇ ln K_{β_θ}(x,y) = exit(x)/K_{β_θ}(x,y) · ∇β_θ(y)
//! ```
//!
//! `∇β_θ` is available exactly (a dense sum that collapses to `O(N)` per
//! state) or as the sampled estimator used for large state spaces.

use crate::error::{Error, Result};
use crate::kernel::{Distribution, SubMarkovKernel};
use crate::Float;
use std::fmt::Write as _;
use std::path::Path;

/// Softmax parametrization of a distribution on `N` states: `θ ∈ ℝ^{N-1}`,
/// the last logit pinned to 0, `α_θ(i) ∝ exp(θ_i)`.
///
/// Every finite `θ` induces a full-support distribution, so all logarithms
/// and score functions downstream are well posed.
///
/// ```
/// use qsd::SoftmaxPolicy;
/// let alpha = SoftmaxPolicy::new(vec![0.0f64]).alpha(); // two states
/// assert_eq!(alpha.weights(), &[0.5, 0.5]);
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy<F> {
    theta: Vec<F>,
}

impl<F: Float> SoftmaxPolicy<F> {
    /// Policy on `theta.len() + 1` states.
    pub fn new(theta: Vec<F>) -> Self {
        Self { theta }
    }

    /// Zero logits: the uniform distribution on `n` states.
    pub fn zeros(n_states: usize) -> Self {
        Self {
            theta: vec![F::zero(); n_states - 1],
        }
    }

    /// Logits reproducing a full-support distribution exactly:
    /// `θ_i = ln(w_i / w_{N-1})`.
    pub fn encoding(dist: &Distribution<F>) -> Result<Self> {
        if !dist.full_support() {
            return Err(Error::InvalidParameter(
                "softmax encoding requires full support".into(),
            ));
        }
        let last = dist.w(dist.len() - 1);
        let theta = dist.weights()[..dist.len() - 1]
            .iter()
            .map(|&w| (w / last).ln())
            .collect();
        Ok(Self { theta })
    }

    pub fn n_states(&self) -> usize {
        self.theta.len() + 1
    }

    pub fn theta(&self) -> &[F] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [F] {
        &mut self.theta
    }

    /// The induced distribution, via the max-subtracted stable softmax.
    pub fn alpha(&self) -> Distribution<F> {
        let n = self.n_states();
        let max_logit = self
            .theta
            .iter()
            .copied()
            .fold(F::zero(), F::max); // pinned last logit is 0
        let mut weights = Vec::with_capacity(n);
        let mut sum = F::zero();
        for i in 0..n {
            let logit = if i < n - 1 { self.theta[i] } else { F::zero() };
            let e = (logit - max_logit).exp();
            weights.push(e);
            sum += e;
        }
        for w in &mut weights {
            *w /= sum;
        }
        Distribution::new_unchecked(weights)
    }

    /// Score of the softmax: component `j` of `∇_θ ln α_θ(x)` is
    /// `1{x=j} - α_θ(j)`.
    pub fn grad_log_alpha(&self, x: usize) -> Vec<F> {
        let alpha = self.alpha();
        self.grad_log_alpha_with(&alpha, x)
    }

    /// Same, reusing a precomputed `α = alpha()`.
    pub fn grad_log_alpha_with(&self, alpha: &Distribution<F>, x: usize) -> Vec<F> {
        (0..self.theta.len())
            .map(|j| {
                let indicator = if x == j { F::one() } else { F::zero() };
                indicator - alpha.w(j)
            })
            .collect()
    }

    /// Serializes as CSV lines `index,value`, one per component of `θ`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (i, t) in self.theta.iter().enumerate() {
            let _ = writeln!(out, "{i},{t}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let theta = parse_indexed_csv(text)?;
        Ok(Self { theta })
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Tabular value function with the running average-reward estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable<F> {
    pub psi: Vec<F>,
    pub r_estimate: F,
}

impl<F: Float> ValueTable<F> {
    pub fn zeros(n_states: usize) -> Self {
        Self {
            psi: vec![F::zero(); n_states],
            r_estimate: F::zero(),
        }
    }

    pub fn new(psi: Vec<F>, r_estimate: F) -> Self {
        Self { psi, r_estimate }
    }

    /// CSV lines `index,value` for `ψ`, then a final `r,<value>` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (i, v) in self.psi.iter().enumerate() {
            let _ = writeln!(out, "{i},{v}");
        }
        let _ = writeln!(out, "r,{}", self.r_estimate);
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut psi = Vec::new();
        let mut r_estimate = F::zero();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line == "index,value" {
                continue;
            }
            let (idx, val) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {lineno}: expected index,value")))?;
            let v = val
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?;
            if idx.trim() == "r" {
                r_estimate = F::cast(v);
            } else {
                psi.push(F::cast(v));
            }
        }
        Ok(Self { psi, r_estimate })
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

fn parse_indexed_csv<F: Float>(text: &str) -> Result<Vec<F>> {
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == "index,value" {
            continue;
        }
        let (_, val) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {lineno}: expected index,value")))?;
        let v = val
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?;
        values.push(F::cast(v));
    }
    Ok(values)
}

/// How `β_θ` (and its gradient) are obtained.
#[derive(Debug, Clone, Copy)]
pub enum BetaMode<'a> {
    /// The dense exact sum `β = α K_α`.
    Exact,
    /// The sampled estimator `β̂(y) = (1/n) Σ_i K_α(Z_i, y)` over the given
    /// states `Z_i ~ α`. With `n = 1` and `Z₁` the current chain state this
    /// is the single-sample shortcut: `β̂ = K_α(X_t, ·)`.
    Samples(&'a [usize]),
}

/// Precomputed per-`α` quantities: `α`, `β`, and the expected exit mass.
/// Build once per policy iterate, evaluate rewards/gradients many times.
pub struct PolicyEval<'k, F> {
    kernel: &'k SubMarkovKernel<F>,
    alpha: Distribution<F>,
    beta: Distribution<F>,
    expected_exit: F,
}

impl<'k, F: Float> PolicyEval<'k, F> {
    /// Exact `β` from a softmax policy.
    pub fn exact(kernel: &'k SubMarkovKernel<F>, policy: &SoftmaxPolicy<F>) -> Result<Self> {
        Self::from_alpha(kernel, policy.alpha())
    }

    /// Exact `β` from an arbitrary distribution `α`.
    pub fn from_alpha(kernel: &'k SubMarkovKernel<F>, alpha: Distribution<F>) -> Result<Self> {
        let beta = kernel.one_step_distribution(&alpha)?;
        let expected_exit = kernel.expected_exit(&alpha);
        Ok(Self {
            kernel,
            alpha,
            beta,
            expected_exit,
        })
    }

    /// Caller-supplied `β` (e.g. the sampled estimator).
    pub fn with_beta(
        kernel: &'k SubMarkovKernel<F>,
        alpha: Distribution<F>,
        beta: Distribution<F>,
    ) -> Self {
        let expected_exit = kernel.expected_exit(&alpha);
        Self {
            kernel,
            alpha,
            beta,
            expected_exit,
        }
    }

    pub fn kernel(&self) -> &SubMarkovKernel<F> {
        self.kernel
    }

    pub fn alpha(&self) -> &Distribution<F> {
        &self.alpha
    }

    pub fn beta(&self) -> &Distribution<F> {
        &self.beta
    }

    /// `Σ_x α(x)·exit_mass(x)`.
    pub fn expected_exit(&self) -> F {
        self.expected_exit
    }

    pub fn k_alpha(&self, x: usize, y: usize) -> F {
        self.kernel.entry(x, y) + self.kernel.exit_mass(x) * self.alpha.w(y)
    }

    pub fn k_beta(&self, x: usize, y: usize) -> F {
        self.kernel.entry(x, y) + self.kernel.exit_mass(x) * self.beta.w(y)
    }

    /// `R_θ(x,y) = -ln(K_α(x,y)/K_β(x,y))`; exactly 0 on rows with no exit
    /// mass (both kernels coincide there, `0·ln(0/0) := 0`).
    pub fn reward(&self, x: usize, y: usize) -> Result<F> {
        if self.kernel.exit_mass(x) == F::zero() {
            return Ok(F::zero());
        }
        let ka = self.k_alpha(x, y);
        if ka <= F::zero() {
            return Err(Error::ZeroProbabilityTransition { x, y });
        }
        let kb = self.k_beta(x, y);
        Ok(-(ka / kb).ln())
    }

    /// `∇_θ α_θ(y)`: component `j` is `α(y)·(1{y=j} - α(j))`.
    pub fn grad_alpha(&self, y: usize) -> Vec<F> {
        let ay = self.alpha.w(y);
        (0..self.alpha.len() - 1)
            .map(|j| {
                let indicator = if y == j { F::one() } else { F::zero() };
                ay * (indicator - self.alpha.w(j))
            })
            .collect()
    }

    /// `∇_θ ln K_α(x,y) = exit(x)/K_α(x,y) · ∇α(y)`; the zero vector on rows
    /// with no exit mass.
    pub fn grad_log_k_alpha(&self, x: usize, y: usize) -> Result<Vec<F>> {
        let e = self.kernel.exit_mass(x);
        if e == F::zero() {
            return Ok(vec![F::zero(); self.alpha.len() - 1]);
        }
        let ka = self.k_alpha(x, y);
        if ka <= F::zero() {
            return Err(Error::ZeroProbabilityTransition { x, y });
        }
        let scale = e / ka;
        Ok(self.grad_alpha(y).into_iter().map(|g| scale * g).collect())
    }

    /// Exact `∇_θ β_θ(y)`. The dense sum
    /// `Σ_x ∇α(x)[K(x,y) + exit(x)α(y)] + (Σ_x α(x)exit(x))·∇α(y)`
    /// collapses to the `O(N)` closed form
    /// `[∇β(y)]_j = α(j)(K_α(j,y) - β(y)) + E_exit·[∇α(y)]_j`.
    pub fn grad_beta_exact(&self, y: usize) -> Vec<F> {
        let n = self.alpha.len();
        let beta_y = self.beta.w(y);
        let ay = self.alpha.w(y);
        (0..n - 1)
            .map(|j| {
                let first = self.alpha.w(j) * (self.k_alpha(j, y) - beta_y);
                let indicator = if y == j { F::one() } else { F::zero() };
                let second = self.expected_exit * ay * (indicator - self.alpha.w(j));
                first + second
            })
            .collect()
    }

    /// Sampled `∇β(y)` over the states `zs` (each `Z_i ~ α`):
    /// `(1/n) Σ_i ∇lnα(Z_i)·K_α(Z_i,y) + exit(Z_i)·∇α(y)`.
    pub fn grad_beta_samples(&self, y: usize, zs: &[usize]) -> Vec<F> {
        let n = self.alpha.len();
        let mut grad = vec![F::zero(); n - 1];
        let ay = self.alpha.w(y);
        for &z in zs {
            let kaz = self.k_alpha(z, y);
            let ez = self.kernel.exit_mass(z);
            for (j, g) in grad.iter_mut().enumerate() {
                let score = if z == j { F::one() } else { F::zero() } - self.alpha.w(j);
                let indicator = if y == j { F::one() } else { F::zero() };
                *g += score * kaz + ez * ay * (indicator - self.alpha.w(j));
            }
        }
        let inv_n = F::one() / F::cast_usize(zs.len().max(1));
        for g in &mut grad {
            *g *= inv_n;
        }
        grad
    }

    /// `∇_θ ln K_β(x,y) = exit(x)/K_β(x,y) · ∇β(y)` with `∇β` per `mode`;
    /// the zero vector on rows with no exit mass.
    pub fn grad_log_k_beta(&self, x: usize, y: usize, mode: BetaMode<'_>) -> Result<Vec<F>> {
        let e = self.kernel.exit_mass(x);
        if e == F::zero() {
            return Ok(vec![F::zero(); self.alpha.len() - 1]);
        }
        let kb = self.k_beta(x, y);
        if kb <= F::zero() {
            return Err(Error::ZeroProbabilityTransition { x, y });
        }
        let scale = e / kb;
        let grad = match mode {
            BetaMode::Exact => self.grad_beta_exact(y),
            BetaMode::Samples(zs) => self.grad_beta_samples(y, zs),
        };
        Ok(grad.into_iter().map(|g| scale * g).collect())
    }
}

/// The distribution induced by `θ`.
pub fn alpha_of<F: Float>(policy: &SoftmaxPolicy<F>) -> Distribution<F> {
    policy.alpha()
}

/// `β_θ` per the requested mode: exact one-step distribution, or the sampled
/// estimator `β̂(y) = (1/n) Σ_i [K(Z_i,y) + exit(Z_i)·α(y)]`.
pub fn beta_of<F: Float>(
    kernel: &SubMarkovKernel<F>,
    policy: &SoftmaxPolicy<F>,
    mode: BetaMode<'_>,
) -> Result<Distribution<F>> {
    let alpha = policy.alpha();
    match mode {
        BetaMode::Exact => kernel.one_step_distribution(&alpha),
        BetaMode::Samples(zs) => {
            if zs.is_empty() {
                return Err(Error::InvalidParameter(
                    "sampled beta estimate needs at least one state".into(),
                ));
            }
            let n = kernel.n_states();
            let mut weights = vec![F::zero(); n];
            for &z in zs {
                let row = kernel.k_alpha_row(&alpha, z)?;
                for (w, &v) in weights.iter_mut().zip(row.weights()) {
                    *w += v;
                }
            }
            let inv = F::one() / F::cast_usize(zs.len());
            for w in &mut weights {
                *w *= inv;
            }
            Ok(Distribution::new_unchecked(weights))
        }
    }
}

/// `R_θ(x,y)`; see [`PolicyEval::reward`].
pub fn reward<F: Float>(
    kernel: &SubMarkovKernel<F>,
    policy: &SoftmaxPolicy<F>,
    x: usize,
    y: usize,
) -> Result<F> {
    PolicyEval::exact(kernel, policy)?.reward(x, y)
}

/// `∇_θ ln K_{α_θ}(x,y)`; see [`PolicyEval::grad_log_k_alpha`].
pub fn grad_log_k_alpha<F: Float>(
    kernel: &SubMarkovKernel<F>,
    policy: &SoftmaxPolicy<F>,
    x: usize,
    y: usize,
) -> Result<Vec<F>> {
    PolicyEval::exact(kernel, policy)?.grad_log_k_alpha(x, y)
}

/// Exact `∇_θ β_θ(y)`; see [`PolicyEval::grad_beta_exact`].
pub fn grad_beta_exact<F: Float>(
    kernel: &SubMarkovKernel<F>,
    policy: &SoftmaxPolicy<F>,
    y: usize,
) -> Result<Vec<F>> {
    Ok(PolicyEval::exact(kernel, policy)?.grad_beta_exact(y))
}

/// `∇_θ ln K_{β_θ}(x,y)`; see [`PolicyEval::grad_log_k_beta`].
pub fn grad_log_k_beta<F: Float>(
    kernel: &SubMarkovKernel<F>,
    policy: &SoftmaxPolicy<F>,
    x: usize,
    y: usize,
    mode: BetaMode<'_>,
) -> Result<Vec<F>> {
    PolicyEval::exact(kernel, policy)?.grad_log_k_beta(x, y, mode)
}
