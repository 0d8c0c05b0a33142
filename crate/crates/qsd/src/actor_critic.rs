//! The three-timescale trainer: sampled transitions under `K_{α_θ}`, the
//! differential TD error, and coupled updates of the policy logits `θ`, the
//! tabular value function `ψ`, and the average-reward estimate `r`.
//!
//! Per transition `(X, Y)` with `Y ~ K_{α_θ}(X, ·)`:
//!
//! ```text
//! δ  = R_θ(X,Y) - r + ψ(Y) - ψ(X)
//! θ += η^θ · ( δ·∇ln K_{α_θ}(X,Y) + ∇ln K_{β_θ}(X,Y) )
//! ψ(X) += η^ψ · δ
//! r  += η^r · δ
//! ```
//!
//! Mini-batches average the increments of `batch_size` persistent chains
//! before applying them. Chains are warm-started: each iteration advances the
//! previous iteration's end state rather than re-equilibrating to `μ_θ`.
//!
//! Chains whose exit mass is confined to a few states get no gradient signal
//! from warm-started sampling (both score terms vanish off exit-bearing
//! rows, and those rows may be visited with vanishing frequency). For such
//! chains [`TransitionSource::FixedState`] draws every transition from the
//! exit-bearing state's `K_α` row instead, which rescales the gradient by
//! the positive constant `1/μ_θ(source)` without changing its direction.

use crate::error::{Error, Result};
use crate::kernel::{Distribution, SubMarkovKernel};
use crate::policy::{BetaMode, PolicyEval, SoftmaxPolicy, ValueTable};
use crate::schedule::Schedule;
use crate::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

/// Equilibration length used to draw the initial chain states approximately
/// from `μ_{θ₀}`: a uniform-random start advanced this many steps.
pub const INITIAL_EQUILIBRATION_STEPS: usize = 100;

/// How `β_θ` enters the sampled updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaConfig {
    /// Dense exact `β = α K_α` once per iteration.
    Exact,
    /// Single-sample estimator `β̂ = K_α(X_t, ·)` per transition, reusing the
    /// current chain state as the one draw from `α`.
    Stochastic,
}

/// Where the trainer's transitions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionSource {
    /// `batch_size` persistent warm-started chains under `K_{α_θ}`.
    WarmChains,
    /// Every transition starts at the given state; `Y ~ K_α(state, ·)`.
    FixedState(usize),
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone)]
pub struct TrainerConfig<F> {
    pub eta_theta: Schedule<F>,
    pub eta_psi: Schedule<F>,
    pub eta_r: Schedule<F>,
    pub batch_size: usize,
    /// Warm-start steps advanced per chain before each consumed transition.
    pub burn_in: usize,
    pub max_iters: u64,
    pub seed: u64,
    pub beta_mode: BetaConfig,
    pub source: TransitionSource,
}

impl<F: Float> TrainerConfig<F> {
    fn check(&self, n_states: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        for (name, s) in [
            ("eta_theta", &self.eta_theta),
            ("eta_psi", &self.eta_psi),
            ("eta_r", &self.eta_r),
        ] {
            if !s.is_positive() {
                return Err(Error::InvalidParameter(format!(
                    "{name} schedule must be positive"
                )));
            }
        }
        if let TransitionSource::FixedState(s) = self.source {
            if s >= n_states {
                return Err(Error::StateOutOfRange {
                    state: s,
                    n_states,
                });
            }
        }
        Ok(())
    }
}

/// Initial values `(θ₀, ψ₀, r₀)`.
#[derive(Debug, Clone)]
pub struct TrainerInit<F> {
    pub theta0: Vec<F>,
    pub psi0: Vec<F>,
    pub r0: F,
}

impl<F: Float> TrainerInit<F> {
    /// `θ₀ = 0`, `ψ₀ = 0`, `r₀ = 0` on `n` states.
    pub fn zeros(n_states: usize) -> Self {
        Self {
            theta0: vec![F::zero(); n_states - 1],
            psi0: vec![F::zero(); n_states],
            r0: F::zero(),
        }
    }

    pub fn with_theta(theta0: Vec<F>) -> Self {
        let n = theta0.len() + 1;
        Self {
            theta0,
            psi0: vec![F::zero(); n],
            r0: F::zero(),
        }
    }
}

/// Mutable trainer state: the current policy, value table, chain positions,
/// and iteration counter.
#[derive(Debug, Clone)]
pub struct TrainerState<F> {
    pub policy: SoftmaxPolicy<F>,
    pub values: ValueTable<F>,
    pub chain_states: Vec<usize>,
    pub iteration: u64,
}

/// The differential TD error `δ = R_θ(x,y) - r + ψ(y) - ψ(x)` at the
/// state's current parameters (exact `β`).
pub fn td_error<F: Float>(
    kernel: &SubMarkovKernel<F>,
    state: &TrainerState<F>,
    x: usize,
    y: usize,
) -> Result<F> {
    let eval = PolicyEval::exact(kernel, &state.policy)?;
    Ok(eval.reward(x, y)? - state.values.r_estimate + state.values.psi[y]
        - state.values.psi[x])
}

/// One per-iteration metrics row. `wall_ms` is measured and kept in memory
/// for timing summaries; the CSV emitter leaves that column blank so output
/// files stay byte-identical across runs with equal seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    pub l2_error: Option<f64>,
    pub r_estimate: Option<f64>,
    pub wall_ms: f64,
}

/// Per-iteration metrics of one run, shared by the trainer and the
/// baselines.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with the pinned header `iteration,l2_error,r_estimate,wall_ms`.
    /// Optional fields and the wall column are left blank (see [`TraceRow`]).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,l2_error,r_estimate,wall_ms\n");
        for row in &self.rows {
            let l2 = row.l2_error.map(|v| format!("{v}")).unwrap_or_default();
            let r = row.r_estimate.map(|v| format!("{v}")).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},", row.iteration, l2, r);
        }
        out
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Seconds from run start until the error first drops to `threshold`.
    pub fn seconds_to_error(&self, threshold: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|row| row.l2_error.is_some_and(|e| e <= threshold))
            .map(|row| row.wall_ms / 1000.0)
    }

    /// Final recorded error, if any row carries one.
    pub fn final_error(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.l2_error)
    }
}

/// The trainer; owns the evolving state and one random stream per batch
/// chain (streams of a counter-based generator keyed by the config seed, so
/// results do not depend on scheduling).
pub struct Trainer<'k, F: Float> {
    kernel: &'k SubMarkovKernel<F>,
    config: TrainerConfig<F>,
    state: TrainerState<F>,
    rngs: Vec<ChaCha8Rng>,
}

impl<'k, F: Float> Trainer<'k, F> {
    /// Validates the config, seeds the per-chain streams, and equilibrates
    /// the initial chain states toward `μ_{θ₀}` (uniform-random starts
    /// advanced [`INITIAL_EQUILIBRATION_STEPS`] steps under `K_{α_θ₀}`).
    pub fn new(
        kernel: &'k SubMarkovKernel<F>,
        config: TrainerConfig<F>,
        init: TrainerInit<F>,
    ) -> Result<Self> {
        let n = kernel.n_states();
        config.check(n)?;
        if init.theta0.len() != n - 1 {
            return Err(Error::LengthMismatch {
                left: init.theta0.len(),
                right: n - 1,
            });
        }
        if init.psi0.len() != n {
            return Err(Error::LengthMismatch {
                left: init.psi0.len(),
                right: n,
            });
        }
        let policy = SoftmaxPolicy::new(init.theta0);
        let mut rngs: Vec<ChaCha8Rng> = (0..config.batch_size)
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(c as u64);
                rng
            })
            .collect();

        let alpha = policy.alpha();
        let sampler = alpha.sampler();
        let chain_states = match config.source {
            TransitionSource::FixedState(s) => vec![s; config.batch_size],
            TransitionSource::WarmChains => rngs
                .iter_mut()
                .map(|rng| {
                    let mut x = Distribution::<F>::uniform(n).sample(rng);
                    for _ in 0..INITIAL_EQUILIBRATION_STEPS {
                        x = kernel.sample_transition_with(&sampler, x, rng);
                    }
                    x
                })
                .collect(),
        };

        Ok(Self {
            kernel,
            config,
            state: TrainerState {
                policy,
                values: ValueTable::new(init.psi0, init.r0),
                chain_states,
                iteration: 0,
            },
            rngs,
        })
    }

    pub fn state(&self) -> &TrainerState<F> {
        &self.state
    }

    pub fn config(&self) -> &TrainerConfig<F> {
        &self.config
    }

    /// One iteration: sample a batch of transitions at the current policy,
    /// compute TD errors, and apply the batch-averaged updates.
    pub fn step(&mut self) -> Result<()> {
        let n = self.kernel.n_states();
        let dim = n - 1;
        let alpha = self.state.policy.alpha();
        let sampler = alpha.sampler();
        let exact_eval = match self.config.beta_mode {
            BetaConfig::Exact => Some(PolicyEval::from_alpha(self.kernel, alpha.clone())?),
            BetaConfig::Stochastic => None,
        };

        let psi = &self.state.values.psi;
        let r_est = self.state.values.r_estimate;
        let mut acc_theta = vec![F::zero(); dim];
        let mut acc_psi = vec![F::zero(); n];
        let mut acc_r = F::zero();

        for c in 0..self.config.batch_size {
            let rng = &mut self.rngs[c];
            let x = match self.config.source {
                TransitionSource::FixedState(s) => s,
                TransitionSource::WarmChains => {
                    let mut x = self.state.chain_states[c];
                    for _ in 0..self.config.burn_in {
                        x = self.kernel.sample_transition_with(&sampler, x, rng);
                    }
                    x
                }
            };
            let y = self.kernel.sample_transition_with(&sampler, x, rng);

            let (reward, glka, glkb) = match &exact_eval {
                Some(eval) => (
                    eval.reward(x, y)?,
                    eval.grad_log_k_alpha(x, y)?,
                    eval.grad_log_k_beta(x, y, BetaMode::Exact)?,
                ),
                None => {
                    // single-sample β̂ = K_α(x,·): the current state stands in
                    // for the one draw Z ~ α
                    let beta_hat = self.kernel.k_alpha_row(&alpha, x)?;
                    let eval =
                        PolicyEval::with_beta(self.kernel, alpha.clone(), beta_hat);
                    let zs = [x];
                    (
                        eval.reward(x, y)?,
                        eval.grad_log_k_alpha(x, y)?,
                        eval.grad_log_k_beta(x, y, BetaMode::Samples(&zs))?,
                    )
                }
            };

            let delta = reward - r_est + psi[y] - psi[x];
            for ((acc, ga), gb) in acc_theta.iter_mut().zip(&glka).zip(&glkb) {
                *acc += delta * *ga + *gb;
            }
            acc_psi[x] += delta;
            acc_r += delta;

            if let TransitionSource::WarmChains = self.config.source {
                self.state.chain_states[c] = y;
            }
        }

        let t = self.state.iteration + 1; // schedules are 1-indexed
        let inv_b = F::one() / F::cast_usize(self.config.batch_size);
        let eta_t = self.config.eta_theta.at(t) * inv_b;
        let eta_p = self.config.eta_psi.at(t) * inv_b;
        let eta_r = self.config.eta_r.at(t) * inv_b;

        for (th, acc) in self
            .state
            .policy
            .theta_mut()
            .iter_mut()
            .zip(&acc_theta)
        {
            *th += eta_t * *acc;
        }
        for (p, acc) in self.state.values.psi.iter_mut().zip(&acc_psi) {
            *p += eta_p * *acc;
        }
        self.state.values.r_estimate += eta_r * acc_r;
        self.state.iteration += 1;
        Ok(())
    }

    /// Runs `max_iters` iterations, recording one [`TraceRow`] per iteration
    /// (L2 distance of `α_{θ_t}` to `reference` when given).
    pub fn train(&mut self, reference: Option<&Distribution<F>>) -> Result<Trace> {
        let start = Instant::now();
        let mut trace = Trace::default();
        for _ in 0..self.config.max_iters {
            self.step()?;
            let l2_error = reference.map(|target| {
                let alpha = self.state.policy.alpha();
                crate::bench::l2_error(&alpha, target)
                    .expect("reference length checked at start")
                    .to_f64()
                    .unwrap_or(f64::NAN)
            });
            trace.rows.push(TraceRow {
                iteration: self.state.iteration,
                l2_error,
                r_estimate: self.state.values.r_estimate.to_f64(),
                wall_ms: start.elapsed().as_secs_f64() * 1000.0,
            });
        }
        Ok(trace)
    }
}

/// Builds a trainer and runs it to `config.max_iters`.
pub fn train<F: Float>(
    kernel: &SubMarkovKernel<F>,
    config: TrainerConfig<F>,
    init: TrainerInit<F>,
    reference: Option<&Distribution<F>>,
) -> Result<(Trace, TrainerState<F>)> {
    if let Some(target) = reference {
        if target.len() != kernel.n_states() {
            return Err(Error::LengthMismatch {
                left: target.len(),
                right: kernel.n_states(),
            });
        }
    }
    let mut trainer = Trainer::new(kernel, config, init)?;
    let trace = trainer.train(reference)?;
    Ok((trace, trainer.state))
}

/// Dense-sum expectations of the three per-transition increments under
/// `(X,Y) ~ μ ⊗ K_α` at fixed parameters, with exact `β`:
/// the θ-increment `E[δ·∇lnK_α + ∇lnK_β]`, the ψ-increment `E[δ·e_X]`, and
/// the r-increment `E[δ]`. No sampling; used for fixed-point and
/// unbiasedness checks.
pub fn expected_increments<F: Float>(
    kernel: &SubMarkovKernel<F>,
    policy: &SoftmaxPolicy<F>,
    values: &ValueTable<F>,
    mu: &Distribution<F>,
) -> Result<(Vec<F>, Vec<F>, F)> {
    let n = kernel.n_states();
    let eval = PolicyEval::exact(kernel, policy)?;
    let mut g_theta = vec![F::zero(); n - 1];
    let mut g_psi = vec![F::zero(); n];
    let mut g_r = F::zero();
    for x in 0..n {
        let mx = mu.w(x);
        if mx == F::zero() {
            continue;
        }
        for y in 0..n {
            let ka = eval.k_alpha(x, y);
            if ka <= F::zero() {
                continue;
            }
            let weight = mx * ka;
            let delta =
                eval.reward(x, y)? - values.r_estimate + values.psi[y] - values.psi[x];
            let glka = eval.grad_log_k_alpha(x, y)?;
            let glkb = eval.grad_log_k_beta(x, y, BetaMode::Exact)?;
            for ((g, a), b) in g_theta.iter_mut().zip(&glka).zip(&glkb) {
                *g += weight * (delta * *a + *b);
            }
            g_psi[x] += weight * delta;
            g_r += weight * delta;
        }
    }
    Ok((g_theta, g_psi, g_r))
}
