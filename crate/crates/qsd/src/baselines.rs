//! Episode-based comparison algorithms.
//!
//! All three restart an absorbed chain from the current estimate `α_n` each
//! episode and correct `α_n` with the episode's visit counts:
//!
//! - **vanilla**: the τ-weighted empirical average
//!   `α_{n+1}(x) = α_n(x) + (visits(x) - τ·α_n(x)) / Σ_{j≤n+1} τ⁽ʲ⁾`,
//!   which preserves the simplex identically;
//! - **projection**: the stochastic-approximation step
//!   `α_{n+1} = Π[α_n + ε_n(visits - τ·α_n)]` with `Π` the Euclidean
//!   projection onto the probability simplex;
//! - **polyak**: the running mean of the projection iterates.
//!
//! Episodes run under the absorbed chain itself (no regeneration), so on
//! chains whose absorbing set is hard to reach the extinction time can be
//! astronomically large; a runaway guard aborts past [`RUNAWAY_GUARD`]
//! steps, and an explicit cap can truncate episodes instead (a biased but
//! bounded-cost estimate).

use crate::actor_critic::{Trace, TraceRow};
use crate::error::{Error, Result};
use crate::kernel::{Distribution, SubMarkovKernel};
use crate::schedule::Schedule;
use crate::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Hard abort threshold for a single episode.
pub const RUNAWAY_GUARD: u64 = 1_000_000_000;

/// Occupation counts of one episode: `visits(x)` over `X_0..X_{τ-1}` and the
/// extinction time `τ`. `Σ visits = τ ≥ 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeTrace {
    pub visits: Vec<u64>,
    pub extinction_time: u64,
}

/// Runs the absorbed chain from `X₀ ~ α_n` until absorption. Errors with
/// [`Error::RunawayEpisode`] past [`RUNAWAY_GUARD`] steps.
pub fn simulate_episode<F: Float, R: Rng + ?Sized>(
    kernel: &SubMarkovKernel<F>,
    alpha_n: &Distribution<F>,
    rng: &mut R,
) -> Result<EpisodeTrace> {
    simulate_episode_impl(kernel, alpha_n, None, rng)
}

/// Like [`simulate_episode`], but truncates at `cap` steps and reports the
/// occupation so far with `τ = cap`. Truncation biases the estimate toward
/// the occupation measure conditioned on survival.
pub fn simulate_episode_capped<F: Float, R: Rng + ?Sized>(
    kernel: &SubMarkovKernel<F>,
    alpha_n: &Distribution<F>,
    cap: u64,
    rng: &mut R,
) -> Result<EpisodeTrace> {
    if cap == 0 {
        return Err(Error::InvalidParameter("episode cap must be >= 1".into()));
    }
    simulate_episode_impl(kernel, alpha_n, Some(cap), rng)
}

fn simulate_episode_impl<F: Float, R: Rng + ?Sized>(
    kernel: &SubMarkovKernel<F>,
    alpha_n: &Distribution<F>,
    cap: Option<u64>,
    rng: &mut R,
) -> Result<EpisodeTrace> {
    let mut visits = vec![0u64; kernel.n_states()];
    let mut x = alpha_n.sample(rng);
    let mut tau = 0u64;
    loop {
        visits[x] += 1;
        tau += 1;
        if let Some(c) = cap {
            if tau >= c {
                return Ok(EpisodeTrace {
                    visits,
                    extinction_time: tau,
                });
            }
        }
        if tau > RUNAWAY_GUARD {
            return Err(Error::RunawayEpisode {
                guard: RUNAWAY_GUARD,
            });
        }
        match kernel.sample_sub_transition(x, rng) {
            Some(y) => x = y,
            None => {
                return Ok(EpisodeTrace {
                    visits,
                    extinction_time: tau,
                })
            }
        }
    }
}

/// One step of the τ-weighted empirical update. `tau_running_sum` holds
/// `Σ_{j≤n} τ⁽ʲ⁾`; the new episode's τ enters the denominator before the
/// innovation is applied. Returns the updated pair. The update preserves
/// `Σ α = 1` identically (the innovation sums to zero by construction).
pub fn vanilla_update<F: Float>(
    alpha_n: &Distribution<F>,
    episode: &EpisodeTrace,
    _n: u64,
    tau_running_sum: u64,
) -> Result<(Distribution<F>, u64)> {
    if episode.visits.len() != alpha_n.len() {
        return Err(Error::LengthMismatch {
            left: episode.visits.len(),
            right: alpha_n.len(),
        });
    }
    let new_sum = tau_running_sum + episode.extinction_time;
    let denom = F::cast(new_sum as f64);
    let tau = F::cast(episode.extinction_time as f64);
    let weights = alpha_n
        .weights()
        .iter()
        .zip(&episode.visits)
        .map(|(&a, &v)| a + (F::cast(v as f64) - tau * a) / denom)
        .collect();
    Ok((Distribution::new_unchecked(weights), new_sum))
}

/// Euclidean projection onto the probability simplex by sort and threshold:
/// the unique `w ≥ 0, Σw = 1` minimizing `‖w - v‖₂`, characterized by
/// `w_i = max(v_i - λ, 0)` for the thresholding `λ`. `O(m log m)`.
pub fn project_simplex<F: Float>(v: &[F]) -> Distribution<F> {
    let m = v.len();
    debug_assert!(m > 0);
    let mut sorted: Vec<F> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut prefix = F::zero();
    let mut lambda = F::zero();
    let mut rho = 0usize;
    for (i, &u) in sorted.iter().enumerate() {
        prefix += u;
        let k = F::cast_usize(i + 1);
        let candidate = (prefix - F::one()) / k;
        if u - candidate > F::zero() {
            lambda = candidate;
            rho = i + 1;
        }
    }
    debug_assert!(rho > 0);
    let weights: Vec<F> = v.iter().map(|&x| (x - lambda).max(F::zero())).collect();
    // renormalize away the O(ulp) drift from the thresholding arithmetic
    let sum: F = weights.iter().copied().sum();
    Distribution::new_unchecked(weights.into_iter().map(|w| w / sum).collect())
}

/// One projected stochastic-approximation step:
/// `α_{n+1} = Π[α_n + ε_n·(visits - τ·α_n)]`.
pub fn projection_update<F: Float>(
    alpha_n: &Distribution<F>,
    episode: &EpisodeTrace,
    eps_n: F,
) -> Result<Distribution<F>> {
    if episode.visits.len() != alpha_n.len() {
        return Err(Error::LengthMismatch {
            left: episode.visits.len(),
            right: alpha_n.len(),
        });
    }
    if eps_n <= F::zero() {
        return Err(Error::InvalidParameter("eps_n must be positive".into()));
    }
    let tau = F::cast(episode.extinction_time as f64);
    let shifted: Vec<F> = alpha_n
        .weights()
        .iter()
        .zip(&episode.visits)
        .map(|(&a, &v)| a + eps_n * (F::cast(v as f64) - tau * a))
        .collect();
    Ok(project_simplex(&shifted))
}

/// Streaming Polyak-Ruppert mean: `ν_n = ν_{n-1} + (α_n - ν_{n-1})/n`,
/// `n ≥ 1`.
pub fn polyak_average<F: Float>(
    running_mean: &Distribution<F>,
    alpha_n: &Distribution<F>,
    n: u64,
) -> Result<Distribution<F>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if running_mean.len() != alpha_n.len() {
        return Err(Error::LengthMismatch {
            left: running_mean.len(),
            right: alpha_n.len(),
        });
    }
    let inv_n = F::one() / F::cast(n as f64);
    let weights = running_mean
        .weights()
        .iter()
        .zip(alpha_n.weights())
        .map(|(&m, &a)| m + (a - m) * inv_n)
        .collect();
    Ok(Distribution::new_unchecked(weights))
}

/// Which episode-based estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Vanilla,
    Projection,
    Polyak,
}

impl BaselineMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineMethod::Vanilla => "vanilla",
            BaselineMethod::Projection => "projection",
            BaselineMethod::Polyak => "polyak",
        }
    }
}

impl std::str::FromStr for BaselineMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(BaselineMethod::Vanilla),
            "projection" => Ok(BaselineMethod::Projection),
            "polyak" => Ok(BaselineMethod::Polyak),
            other => Err(Error::Parse(format!("unknown baseline method {other:?}"))),
        }
    }
}

/// Configuration of one baseline run.
#[derive(Debug, Clone)]
pub struct BaselineConfig<F> {
    pub method: BaselineMethod,
    /// `ε_n` for projection/polyak; ignored by vanilla.
    pub epsilon: Schedule<F>,
    pub max_iters: u64,
    pub seed: u64,
    /// Truncate episodes at this many steps; `None` runs to true absorption
    /// (subject to the runaway guard).
    pub max_episode_steps: Option<u64>,
    /// Starting estimate; uniform when `None`.
    pub alpha0: Option<Distribution<F>>,
}

/// Runs one baseline, recording the L2 error against `reference` (of the
/// Polyak mean for [`BaselineMethod::Polyak`], of `α_n` otherwise).
pub fn run_baseline<F: Float>(
    kernel: &SubMarkovKernel<F>,
    config: &BaselineConfig<F>,
    reference: Option<&Distribution<F>>,
) -> Result<Trace> {
    let n_states = kernel.n_states();
    let mut alpha = match &config.alpha0 {
        Some(a) => {
            if a.len() != n_states {
                return Err(Error::LengthMismatch {
                    left: a.len(),
                    right: n_states,
                });
            }
            a.clone()
        }
        None => Distribution::uniform(n_states),
    };
    let mut polyak_mean = alpha.clone();
    let mut tau_sum = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = Instant::now();
    let mut trace = Trace::default();

    for n in 0..config.max_iters {
        let episode = match config.max_episode_steps {
            Some(cap) => simulate_episode_capped(kernel, &alpha, cap, &mut rng)?,
            None => simulate_episode(kernel, &alpha, &mut rng)?,
        };
        match config.method {
            BaselineMethod::Vanilla => {
                let (next, next_sum) = vanilla_update(&alpha, &episode, n, tau_sum)?;
                alpha = next;
                tau_sum = next_sum;
            }
            BaselineMethod::Projection | BaselineMethod::Polyak => {
                alpha = projection_update(&alpha, &episode, config.epsilon.at(n + 1))?;
                if config.method == BaselineMethod::Polyak {
                    polyak_mean = polyak_average(&polyak_mean, &alpha, n + 1)?;
                }
            }
        }
        let estimate = if config.method == BaselineMethod::Polyak {
            &polyak_mean
        } else {
            &alpha
        };
        let l2_error = reference.map(|target| {
            crate::bench::l2_error(estimate, target)
                .expect("length checked above")
                .to_f64()
                .unwrap_or(f64::NAN)
        });
        trace.rows.push(TraceRow {
            iteration: n + 1,
            l2_error,
            r_estimate: None,
            wall_ms: start.elapsed().as_secs_f64() * 1000.0,
        });
    }
    Ok(trace)
}
