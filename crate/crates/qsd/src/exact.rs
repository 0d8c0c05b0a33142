//! Ground-truth solvers for small and medium chains.
//!
//! Everything here is deterministic dense linear algebra: the QSD and the
//! stationary distribution of `K_α` by power iteration, the exact average
//! reward, the exact value function (a pinned linear solve of the Bellman
//! system), and the exact policy gradient with its finite-difference checker.
//!
//! Power iteration runs on the half-shifted operator `(M + I)/2`, which has
//! the same principal eigenvector as `M` but a strictly separated dominant
//! eigenvalue even for periodic chains (birth-death chains are 2-periodic, so
//! iterating `M` itself oscillates forever). Convergence is always measured
//! as the fixed-point residual of the *unshifted* operator.

use crate::error::{Error, Result};
use crate::kernel::{Distribution, SubMarkovKernel};
use crate::policy::{BetaMode, PolicyEval, SoftmaxPolicy, ValueTable};
use crate::Float;

/// Default L1 residual for power iteration; oracle-grade.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Default iteration cap for power iteration.
pub const DEFAULT_MAX_ITER: u64 = 1_000_000;

/// The QSD of `K`: the fixed point `α = αK / (αK·1)`, found by power
/// iteration from the uniform start. The returned vector satisfies
/// `‖α - αK/(αK·1)‖₁ ≤ tol`.
pub fn qsd_power<F: Float>(
    kernel: &SubMarkovKernel<F>,
    tol: F,
    max_iter: u64,
) -> Result<Distribution<F>> {
    let n = kernel.n_states();
    let mut v = vec![F::one() / F::cast_usize(n); n];
    let mut residual = F::infinity();
    for _ in 0..max_iter {
        // w = vK
        let mut w = vec![F::zero(); n];
        for x in 0..n {
            let vx = v[x];
            if vx == F::zero() {
                continue;
            }
            for (wy, &k) in w.iter_mut().zip(kernel.row(x)) {
                *wy += vx * k;
            }
        }
        let mass: F = w.iter().copied().sum();
        if mass <= F::zero() {
            return Err(Error::NoConvergence {
                max_iter,
                residual: f64::INFINITY,
            });
        }
        residual = v
            .iter()
            .zip(&w)
            .map(|(&a, &b)| (a - b / mass).abs())
            .sum();
        if residual <= tol {
            return Ok(Distribution::new_unchecked(v));
        }
        // half-shifted update: v ← normalize((vK + mass·v)/2)
        let half = F::cast(0.5);
        let mut next_mass = F::zero();
        for (vy, wy) in v.iter_mut().zip(&w) {
            *vy = half * (*wy + mass * *vy);
            next_mass += *vy;
        }
        for vy in &mut v {
            *vy /= next_mass;
        }
    }
    Err(Error::NoConvergence {
        max_iter,
        residual: residual.to_f64().unwrap_or(f64::NAN),
    })
}

/// QSD with the default oracle tolerances.
pub fn qsd<F: Float>(kernel: &SubMarkovKernel<F>) -> Result<Distribution<F>> {
    qsd_power(kernel, F::cast(DEFAULT_TOL), DEFAULT_MAX_ITER)
}

/// The stationary distribution `Γ(α)` of the Markovian kernel `K_α`, by
/// power iteration; the result satisfies `‖μ - μK_α‖₁ ≤ tol`.
pub fn stationary<F: Float>(
    kernel: &SubMarkovKernel<F>,
    alpha: &Distribution<F>,
    tol: F,
    max_iter: u64,
) -> Result<Distribution<F>> {
    let n = kernel.n_states();
    let mut mu = vec![F::one() / F::cast_usize(n); n];
    let mut residual = F::infinity();
    for _ in 0..max_iter {
        // w = μ K_α = μK + (μ·exit)·α
        let mut w = vec![F::zero(); n];
        let mut absorbed = F::zero();
        for x in 0..n {
            let m = mu[x];
            if m == F::zero() {
                continue;
            }
            for (wy, &k) in w.iter_mut().zip(kernel.row(x)) {
                *wy += m * k;
            }
            absorbed += m * kernel.exit_mass(x);
        }
        for (wy, &a) in w.iter_mut().zip(alpha.weights()) {
            *wy += absorbed * a;
        }
        residual = mu.iter().zip(&w).map(|(&a, &b)| (a - b).abs()).sum();
        if residual <= tol {
            return Ok(Distribution::new_unchecked(mu));
        }
        let half = F::cast(0.5);
        let mut mass = F::zero();
        for (m, wy) in mu.iter_mut().zip(&w) {
            *m = half * (*m + *wy);
            mass += *m;
        }
        for m in &mut mu {
            *m /= mass;
        }
    }
    Err(Error::NoConvergence {
        max_iter,
        residual: residual.to_f64().unwrap_or(f64::NAN),
    })
}

fn stationary_default<F: Float>(
    kernel: &SubMarkovKernel<F>,
    alpha: &Distribution<F>,
) -> Result<Distribution<F>> {
    stationary(kernel, alpha, F::cast(DEFAULT_TOL), DEFAULT_MAX_ITER)
}

/// `r(θ) = -Σ_x μ_θ(x) Σ_y K_α(x,y) ln(K_α(x,y)/K_β(x,y))`: the negative
/// time-averaged KL divergence between the path laws of `K_{α_θ}` and
/// `K_{β_θ}`. Always `≤ 0`; zero exactly at the QSD. Terms with
/// `K_α(x,y) = 0` contribute nothing, and rows without exit mass contribute
/// exactly zero (the kernels coincide there).
pub fn exact_average_reward<F: Float>(
    kernel: &SubMarkovKernel<F>,
    policy: &SoftmaxPolicy<F>,
) -> Result<F> {
    let eval = PolicyEval::exact(kernel, policy)?;
    let mu = stationary_default(kernel, eval.alpha())?;
    average_reward_given(&eval, &mu)
}

fn average_reward_given<F: Float>(eval: &PolicyEval<'_, F>, mu: &Distribution<F>) -> Result<F> {
    let n = mu.len();
    let mut r = F::zero();
    for x in 0..n {
        if eval.kernel().exit_mass(x) == F::zero() {
            continue;
        }
        let mx = mu.w(x);
        for y in 0..n {
            let ka = eval.k_alpha(x, y);
            if ka <= F::zero() {
                continue;
            }
            let kb = eval.k_beta(x, y);
            r -= mx * ka * (ka / kb).ln();
        }
    }
    Ok(r)
}

/// The exact value function and average reward at `θ`.
///
/// Solves the Bellman system `V(x) = Σ_y K_α(x,y)[V(y) + R(x,y) - r]` as a
/// dense linear system with the normalization `V(N-1) = 0` (the system is
/// singular with a one-dimensional kernel of constants; the gradient formula
/// only uses differences of `V`, so any pinning is valid). The returned
/// table carries `r(θ)` as its reward estimate.
pub fn exact_value_function<F: Float>(
    kernel: &SubMarkovKernel<F>,
    policy: &SoftmaxPolicy<F>,
) -> Result<ValueTable<F>> {
    let eval = PolicyEval::exact(kernel, policy)?;
    let mu = stationary_default(kernel, eval.alpha())?;
    let r = average_reward_given(&eval, &mu)?;
    let v = value_function_given(&eval, r)?;
    Ok(ValueTable::new(v, r))
}

fn value_function_given<F: Float>(eval: &PolicyEval<'_, F>, r: F) -> Result<Vec<F>> {
    let n = eval.alpha().len();
    // c(x) = Σ_y K_α(x,y)(R(x,y) - r)
    let mut c = vec![F::zero(); n];
    for (x, cx) in c.iter_mut().enumerate() {
        let mut acc = F::zero();
        for y in 0..n {
            let ka = eval.k_alpha(x, y);
            if ka <= F::zero() {
                continue;
            }
            acc += ka * (eval.reward(x, y)? - r);
        }
        *cx = acc;
    }
    // Reduced system over V(0..N-2), rows 0..N-2, with V(N-1) pinned to 0:
    // (I - K_α) restricted to the leading (N-1)×(N-1) block.
    let m = n - 1;
    let mut a = vec![F::zero(); m * m];
    for x in 0..m {
        for y in 0..m {
            let delta = if x == y { F::one() } else { F::zero() };
            a[x * m + y] = delta - eval.k_alpha(x, y);
        }
    }
    let mut v = solve_dense(&mut a, &c[..m])?;
    v.push(F::zero());
    Ok(v)
}

/// Residual of the Bellman equation at every state, for verification:
/// `Σ_y K_α(x,y)[V(y) + R(x,y) - r] - V(x)`.
pub fn bellman_residuals<F: Float>(
    kernel: &SubMarkovKernel<F>,
    policy: &SoftmaxPolicy<F>,
    values: &ValueTable<F>,
) -> Result<Vec<F>> {
    let eval = PolicyEval::exact(kernel, policy)?;
    let n = kernel.n_states();
    let mut res = vec![F::zero(); n];
    for (x, rx) in res.iter_mut().enumerate() {
        let mut acc = F::zero();
        for y in 0..n {
            let ka = eval.k_alpha(x, y);
            if ka <= F::zero() {
                continue;
            }
            acc += ka * (values.psi[y] + eval.reward(x, y)? - values.r_estimate);
        }
        *rx = acc - values.psi[x];
    }
    Ok(res)
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
/// Destroys `a`. Suited to the grounded Bellman system (N ≤ a few thousand).
fn solve_dense<F: Float>(a: &mut [F], b: &[F]) -> Result<Vec<F>> {
    let m = b.len();
    debug_assert_eq!(a.len(), m * m);
    let mut x: Vec<F> = b.to_vec();
    for col in 0..m {
        let mut pivot_row = col;
        let mut pivot_val = a[col * m + col].abs();
        for row in col + 1..m {
            let v = a[row * m + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val <= F::cast(1e-300) {
            return Err(Error::SingularSystem {
                col,
                pivot: pivot_val.to_f64().unwrap_or(0.0),
            });
        }
        if pivot_row != col {
            for k in 0..m {
                a.swap(col * m + k, pivot_row * m + k);
            }
            x.swap(col, pivot_row);
        }
        let inv = F::one() / a[col * m + col];
        for row in col + 1..m {
            let factor = a[row * m + col] * inv;
            if factor == F::zero() {
                continue;
            }
            a[row * m + col] = F::zero();
            for k in col + 1..m {
                let v = a[col * m + k];
                a[row * m + k] -= factor * v;
            }
            let scaled = factor * x[col];
            x[row] -= scaled;
        }
    }
    for col in (0..m).rev() {
        let mut acc = x[col];
        for k in col + 1..m {
            acc -= a[col * m + k] * x[k];
        }
        x[col] = acc / a[col * m + col];
    }
    Ok(x)
}

/// The exact policy gradient
/// `∇r(θ) = Σ_{x,y} μ(x)K_α(x,y)[(V(y)-V(x)+R(x,y)-r)·∇lnK_α(x,y) + ∇lnK_β(x,y)]`
/// with every factor computed exactly.
pub fn exact_policy_gradient<F: Float>(
    kernel: &SubMarkovKernel<F>,
    policy: &SoftmaxPolicy<F>,
) -> Result<Vec<F>> {
    let eval = PolicyEval::exact(kernel, policy)?;
    let mu = stationary_default(kernel, eval.alpha())?;
    let r = average_reward_given(&eval, &mu)?;
    let v = value_function_given(&eval, r)?;
    let n = kernel.n_states();
    let mut grad = vec![F::zero(); n - 1];
    for x in 0..n {
        // rows without exit mass contribute nothing: both scores vanish
        if kernel.exit_mass(x) == F::zero() {
            continue;
        }
        let mx = mu.w(x);
        for y in 0..n {
            let ka = eval.k_alpha(x, y);
            if ka <= F::zero() {
                continue;
            }
            let weight = mx * ka;
            let advantage = v[y] - v[x] + eval.reward(x, y)? - r;
            let ga = eval.grad_log_k_alpha(x, y)?;
            let gb = eval.grad_log_k_beta(x, y, BetaMode::Exact)?;
            for ((g, a), b) in grad.iter_mut().zip(ga).zip(gb) {
                *g += weight * (advantage * a + b);
            }
        }
    }
    Ok(grad)
}

/// Central finite differences of [`exact_average_reward`], componentwise in
/// `θ` with step `h`. The independent check for the analytic gradient.
pub fn finite_difference_gradient<F: Float>(
    kernel: &SubMarkovKernel<F>,
    policy: &SoftmaxPolicy<F>,
    h: F,
) -> Result<Vec<F>> {
    if h <= F::zero() {
        return Err(Error::InvalidParameter("step h must be positive".into()));
    }
    let dim = policy.theta().len();
    let mut grad = Vec::with_capacity(dim);
    let mut theta = policy.theta().to_vec();
    for i in 0..dim {
        let orig = theta[i];
        theta[i] = orig + h;
        let plus = exact_average_reward(kernel, &SoftmaxPolicy::new(theta.clone()))?;
        theta[i] = orig - h;
        let minus = exact_average_reward(kernel, &SoftmaxPolicy::new(theta.clone()))?;
        theta[i] = orig;
        grad.push((plus - minus) / (F::cast(2.0) * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{l2_error, loopy_chain, mm1n_queue};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loopy_qsd_is_uniform_for_any_eps() {
        for eps in [0.1, 0.5, 0.9] {
            let k = loopy_chain(eps).unwrap();
            let alpha = qsd(&k).unwrap();
            for i in 0..3 {
                assert_abs_diff_eq!(alpha.w(i), 1.0 / 3.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn two_state_qsd_matches_eigenvector() {
        // K = [[0.5,0.2],[0.3,0.4]]: eigenvalues solve λ² - 0.9λ + 0.14 = 0,
        // so λ = 0.7 and the left eigenvector is ∝ (1, 2/3) → (0.6, 0.4).
        let k = SubMarkovKernel::from_rows(vec![vec![0.5, 0.2], vec![0.3, 0.4]]).unwrap();
        let alpha = qsd(&k).unwrap();
        assert_abs_diff_eq!(alpha.w(0), 0.6, epsilon = 1e-10);
        assert_abs_diff_eq!(alpha.w(1), 0.4, epsilon = 1e-10);
    }

    #[test]
    fn queue_qsd_has_right_boundary_layer() {
        let k: SubMarkovKernel<f64> = mm1n_queue(60, |_| 1.25).unwrap();
        let alpha = qsd(&k).unwrap();
        let tail: f64 = (50..60).map(|i| alpha.w(i)).sum();
        assert!(tail > 0.8, "tail mass {tail}");
        // geometric decay at ratio 1/ρ away from the boundary
        let ratio = alpha.w(57) / alpha.w(58);
        assert_abs_diff_eq!(ratio, 0.8, epsilon = 0.02);
    }

    #[test]
    fn queue_qsd_interior_peak_for_state_dependent_rho() {
        let n = 60usize;
        let k: SubMarkovKernel<f64> =
            mm1n_queue(n, |i| 2.0 - 3.0 * (i as f64 - 1.0) / (2.0 * n as f64 - 4.0)).unwrap();
        let alpha = qsd(&k).unwrap();
        let peak = (0..n)
            .max_by(|&a, &b| alpha.w(a).partial_cmp(&alpha.w(b)).unwrap())
            .unwrap();
        let expected = 2.0 * n as f64 / 3.0;
        assert!(
            (peak as f64 - expected).abs() <= 0.1 * n as f64,
            "peak at {peak}, expected near {expected}"
        );
    }

    #[test]
    fn qsd_residual_against_stationary_cross_check() {
        // fixed point of Γ: ‖α* − Γ(α*)‖₁ ≤ 10·tol
        let tol = 1e-12;
        for k in [
            mm1n_queue(25, |_| 1.25).unwrap(),
            loopy_chain(0.3).unwrap(),
            SubMarkovKernel::from_rows(vec![vec![0.5, 0.2], vec![0.3, 0.4]]).unwrap(),
        ] {
            let alpha = qsd_power(&k, tol, 1_000_000).unwrap();
            let gamma = stationary(&k, &alpha, tol, 1_000_000).unwrap();
            assert!(alpha.l1_distance(&gamma) <= 10.0 * tol);
        }
    }

    #[test]
    fn stationary_at_qsd_is_qsd() {
        let k = loopy_chain(0.25).unwrap();
        let alpha = qsd(&k).unwrap();
        let mu = stationary(&k, &alpha, 1e-12, 1_000_000).unwrap();
        assert!(mu.l1_distance(&alpha) <= 1e-10);
    }

    #[test]
    fn stationary_loopy_closed_form() {
        // All K_α rows are identical, so μ equals the common row
        // (1-ε)/3 + ε·α; verify μK_α = μ as well.
        let eps = 0.1;
        let k = loopy_chain(eps).unwrap();
        let alpha = Distribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let mu = stationary(&k, &alpha, 1e-12, 1_000_000).unwrap();
        for y in 0..3 {
            let expected = (1.0 - eps) / 3.0 + eps * alpha.w(y);
            assert_abs_diff_eq!(mu.w(y), expected, epsilon = 1e-10);
        }
        let mu_next = k.one_step_distribution(&mu).unwrap();
        // μ is stationary for K_μ only at the QSD; check the K_α product directly
        let mut prod = vec![0.0f64; 3];
        for x in 0..3 {
            let row = k.k_alpha_row(&alpha, x).unwrap();
            for y in 0..3 {
                prod[y] += mu.w(x) * row.w(y);
            }
        }
        for y in 0..3 {
            assert_abs_diff_eq!(prod[y], mu.w(y), epsilon = 1e-10);
        }
        drop(mu_next);
    }

    #[test]
    fn average_reward_zero_at_qsd_and_negative_elsewhere() {
        let k = loopy_chain(0.1).unwrap();
        let qsd_theta = SoftmaxPolicy::encoding(&qsd(&k).unwrap()).unwrap();
        let r_star = exact_average_reward(&k, &qsd_theta).unwrap();
        assert_abs_diff_eq!(r_star, 0.0, epsilon = 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let theta: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let p = SoftmaxPolicy::new(theta);
            let r = exact_average_reward(&k, &p).unwrap();
            assert!(r <= 0.0);
            let off = l2_error(&p.alpha(), &qsd(&k).unwrap()).unwrap();
            if off > 1e-3 {
                assert!(r < -1e-10, "r = {r} at distance {off}");
            }
        }
    }

    #[test]
    fn average_reward_iff_at_qsd() {
        // r(θ) ≈ 0 forces α_θ ≈ QSD
        let k = loopy_chain(0.5).unwrap();
        let reference = qsd(&k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let theta: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let p = SoftmaxPolicy::new(theta);
            let r = exact_average_reward(&k, &p).unwrap();
            let dist = p.alpha().l1_distance(&reference);
            if r.abs() <= 1e-12 {
                assert!(dist <= 1e-5);
            }
            if dist <= 1e-8 {
                assert!(r.abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn average_reward_matches_trajectory_monte_carlo() {
        // long-run average of sampled rewards under K_{α_θ} estimates r(θ)
        let k = loopy_chain(0.1).unwrap();
        let p = SoftmaxPolicy::new(vec![-1.0f64, 1.0]);
        let exact = exact_average_reward(&k, &p).unwrap();

        let eval = PolicyEval::exact(&k, &p).unwrap();
        let alpha = p.alpha();
        let sampler = alpha.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let steps = 10_000_000u64;
        let mut x = 0usize;
        // discard a short equilibration prefix
        for _ in 0..1000 {
            x = k.sample_transition_with(&sampler, x, &mut rng);
        }
        let mut mean = 0.0f64;
        let mut m2 = 0.0f64;
        for t in 0..steps {
            let y = k.sample_transition_with(&sampler, x, &mut rng);
            let r = eval.reward(x, y).unwrap();
            let d = r - mean;
            mean += d / (t + 1) as f64;
            m2 += d * (r - mean);
            x = y;
        }
        let se = (m2 / (steps as f64 - 1.0) / steps as f64).sqrt();
        // serial correlation inflates the naive standard error; the chain
        // regenerates every ~1/ε steps, so stay within 3σ of the inflated se
        let se_corr = se * (2.0 / 0.1f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * se_corr,
            "MC {mean} vs exact {exact} (3σ = {:.2e})",
            3.0 * se_corr
        );
        assert!(exact < 0.0);
    }

    #[test]
    fn value_function_zero_at_qsd() {
        let k = loopy_chain(0.2).unwrap();
        let theta = SoftmaxPolicy::encoding(&qsd(&k).unwrap()).unwrap();
        let vt = exact_value_function(&k, &theta).unwrap();
        for v in &vt.psi {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(vt.r_estimate, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn value_function_satisfies_bellman_everywhere() {
        let cases: Vec<(SubMarkovKernel<f64>, Vec<f64>)> = vec![
            (loopy_chain(0.1).unwrap(), vec![-1.0, 1.0]),
            (loopy_chain(0.9).unwrap(), vec![4.0, -2.0]),
            (mm1n_queue(10, |_| 1.25).unwrap(), vec![0.3; 9]),
        ];
        for (k, theta) in cases {
            let p = SoftmaxPolicy::new(theta);
            let vt = exact_value_function(&k, &p).unwrap();
            let res = bellman_residuals(&k, &p, &vt).unwrap();
            for r in res {
                assert!(r.abs() <= 1e-9, "residual {r:e}");
            }
            assert_eq!(*vt.psi.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn value_function_shift_invariance() {
        // adding a constant keeps the Bellman equation satisfied
        let k: SubMarkovKernel<f64> = loopy_chain(0.35).unwrap();
        let p = SoftmaxPolicy::new(vec![0.6, -0.2]);
        let mut vt = exact_value_function(&k, &p).unwrap();
        for v in &mut vt.psi {
            *v += 3.7;
        }
        let res = bellman_residuals(&k, &p, &vt).unwrap();
        for r in res {
            assert!(r.abs() <= 1e-9);
        }
    }

    #[test]
    fn gradient_zero_at_qsd() {
        let k = loopy_chain(0.4).unwrap();
        let theta = SoftmaxPolicy::encoding(&qsd(&k).unwrap()).unwrap();
        let g = exact_policy_gradient(&k, &theta).unwrap();
        for v in g {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for n in [3usize, 10] {
            let k = if n == 3 {
                loopy_chain(0.1).unwrap()
            } else {
                mm1n_queue(n, |_| 1.25).unwrap()
            };
            for _ in 0..5 {
                let theta: Vec<f64> =
                    (0..n - 1).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                let p = SoftmaxPolicy::new(theta);
                let g = exact_policy_gradient(&k, &p).unwrap();
                let fd = finite_difference_gradient(&k, &p, 1e-5).unwrap();
                let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let err: f64 = g
                    .iter()
                    .zip(&fd)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                assert!(
                    err / norm.max(1e-8) <= 1e-5,
                    "n={n}: rel err {}",
                    err / norm.max(1e-8)
                );
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_medium_chain() {
        let k: SubMarkovKernel<f64> = mm1n_queue(50, |_| 1.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..2 {
            let theta: Vec<f64> = (0..49).map(|_| rng.random::<f64>() - 0.5).collect();
            let p = SoftmaxPolicy::new(theta);
            let g = exact_policy_gradient(&k, &p).unwrap();
            let fd = finite_difference_gradient(&k, &p, 1e-5).unwrap();
            let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err: f64 = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err / norm.max(1e-8) <= 1e-5, "rel err {}", err / norm);
        }
    }

    #[test]
    fn gradient_baseline_constant_invariance() {
        // replacing r by an arbitrary constant b inside the bracket leaves
        // the gradient unchanged (zero-mean score identity)
        let k = loopy_chain(0.3).unwrap();
        let p = SoftmaxPolicy::new(vec![0.8, -0.5]);
        let eval = PolicyEval::exact(&k, &p).unwrap();
        let mu = stationary(&k, &p.alpha(), 1e-12, 1_000_000).unwrap();
        let r = exact_average_reward(&k, &p).unwrap();
        let vt = exact_value_function(&k, &p).unwrap();

        let grad_with = |b: f64| -> Vec<f64> {
            let mut grad = vec![0.0f64; 2];
            for x in 0..3 {
                for y in 0..3 {
                    let ka = eval.k_alpha(x, y);
                    let weight = mu.w(x) * ka;
                    let adv = vt.psi[y] - vt.psi[x] + eval.reward(x, y).unwrap() - b;
                    let ga = eval.grad_log_k_alpha(x, y).unwrap();
                    let gb = eval.grad_log_k_beta(x, y, BetaMode::Exact).unwrap();
                    for j in 0..2 {
                        grad[j] += weight * (adv * ga[j] + gb[j]);
                    }
                }
            }
            grad
        };
        let g_r = grad_with(r);
        let g_0 = grad_with(0.0);
        let g_b = grad_with(2.5);
        for j in 0..2 {
            assert_abs_diff_eq!(g_r[j], g_0[j], epsilon = 1e-10);
            assert_abs_diff_eq!(g_r[j], g_b[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn finite_difference_identical_points_give_zero() {
        let k = loopy_chain(0.5).unwrap();
        let p = SoftmaxPolicy::new(vec![0.1, 0.2]);
        let a = exact_average_reward(&k, &p).unwrap();
        let b = exact_average_reward(&k, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn finite_difference_halving_shrinks_error_quadratically() {
        let k = loopy_chain(0.2).unwrap();
        let p = SoftmaxPolicy::new(vec![0.9, -0.7]);
        let g = exact_policy_gradient(&k, &p).unwrap();
        let err_at = |h: f64| -> f64 {
            let fd = finite_difference_gradient(&k, &p, h).unwrap();
            g.iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let e1 = err_at(1e-3);
        let e2 = err_at(5e-4);
        let ratio = e1 / e2;
        assert!(
            (2.5..6.0).contains(&ratio),
            "expected ~4x error reduction, got {ratio} ({e1:e} -> {e2:e})"
        );
    }

    #[test]
    fn zero_mean_score_identity_under_stationary_law() {
        let k = loopy_chain(0.6).unwrap();
        let p = SoftmaxPolicy::new(vec![1.2, 0.4]);
        let eval = PolicyEval::exact(&k, &p).unwrap();
        let mu = stationary(&k, &p.alpha(), 1e-12, 1_000_000).unwrap();
        let mut acc = vec![0.0f64; 2];
        for x in 0..3 {
            for y in 0..3 {
                let g = eval.grad_log_k_alpha(x, y).unwrap();
                for j in 0..2 {
                    acc[j] += mu.w(x) * eval.k_alpha(x, y) * g[j];
                }
            }
        }
        for v in acc {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let k = mm1n_queue(40, |_| 1.25).unwrap();
        let err = qsd_power(&k, 1e-13, 3);
        assert!(matches!(err, Err(Error::NoConvergence { .. })));
    }
}
