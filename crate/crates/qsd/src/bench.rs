//! Benchmark chains, error metrics, experiment presets, and orchestration.
//!
//! Two chain families ship with the crate:
//!
//! - the 3-state **loopy** chain, every entry `(1-ε)/3` with exit mass `ε`
//!   from every state; its QSD is uniform for any `ε`;
//! - the **M/M/1/N queue** with absorption at the empty queue: birth-death
//!   transitions `λ_i = ρ_i/(ρ_i+1)` up, `μ_i = 1/(ρ_i+1)` down, exit mass
//!   `μ_1` from state 1 only, and a reflecting top state.
//!
//! [`run_experiment`] reproduces the shipped experiment presets: it runs the
//! actor-critic trainer and the episode baselines over seeds, writes one
//! deterministic trace CSV per seed, a timing summary (measured wall time to
//! the preset accuracy threshold), and optional log-log SVG plots.

use crate::actor_critic::{
    BetaConfig, Trace, TrainerConfig, TrainerInit, TransitionSource,
};
use crate::baselines::{BaselineConfig, BaselineMethod};
use crate::error::{Error, Result};
use crate::exact;
use crate::kernel::{Distribution, SubMarkovKernel};
use crate::policy::SoftmaxPolicy;
use crate::schedule::Schedule;
use crate::Float;
use std::fmt::Write as _;
use std::path::PathBuf;

/// The 3-state loopy chain: every entry `(1-eps)/3`, exit mass `eps`.
pub fn loopy_chain<F: Float>(eps: F) -> Result<SubMarkovKernel<F>> {
    if eps <= F::zero() || eps >= F::one() {
        return Err(Error::InvalidParameter(format!(
            "loopy eps must lie in (0,1), got {eps}"
        )));
    }
    let p = (F::one() - eps) / F::cast(3.0);
    SubMarkovKernel::from_rows(vec![vec![p; 3]; 3])
}

/// The M/M/1/N queue with absorption at the empty queue. States are
/// 0-indexed; state `i` here is queue length `i+1`. `rho` maps the 1-based
/// state index to `ρ_i > 0` for `i ∈ {1, .., N-1}`.
pub fn mm1n_queue<F: Float>(
    n: usize,
    rho: impl Fn(usize) -> f64,
) -> Result<SubMarkovKernel<F>> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "queue needs at least 3 states, got {n}"
        )));
    }
    let mut rows = vec![vec![F::zero(); n]; n];
    for i in 1..n {
        // 1-based interior states
        let r = rho(i);
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rho({i}) = {r} must be positive and finite"
            )));
        }
        let mu = F::cast(1.0 / (r + 1.0));
        let lambda = F::one() - mu;
        let s = i - 1; // 0-based
        if s == 0 {
            rows[s][1] = lambda; // exit mass μ₁ inferred from the deficit
        } else {
            rows[s][s - 1] = mu;
            rows[s][s + 1] = lambda;
        }
    }
    rows[n - 1][n - 2] = F::one();
    SubMarkovKernel::from_rows(rows)
}

/// Euclidean distance `‖α - α*‖₂` between two distributions.
pub fn l2_error<F: Float>(alpha: &Distribution<F>, alpha_star: &Distribution<F>) -> Result<F> {
    if alpha.len() != alpha_star.len() {
        return Err(Error::LengthMismatch {
            left: alpha.len(),
            right: alpha_star.len(),
        });
    }
    Ok(alpha
        .weights()
        .iter()
        .zip(alpha_star.weights())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<F>()
        .sqrt())
}

/// Least-squares slope of `ln(error)` against `ln(iteration)` over the
/// points with `window.0 <= iteration <= window.1` and positive error.
/// Needs at least 10 such points.
pub fn fit_loglog_slope(trace: &Trace, window: (u64, u64)) -> Result<f64> {
    let points: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter(|row| (window.0..=window.1).contains(&row.iteration))
        .filter_map(|row| {
            row.l2_error
                .filter(|e| *e > 0.0)
                .map(|e| (row.iteration as f64, e))
        })
        .collect();
    fit_loglog_slope_points(&points)
}

/// Slope fit on raw `(iteration, error)` pairs (both must be positive).
pub fn fit_loglog_slope_points(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 10 {
        return Err(Error::InsufficientPoints {
            needed: 10,
            found: points.len(),
        });
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0f64, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let lx = x.ln();
        let ly = y.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return Err(Error::InvalidParameter(
            "degenerate abscissa in slope fit".into(),
        ));
    }
    Ok((n * sxy - sx * sy) / denom)
}

/// Chain selector used by presets and the CLI.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainSpec {
    Loopy { eps: f64 },
    Queue { n: usize, rho: RhoSpec },
}

/// Per-state traffic intensity for the queue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoSpec {
    Const(f64),
    /// `ρ_i = 2 - 3(i-1)/(2N-4)`: drift toward an interior well near `2N/3`.
    Linear,
}

impl RhoSpec {
    pub fn value(&self, i: usize, n: usize) -> f64 {
        match *self {
            RhoSpec::Const(v) => v,
            RhoSpec::Linear => 2.0 - 3.0 * (i as f64 - 1.0) / (2.0 * n as f64 - 4.0),
        }
    }
}

impl ChainSpec {
    pub fn build(&self) -> Result<SubMarkovKernel<f64>> {
        match self {
            ChainSpec::Loopy { eps } => loopy_chain(*eps),
            ChainSpec::Queue { n, rho } => {
                let n = *n;
                let rho = *rho;
                mm1n_queue(n, move |i| rho.value(i, n))
            }
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            ChainSpec::Loopy { .. } => 3,
            ChainSpec::Queue { n, .. } => *n,
        }
    }
}

/// Published initial logits for the constant-ρ queue at any size: a linear
/// ramp `-35 → 0` over the first `n-2` components, then `3`.
pub fn theta0_queue_const(n: usize) -> Vec<f64> {
    let mut theta = Vec::with_capacity(n - 1);
    for i in 1..=n - 2 {
        theta.push(-35.0 + 35.0 * (i as f64 - 1.0) / (n as f64 - 2.0));
    }
    theta.push(3.0);
    theta
}

/// Published initial logits for the state-dependent-ρ queue at N = 500
/// (1-based component index `i`).
fn theta0_queue_linear_500(i: usize) -> f64 {
    match i {
        1..=250 => 8.0 + 35.0 * (i as f64 - 1.0) / 250.0,
        251 => 44.0,
        252..=305 => 43.0,
        306 => 48.0,
        307 => 42.0,
        _ => 43.0 - 38.0 * (i as f64 - 1.0) / 293.0,
    }
}

/// The linear-ρ initial logits, resampled by nearest index for sizes other
/// than the published N = 500.
pub fn theta0_queue_linear(n: usize) -> Vec<f64> {
    (1..=n - 1)
        .map(|i| {
            if n == 500 {
                theta0_queue_linear_500(i)
            } else {
                let j = 1.0 + (i as f64 - 1.0) * 498.0 / (n as f64 - 2.0);
                theta0_queue_linear_500(j.round() as usize)
            }
        })
        .collect()
}

/// A fully resolved experiment recipe: chain, initial values, learning
/// rates, batch size, iteration budgets, and the accuracy threshold used by
/// the timing summary.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub chain: ChainSpec,
    pub theta0: Vec<f64>,
    pub eta_theta: Schedule<f64>,
    pub eta_psi: Schedule<f64>,
    pub eta_r: Schedule<f64>,
    pub batch_size: usize,
    pub burn_in: usize,
    pub source: TransitionSource,
    pub projection_epsilon: Schedule<f64>,
    pub ac_iters: u64,
    pub baseline_iters: u64,
    pub threshold: f64,
    pub max_episode_steps: Option<u64>,
}

/// Names accepted by [`Preset::by_name`].
pub const PRESET_NAMES: [&str; 4] = ["loopy-01", "loopy-09", "queue-const", "queue-linear"];

impl Preset {
    /// Builds one of the named presets. `small` swaps the 500-state queues
    /// for 50-state ones (initial logits resampled onto the smaller index
    /// range) to fit CI budgets.
    pub fn by_name(name: &str, small: bool) -> Result<Self> {
        let qn = if small { 50 } else { 500 };
        match name {
            "loopy-01" => Ok(Preset {
                name: name.into(),
                chain: ChainSpec::Loopy { eps: 0.1 },
                theta0: vec![-1.0, 1.0],
                eta_theta: Schedule::paper_loopy_01(),
                eta_psi: Schedule::Constant(1e-4),
                eta_r: Schedule::Constant(1e-4),
                batch_size: 4,
                burn_in: 1,
                source: TransitionSource::WarmChains,
                projection_epsilon: Schedule::InversePower { exponent: 0.99 },
                ac_iters: 10_000,
                baseline_iters: 100_000,
                threshold: 1e-2,
                max_episode_steps: None,
            }),
            "loopy-09" => Ok(Preset {
                name: name.into(),
                chain: ChainSpec::Loopy { eps: 0.9 },
                theta0: vec![4.0, -2.0],
                eta_theta: Schedule::Constant(0.04),
                eta_psi: Schedule::Constant(1e-4),
                eta_r: Schedule::Constant(1e-4),
                batch_size: 32,
                burn_in: 1,
                source: TransitionSource::WarmChains,
                projection_epsilon: Schedule::InversePower { exponent: 0.99 },
                ac_iters: 10_000,
                baseline_iters: 100_000,
                threshold: 2e-2,
                max_episode_steps: None,
            }),
            "queue-const" => Ok(Preset {
                name: name.into(),
                chain: ChainSpec::Queue {
                    n: qn,
                    rho: RhoSpec::Const(1.25),
                },
                theta0: theta0_queue_const(qn),
                eta_theta: Schedule::Constant(3e-4),
                eta_psi: Schedule::Constant(1e-4),
                eta_r: Schedule::Constant(1e-4),
                batch_size: 64,
                burn_in: 1,
                // the queue's only exit-bearing row is state 1; warm chains
                // would never sample it, so transitions come from its row
                source: TransitionSource::FixedState(0),
                projection_epsilon: Schedule::InversePower { exponent: 0.95 },
                ac_iters: 200_000,
                baseline_iters: 10_000,
                threshold: 2e-1,
                max_episode_steps: None,
            }),
            "queue-linear" => Ok(Preset {
                name: name.into(),
                chain: ChainSpec::Queue {
                    n: qn,
                    rho: RhoSpec::Linear,
                },
                theta0: theta0_queue_linear(qn),
                eta_theta: Schedule::Constant(2e-4),
                eta_psi: Schedule::Constant(1e-4),
                eta_r: Schedule::Constant(1e-4),
                batch_size: 128,
                burn_in: 1,
                source: TransitionSource::FixedState(0),
                projection_epsilon: Schedule::InversePower { exponent: 0.95 },
                ac_iters: 400_000,
                baseline_iters: 10_000,
                threshold: 2e-1,
                max_episode_steps: None,
            }),
            other => Err(Error::InvalidParameter(format!(
                "unknown preset {other:?} (expected one of {PRESET_NAMES:?})"
            ))),
        }
    }

    pub fn build_kernel(&self) -> Result<SubMarkovKernel<f64>> {
        self.chain.build()
    }

    /// The initial policy distribution `α_{θ₀}`; baselines start here too so
    /// all methods share one starting point.
    pub fn alpha0(&self) -> Distribution<f64> {
        SoftmaxPolicy::new(self.theta0.clone()).alpha()
    }

    pub fn trainer_config(
        &self,
        seed: u64,
        iters: Option<u64>,
        beta_mode: BetaConfig,
    ) -> TrainerConfig<f64> {
        TrainerConfig {
            eta_theta: self.eta_theta,
            eta_psi: self.eta_psi,
            eta_r: self.eta_r,
            batch_size: self.batch_size,
            burn_in: self.burn_in,
            max_iters: iters.unwrap_or(self.ac_iters),
            seed,
            beta_mode,
            source: self.source,
        }
    }

    pub fn trainer_init(&self) -> TrainerInit<f64> {
        TrainerInit::with_theta(self.theta0.clone())
    }

    pub fn baseline_config(
        &self,
        method: BaselineMethod,
        seed: u64,
        iters: Option<u64>,
        max_episode_steps: Option<u64>,
    ) -> BaselineConfig<f64> {
        BaselineConfig {
            method,
            epsilon: self.projection_epsilon,
            max_iters: iters.unwrap_or(self.baseline_iters),
            seed,
            max_episode_steps: max_episode_steps.or(self.max_episode_steps),
            alpha0: Some(self.alpha0()),
        }
    }
}

/// A method selector for [`run_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSpec {
    ActorCritic,
    Baseline(BaselineMethod),
}

impl MethodSpec {
    pub fn all() -> [MethodSpec; 4] {
        [
            MethodSpec::ActorCritic,
            MethodSpec::Baseline(BaselineMethod::Vanilla),
            MethodSpec::Baseline(BaselineMethod::Projection),
            MethodSpec::Baseline(BaselineMethod::Polyak),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::ActorCritic => "actor-critic",
            MethodSpec::Baseline(b) => b.name(),
        }
    }
}

/// One experiment: a preset, the methods to run, and the seeds.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub methods: Vec<MethodSpec>,
    pub seeds: Vec<u64>,
    pub ac_iters: Option<u64>,
    pub baseline_iters: Option<u64>,
    pub beta_mode: BetaConfig,
    pub max_episode_steps: Option<u64>,
    pub out_dir: PathBuf,
    pub svg: bool,
}

/// Result of one method under one seed.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub final_error: Option<f64>,
    pub seconds_to_threshold: Option<f64>,
    /// Populated when the run aborted (e.g. a runaway episode).
    pub failure: Option<String>,
    pub trace_path: PathBuf,
}

/// All seeds of one method.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: &'static str,
    pub threshold: f64,
    pub seeds: Vec<SeedOutcome>,
}

impl MethodOutcome {
    /// Mean measured seconds-to-threshold over the seeds that reached it.
    pub fn mean_seconds_to_threshold(&self) -> Option<f64> {
        let reached: Vec<f64> = self
            .seeds
            .iter()
            .filter_map(|s| s.seconds_to_threshold)
            .collect();
        if reached.is_empty() {
            None
        } else {
            Some(reached.iter().sum::<f64>() / reached.len() as f64)
        }
    }

    pub fn reached_count(&self) -> usize {
        self.seeds
            .iter()
            .filter(|s| s.seconds_to_threshold.is_some())
            .count()
    }
}

/// Runs every requested method over every seed, writing per-seed trace CSVs,
/// the timing summary, and optional SVG plots into `out_dir`.
///
/// Trace CSVs are byte-deterministic under fixed seeds. The timing summary
/// reports measured wall seconds and therefore varies run to run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<MethodOutcome>> {
    std::fs::create_dir_all(&spec.out_dir)?;
    let kernel = spec.preset.build_kernel()?;
    let reference = exact::qsd(&kernel)?;
    let mut outcomes = Vec::new();

    for method in &spec.methods {
        let mut seeds_out = Vec::new();
        let mut svg_series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for &seed in &spec.seeds {
            let trace_path = spec.out_dir.join(format!(
                "{}_{}_seed{}.csv",
                spec.preset.name,
                method.name(),
                seed
            ));
            let run: Result<Trace> = match method {
                MethodSpec::ActorCritic => {
                    let config =
                        spec.preset
                            .trainer_config(seed, spec.ac_iters, spec.beta_mode);
                    crate::actor_critic::train(
                        &kernel,
                        config,
                        spec.preset.trainer_init(),
                        Some(&reference),
                    )
                    .map(|(trace, _)| trace)
                }
                MethodSpec::Baseline(b) => {
                    let config = spec.preset.baseline_config(
                        *b,
                        seed,
                        spec.baseline_iters,
                        spec.max_episode_steps,
                    );
                    crate::baselines::run_baseline(&kernel, &config, Some(&reference))
                }
            };
            match run {
                Ok(trace) => {
                    trace.write_csv_file(&trace_path)?;
                    if spec.svg {
                        let pts: Vec<(f64, f64)> = trace
                            .rows
                            .iter()
                            .filter_map(|r| {
                                r.l2_error
                                    .filter(|e| *e > 0.0)
                                    .map(|e| (r.iteration as f64, e))
                            })
                            .collect();
                        svg_series.push((format!("seed {seed}"), pts));
                    }
                    seeds_out.push(SeedOutcome {
                        seed,
                        final_error: trace.final_error(),
                        seconds_to_threshold: trace
                            .seconds_to_error(spec.preset.threshold),
                        failure: None,
                        trace_path,
                    });
                }
                Err(e) => {
                    // keep the (empty) trace file so outputs are complete
                    Trace::default().write_csv_file(&trace_path)?;
                    seeds_out.push(SeedOutcome {
                        seed,
                        final_error: None,
                        seconds_to_threshold: None,
                        failure: Some(e.to_string()),
                        trace_path,
                    });
                }
            }
        }
        if spec.svg && !svg_series.is_empty() {
            let svg = loglog_svg(
                &format!("{} / {}", spec.preset.name, method.name()),
                &svg_series,
            );
            std::fs::write(
                spec.out_dir
                    .join(format!("{}_{}.svg", spec.preset.name, method.name())),
                svg,
            )?;
        }
        outcomes.push(MethodOutcome {
            method: method.name(),
            threshold: spec.preset.threshold,
            seeds: seeds_out,
        });
    }

    let timing_path = spec.out_dir.join(format!("{}_timing.csv", spec.preset.name));
    std::fs::write(&timing_path, timing_summary_csv(&outcomes, &spec.seeds))?;
    Ok(outcomes)
}

/// Timing summary rows: `method,threshold,seconds,reached_seeds,total_seeds`.
pub fn timing_summary_csv(outcomes: &[MethodOutcome], seeds: &[u64]) -> String {
    let mut out = String::from("method,threshold,seconds,reached_seeds,total_seeds\n");
    for o in outcomes {
        let secs = o
            .mean_seconds_to_threshold()
            .map(|s| format!("{s:.3}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            o.method,
            o.threshold,
            secs,
            o.reached_count(),
            seeds.len()
        );
    }
    out
}

/// Renders log-log error curves as a standalone SVG (plain polylines, no
/// external renderer).
pub fn loglog_svg(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const MARGIN: f64 = 60.0;
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().copied())
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{W}" height="{H}" fill="white"/><text x="{}" y="24" text-anchor="middle" font-family="monospace" font-size="14">{title}</text>"#,
        W / 2.0
    );
    if all.is_empty() {
        let _ = writeln!(svg, "</svg>");
        return svg;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in &all {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if (x1 - x0).abs() < 1e-12 {
        x1 = x0 + 1.0;
    }
    if (y1 - y0).abs() < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x.log10() - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y.log10() - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="monospace" font-size="12">log10 iteration [{:.1} .. {:.1}]</text>"#,
        W / 2.0,
        H - 20.0,
        x0,
        x1
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="monospace" font-size="12" transform="rotate(-90 18 {})">log10 L2 error [{:.1} .. {:.1}]</text>"#,
        H / 2.0,
        H / 2.0,
        y0,
        y1
    );
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    for (idx, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        if path.is_empty() {
            continue;
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="11" fill="{color}">{label}</text>"#,
            W - MARGIN + 4.0,
            MARGIN + 14.0 * idx as f64
        );
    }
    let _ = writeln!(svg, "</svg>");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actor_critic::TraceRow;
    use approx::assert_abs_diff_eq;

    #[test]
    fn loopy_chain_entries() {
        let k: SubMarkovKernel<f64> = loopy_chain(0.1).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert_abs_diff_eq!(k.entry(x, y), 0.3, epsilon = 1e-15);
            }
            assert_abs_diff_eq!(k.exit_mass(x), 0.1, epsilon = 1e-15);
        }
        let k9: SubMarkovKernel<f64> = loopy_chain(0.9).unwrap();
        assert_abs_diff_eq!(k9.entry(0, 0), 1.0 / 30.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k9.exit_mass(0), 0.9, epsilon = 1e-15);
        assert!(loopy_chain::<f64>(0.0).is_err());
        assert!(loopy_chain::<f64>(1.0).is_err());
    }

    #[test]
    fn loopy_qsd_uniform_for_random_eps() {
        for eps in [0.05, 0.33, 0.77] {
            let k: SubMarkovKernel<f64> = loopy_chain(eps).unwrap();
            let alpha = exact::qsd(&k).unwrap();
            for i in 0..3 {
                assert_abs_diff_eq!(alpha.w(i), 1.0 / 3.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn queue_structure() {
        let n = 12;
        let k: SubMarkovKernel<f64> = mm1n_queue(n, |_| 1.25).unwrap();
        let lambda = 1.25 / 2.25;
        let mu = 1.0 / 2.25;
        // state 1: up λ₁, exit μ₁
        assert_abs_diff_eq!(k.entry(0, 1), lambda, epsilon = 1e-15);
        assert_abs_diff_eq!(k.exit_mass(0), mu, epsilon = 1e-15);
        let row0_sum: f64 = k.row(0).iter().sum();
        assert_abs_diff_eq!(row0_sum, lambda, epsilon = 1e-15);
        // interior rows sum to exactly 1, no exit
        for s in 1..n - 1 {
            assert_abs_diff_eq!(k.entry(s, s - 1), mu, epsilon = 1e-15);
            assert_abs_diff_eq!(k.entry(s, s + 1), lambda, epsilon = 1e-15);
            assert_eq!(k.exit_mass(s), 0.0);
        }
        // top state reflects
        assert_eq!(k.entry(n - 1, n - 2), 1.0);
        assert_eq!(k.exit_mass(n - 1), 0.0);
        let report = k.validate();
        assert!(report.pass(), "{report}");
        assert!(report.irreducible);
    }

    #[test]
    fn queue_rejects_bad_parameters() {
        assert!(mm1n_queue::<f64>(2, |_| 1.0).is_err());
        assert!(mm1n_queue::<f64>(5, |_| 0.0).is_err());
        assert!(mm1n_queue::<f64>(5, |i| if i == 2 { -1.0 } else { 1.0 }).is_err());
    }

    #[test]
    fn generators_pass_validation() {
        for k in [
            loopy_chain::<f64>(0.5).unwrap(),
            mm1n_queue::<f64>(30, |_| 1.25).unwrap(),
            mm1n_queue::<f64>(30, |i| 2.0 - 3.0 * (i as f64 - 1.0) / 56.0).unwrap(),
        ] {
            let report = k.validate();
            assert!(report.pass() && report.irreducible, "{report}");
        }
    }

    #[test]
    fn l2_error_basics() {
        let a = Distribution::new(vec![1.0, 0.0]).unwrap();
        let b = Distribution::new(vec![0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(l2_error(&a, &b).unwrap(), 2.0f64.sqrt(), epsilon = 1e-15);
        assert_eq!(l2_error(&a, &a).unwrap(), 0.0);
        let u = Distribution::<f64>::uniform(3);
        let v = Distribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        let expected = ((0.5 - 1.0 / 3.0f64).powi(2) + 2.0 * (0.25 - 1.0 / 3.0f64).powi(2)).sqrt();
        assert_abs_diff_eq!(l2_error(&u, &v).unwrap(), expected, epsilon = 1e-15);
        assert!(l2_error(&u, &a).is_err());
    }

    fn synthetic_trace(f: impl Fn(u64) -> f64, n: u64) -> Trace {
        Trace {
            rows: (1..=n)
                .map(|i| TraceRow {
                    iteration: i,
                    l2_error: Some(f(i)),
                    r_estimate: None,
                    wall_ms: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let t = synthetic_trace(|n| (n as f64).powf(-0.5), 1000);
        let slope = fit_loglog_slope(&t, (10, 1000)).unwrap();
        assert_abs_diff_eq!(slope, -0.5, epsilon = 1e-6);
    }

    #[test]
    fn slope_of_constant_is_zero() {
        let t = synthetic_trace(|_| 0.125, 100);
        let slope = fit_loglog_slope(&t, (1, 100)).unwrap();
        assert_abs_diff_eq!(slope, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn slope_needs_enough_points() {
        let t = synthetic_trace(|n| 1.0 / n as f64, 5);
        assert!(matches!(
            fit_loglog_slope(&t, (1, 5)),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn presets_resolve() {
        for name in PRESET_NAMES {
            let p = Preset::by_name(name, false).unwrap();
            assert_eq!(p.theta0.len() + 1, p.chain.n_states());
            let small = Preset::by_name(name, true).unwrap();
            assert_eq!(small.theta0.len() + 1, small.chain.n_states());
            small.build_kernel().unwrap();
        }
        assert!(Preset::by_name("nope", false).is_err());
    }

    #[test]
    fn queue_const_theta0_matches_published_values() {
        let t = theta0_queue_const(500);
        assert_eq!(t.len(), 499);
        assert_abs_diff_eq!(t[0], -35.0, epsilon = 1e-12); // i=1
        assert_abs_diff_eq!(t[497], -35.0 + 35.0 * 497.0 / 498.0, epsilon = 1e-12); // i=498
        assert_abs_diff_eq!(t[498], 3.0, epsilon = 1e-12); // i=499
    }

    #[test]
    fn queue_linear_theta0_matches_published_values() {
        let t = theta0_queue_linear(500);
        assert_eq!(t.len(), 499);
        assert_abs_diff_eq!(t[0], 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[249], 8.0 + 35.0 * 249.0 / 250.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[250], 44.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[260], 43.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[305], 48.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[306], 42.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[307], 43.0 - 38.0 * 307.0 / 293.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[498], 43.0 - 38.0 * 498.0 / 293.0, epsilon = 1e-12);
    }

    #[test]
    fn run_experiment_writes_deterministic_traces() {
        let dir = tempfile::tempdir().unwrap();
        let preset = Preset::by_name("loopy-01", false).unwrap();
        let spec = ExperimentSpec {
            preset,
            methods: vec![
                MethodSpec::ActorCritic,
                MethodSpec::Baseline(BaselineMethod::Vanilla),
            ],
            seeds: vec![1, 2],
            ac_iters: Some(50),
            baseline_iters: Some(50),
            beta_mode: BetaConfig::Exact,
            max_episode_steps: None,
            out_dir: dir.path().join("a"),
            svg: true,
        };
        let outcomes = run_experiment(&spec).unwrap();
        assert_eq!(outcomes.len(), 2);
        let spec_b = ExperimentSpec {
            out_dir: dir.path().join("b"),
            ..spec.clone()
        };
        run_experiment(&spec_b).unwrap();
        for method in ["actor-critic", "vanilla"] {
            for seed in [1, 2] {
                let fa = std::fs::read(dir.path().join("a").join(format!(
                    "loopy-01_{method}_seed{seed}.csv"
                )))
                .unwrap();
                let fb = std::fs::read(dir.path().join("b").join(format!(
                    "loopy-01_{method}_seed{seed}.csv"
                )))
                .unwrap();
                assert_eq!(fa, fb, "trace bytes differ for {method} seed {seed}");
                assert!(!fa.is_empty());
            }
            let svg = dir
                .path()
                .join("a")
                .join(format!("loopy-01_{method}.svg"));
            assert!(svg.exists());
        }
        assert!(dir.path().join("a").join("loopy-01_timing.csv").exists());
    }

    #[test]
    fn zero_iteration_experiment_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let preset = Preset::by_name("loopy-01", false).unwrap();
        let spec = ExperimentSpec {
            preset,
            methods: vec![MethodSpec::ActorCritic],
            seeds: vec![9],
            ac_iters: Some(0),
            baseline_iters: Some(0),
            beta_mode: BetaConfig::Exact,
            max_episode_steps: None,
            out_dir: dir.path().to_path_buf(),
            svg: false,
        };
        run_experiment(&spec).unwrap();
        let content =
            std::fs::read_to_string(dir.path().join("loopy-01_actor-critic_seed9.csv"))
                .unwrap();
        assert_eq!(content, "iteration,l2_error,r_estimate,wall_ms\n");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_dist(n: usize) -> impl Strategy<Value = Distribution<f64>> {
            proptest::collection::vec(0.01f64..1.0, n).prop_map(|raw| {
                let sum: f64 = raw.iter().sum();
                Distribution::new_unchecked(raw.into_iter().map(|v| v / sum).collect())
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn l2_is_a_metric(a in arb_dist(5), b in arb_dist(5), c in arb_dist(5)) {
                let ab = l2_error(&a, &b).unwrap();
                let ba = l2_error(&b, &a).unwrap();
                prop_assert!((ab - ba).abs() <= 1e-15);
                let ac = l2_error(&a, &c).unwrap();
                let cb = l2_error(&c, &b).unwrap();
                prop_assert!(ab <= ac + cb + 1e-12);
                prop_assert!(l2_error(&a, &a).unwrap() == 0.0);
            }
        }
    }
}
