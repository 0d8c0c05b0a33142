//! Command-line front end: exact QSD solves, actor-critic training, episode
//! baselines, preset benchmark experiments, and kernel validation.
//!
//! All randomness flows from one 64-bit seed through counter-based
//! generators, so runs with identical arguments, configuration, and seed
//! produce byte-identical output CSVs. Measured wall time is reported only
//! in bench timing summaries, never in trace files.

use clap::{Args, Parser, Subcommand};
use qsd::actor_critic::{self, BetaConfig, TrainerConfig, TrainerInit, TransitionSource};
use qsd::baselines::{run_baseline, BaselineConfig, BaselineMethod};
use qsd::bench::{
    loglog_svg, ChainSpec, ExperimentSpec, MethodSpec, Preset, RhoSpec, PRESET_NAMES,
};
use qsd::exact;
use qsd::kernel::SubMarkovKernel;
use qsd::schedule::Schedule;
use qsd::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "qsd",
    version,
    about = "Learn quasi-stationary distributions of finite-state absorbing Markov chains"
)]
struct Cli {
    /// Configuration file with `key = value` lines (# comments). Flags
    /// override file entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the exact QSD (power iteration) as CSV `state,weight`.
    Exact(ExactArgs),
    /// Run the actor-critic trainer and write a per-iteration trace CSV.
    Train(TrainArgs),
    /// Run an episode baseline (vanilla | projection | polyak).
    Baseline(BaselineArgs),
    /// Run a preset experiment over all methods and seeds.
    Bench(BenchArgs),
    /// Check kernel invariants and irreducibility.
    Validate(ChainArgs),
}

#[derive(Args, Clone, Default)]
struct ChainArgs {
    /// Chain selector: "loopy", "queue", or a path to a kernel matrix file
    /// (first line N, then N rows of N probabilities).
    #[arg(long)]
    chain: Option<String>,

    /// Exit probability of the loopy chain.
    #[arg(long)]
    eps: Option<f64>,

    /// Number of queue states.
    #[arg(long = "n-states")]
    n_states: Option<usize>,

    /// Queue traffic intensity: "const:<v>" or "linear".
    #[arg(long)]
    rho: Option<String>,

    /// Shrink the queue presets to 50 states.
    #[arg(long)]
    small: bool,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    chain: ChainArgs,

    /// Power-iteration residual tolerance.
    #[arg(long)]
    tol: Option<f64>,

    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Print the resolved configuration and exit.
    #[arg(long = "dump-config")]
    dump_config: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    chain: ChainArgs,

    /// Hyperparameter preset: "paper" (pick by chain) or an explicit preset
    /// name (loopy-01, loopy-09, queue-const, queue-linear).
    #[arg(long)]
    preset: Option<String>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    iters: Option<u64>,

    #[arg(long)]
    batch: Option<usize>,

    #[arg(long = "burn-in")]
    burn_in: Option<usize>,

    /// How β is computed: "exact" or "stochastic" (single-sample).
    #[arg(long = "beta-mode")]
    beta_mode: Option<String>,

    /// Policy step-size schedule (const:<c> | power:<p> | paper-loopy-01).
    #[arg(long = "eta-theta")]
    eta_theta: Option<String>,

    /// Critic step-size schedule.
    #[arg(long = "eta-psi")]
    eta_psi: Option<String>,

    /// Reward-estimate step-size schedule.
    #[arg(long = "eta-r")]
    eta_r: Option<String>,

    /// Initial logits as a comma-separated list (defaults to the preset's,
    /// or zeros).
    #[arg(long)]
    theta0: Option<String>,

    /// Trace CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Write θ and ψ/r checkpoints to <prefix>.theta.csv / <prefix>.psi.csv.
    #[arg(long)]
    checkpoint: Option<PathBuf>,

    /// Also write a log-log SVG next to the trace.
    #[arg(long)]
    svg: bool,

    #[arg(long = "dump-config")]
    dump_config: bool,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    chain: ChainArgs,

    /// vanilla | projection | polyak.
    #[arg(long)]
    method: Option<String>,

    /// Step-size schedule ε_n for projection/polyak (e.g. power:0.99).
    #[arg(long = "epsilon-schedule")]
    epsilon_schedule: Option<String>,

    /// Start from a preset's initial distribution and ε-schedule.
    #[arg(long)]
    preset: Option<String>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    iters: Option<u64>,

    /// Truncate episodes at this many steps (unset: run to absorption,
    /// guarded at 10^9 steps).
    #[arg(long = "max-episode-steps")]
    max_episode_steps: Option<u64>,

    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long)]
    svg: bool,

    #[arg(long = "dump-config")]
    dump_config: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Preset name: loopy-01 | loopy-09 | queue-const | queue-linear.
    preset: String,

    /// Number of independent seeds (seed, seed+1, ...).
    #[arg(long)]
    seeds: Option<u64>,

    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the preset's actor-critic iteration budget.
    #[arg(long = "ac-iters")]
    ac_iters: Option<u64>,

    /// Override the preset's baseline iteration budget.
    #[arg(long = "baseline-iters")]
    baseline_iters: Option<u64>,

    #[arg(long = "beta-mode")]
    beta_mode: Option<String>,

    /// Truncate baseline episodes at this many steps.
    #[arg(long = "max-episode-steps")]
    max_episode_steps: Option<u64>,

    /// Restrict to one method (actor-critic | vanilla | projection | polyak).
    #[arg(long)]
    method: Option<String>,

    /// Output directory for traces, timing summary, and plots.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,

    #[arg(long)]
    small: bool,

    #[arg(long)]
    svg: bool,

    #[arg(long = "dump-config")]
    dump_config: bool,
}

/// `key = value` file contents; later flags override these entries.
#[derive(Default)]
struct ConfigMap(BTreeMap<String, String>);

impl ConfigMap {
    fn load(path: Option<&PathBuf>) -> Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::Parse(format!("config line {}: expected key = value", lineno + 1))
                })?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Self(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Parse(format!("config key {key}: cannot parse {raw:?}"))
            }),
        }
    }

    fn get_flag(&self, key: &str) -> Result<bool> {
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }
}

fn parse_rho(s: &str) -> Result<RhoSpec> {
    if s == "linear" {
        return Ok(RhoSpec::Linear);
    }
    if let Some(v) = s.strip_prefix("const:") {
        let value: f64 = v
            .parse()
            .map_err(|e| Error::Parse(format!("bad rho constant {v:?}: {e}")))?;
        return Ok(RhoSpec::Const(value));
    }
    Err(Error::Parse(format!(
        "rho must be const:<v> or linear, got {s:?}"
    )))
}

fn rho_text(rho: &RhoSpec) -> String {
    match rho {
        RhoSpec::Const(v) => format!("const:{v}"),
        RhoSpec::Linear => "linear".into(),
    }
}

fn parse_beta_mode(s: &str) -> Result<BetaConfig> {
    match s {
        "exact" => Ok(BetaConfig::Exact),
        "stochastic" => Ok(BetaConfig::Stochastic),
        other => Err(Error::Parse(format!(
            "beta-mode must be exact or stochastic, got {other:?}"
        ))),
    }
}

fn beta_mode_text(mode: BetaConfig) -> &'static str {
    match mode {
        BetaConfig::Exact => "exact",
        BetaConfig::Stochastic => "stochastic",
    }
}

/// Either a builtin generator or a kernel loaded from a file.
enum ResolvedChain {
    Spec(ChainSpec),
    File(PathBuf),
}

impl ResolvedChain {
    fn build(&self) -> Result<SubMarkovKernel<f64>> {
        match self {
            ResolvedChain::Spec(spec) => spec.build(),
            ResolvedChain::File(path) => SubMarkovKernel::from_text_file(path),
        }
    }

    fn describe(&self) -> Vec<(String, String)> {
        match self {
            ResolvedChain::Spec(ChainSpec::Loopy { eps }) => vec![
                ("chain".into(), "loopy".into()),
                ("eps".into(), format!("{eps}")),
            ],
            ResolvedChain::Spec(ChainSpec::Queue { n, rho }) => vec![
                ("chain".into(), "queue".into()),
                ("n-states".into(), format!("{n}")),
                ("rho".into(), rho_text(rho)),
            ],
            ResolvedChain::File(path) => {
                vec![("chain".into(), path.display().to_string())]
            }
        }
    }
}

fn resolve_chain(args: &ChainArgs, config: &ConfigMap) -> Result<ResolvedChain> {
    resolve_chain_with_default(args, config, None)
}

/// Chain precedence: explicit flags/config, then `default` (a named
/// preset's chain), then loopy(0.1).
fn resolve_chain_with_default(
    args: &ChainArgs,
    config: &ConfigMap,
    default: Option<&ChainSpec>,
) -> Result<ResolvedChain> {
    let no_chain_input = args.chain.is_none()
        && args.eps.is_none()
        && args.n_states.is_none()
        && args.rho.is_none()
        && !config.0.contains_key("chain")
        && !config.0.contains_key("eps")
        && !config.0.contains_key("n-states")
        && !config.0.contains_key("rho");
    if no_chain_input {
        if let Some(spec) = default {
            return Ok(ResolvedChain::Spec(spec.clone()));
        }
    }
    let chain = args
        .chain
        .clone()
        .or(config.get::<String>("chain")?)
        .unwrap_or_else(|| "loopy".into());
    let small = args.small || config.get_flag("small")?;
    match chain.as_str() {
        "loopy" => {
            let eps = args.eps.or(config.get("eps")?).unwrap_or(0.1);
            Ok(ResolvedChain::Spec(ChainSpec::Loopy { eps }))
        }
        "queue" => {
            let n = args
                .n_states
                .or(config.get("n-states")?)
                .unwrap_or(if small { 50 } else { 500 });
            let rho = match args.rho.clone().or(config.get::<String>("rho")?) {
                Some(text) => parse_rho(&text)?,
                None => RhoSpec::Const(1.25),
            };
            Ok(ResolvedChain::Spec(ChainSpec::Queue { n, rho }))
        }
        other => {
            let path = PathBuf::from(other);
            if path.exists() {
                Ok(ResolvedChain::File(path))
            } else {
                Err(Error::InvalidParameter(format!(
                    "--chain must be loopy, queue, or an existing kernel file; got {other:?}"
                )))
            }
        }
    }
}

/// Picks the preset matching an explicit name, or by chain shape for
/// `--preset paper`.
fn resolve_preset(name: &str, chain: &ResolvedChain, small: bool) -> Result<Preset> {
    if PRESET_NAMES.contains(&name) {
        return Preset::by_name(name, small);
    }
    if name != "paper" {
        return Err(Error::InvalidParameter(format!(
            "unknown preset {name:?} (expected \"paper\" or one of {PRESET_NAMES:?})"
        )));
    }
    match chain {
        ResolvedChain::Spec(ChainSpec::Loopy { eps }) => {
            if (*eps - 0.9).abs() < 0.2 {
                Preset::by_name("loopy-09", small)
            } else {
                Preset::by_name("loopy-01", small)
            }
        }
        ResolvedChain::Spec(ChainSpec::Queue { rho, .. }) => match rho {
            RhoSpec::Linear => Preset::by_name("queue-linear", small),
            RhoSpec::Const(_) => Preset::by_name("queue-const", small),
        },
        ResolvedChain::File(_) => Err(Error::InvalidParameter(
            "presets apply only to the builtin chains".into(),
        )),
    }
}

fn dump_config_lines(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

fn emit(out: Option<&PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_exact(args: &ExactArgs, config: &ConfigMap) -> Result<()> {
    let chain = resolve_chain(&args.chain, config)?;
    let tol = args.tol.or(config.get("tol")?).unwrap_or(exact::DEFAULT_TOL);
    if args.dump_config {
        let mut pairs = chain.describe();
        pairs.push(("tol".into(), format!("{tol}")));
        print!("{}", dump_config_lines(&pairs));
        return Ok(());
    }
    let kernel = chain.build()?;
    let alpha = exact::qsd_power(&kernel, tol, exact::DEFAULT_MAX_ITER)?;
    let mut csv = String::from("state,weight\n");
    for (i, w) in alpha.weights().iter().enumerate() {
        let _ = writeln!(csv, "{i},{w}");
    }
    emit(args.out.as_ref(), &csv)
}

fn parse_theta0(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad theta0 entry {tok:?}: {e}")))
        })
        .collect()
}

fn theta0_text(theta: &[f64]) -> String {
    theta
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn cmd_train(args: &TrainArgs, config: &ConfigMap) -> Result<()> {
    let small = args.chain.small || config.get_flag("small")?;
    let preset_name = args.preset.clone().or(config.get::<String>("preset")?);
    // a named preset supplies its own chain unless chain flags override it;
    // "paper" picks the preset matching whatever chain was selected
    let named_preset = match preset_name.as_deref() {
        Some(name) if PRESET_NAMES.contains(&name) => Some(Preset::by_name(name, small)?),
        _ => None,
    };
    let chain = resolve_chain_with_default(
        &args.chain,
        config,
        named_preset.as_ref().map(|p| &p.chain),
    )?;
    let preset = match (named_preset, preset_name.as_deref()) {
        (Some(p), _) => Some(p),
        (None, Some(name)) => Some(resolve_preset(name, &chain, small)?),
        (None, None) => None,
    };

    let kernel = chain.build()?;
    let n = kernel.n_states();

    let seed = args.seed.or(config.get("seed")?).unwrap_or(0);
    let iters = args
        .iters
        .or(config.get("iters")?)
        .or(preset.as_ref().map(|p| p.ac_iters))
        .unwrap_or(10_000);
    let batch = args
        .batch
        .or(config.get("batch")?)
        .or(preset.as_ref().map(|p| p.batch_size))
        .unwrap_or(1);
    let burn_in = args
        .burn_in
        .or(config.get("burn-in")?)
        .or(preset.as_ref().map(|p| p.burn_in))
        .unwrap_or(1);
    let beta_mode = match args
        .beta_mode
        .clone()
        .or(config.get::<String>("beta-mode")?)
    {
        Some(text) => parse_beta_mode(&text)?,
        None => BetaConfig::Exact,
    };
    let eta_theta: Schedule<f64> = match args
        .eta_theta
        .clone()
        .or(config.get::<String>("eta-theta")?)
    {
        Some(text) => text.parse()?,
        None => preset
            .as_ref()
            .map(|p| p.eta_theta)
            .unwrap_or(Schedule::Constant(0.01)),
    };
    let eta_psi: Schedule<f64> = match args
        .eta_psi
        .clone()
        .or(config.get::<String>("eta-psi")?)
    {
        Some(text) => text.parse()?,
        None => preset
            .as_ref()
            .map(|p| p.eta_psi)
            .unwrap_or(Schedule::Constant(1e-4)),
    };
    let eta_r: Schedule<f64> = match args.eta_r.clone().or(config.get::<String>("eta-r")?) {
        Some(text) => text.parse()?,
        None => preset
            .as_ref()
            .map(|p| p.eta_r)
            .unwrap_or(Schedule::Constant(1e-4)),
    };
    let theta0 = match args.theta0.clone().or(config.get::<String>("theta0")?) {
        Some(text) => parse_theta0(&text)?,
        None => preset
            .as_ref()
            .map(|p| p.theta0.clone())
            .unwrap_or_else(|| vec![0.0; n - 1]),
    };
    let source = preset
        .as_ref()
        .map(|p| p.source)
        .unwrap_or(TransitionSource::WarmChains);

    if args.dump_config {
        let mut pairs = chain.describe();
        if let Some(name) = &preset_name {
            pairs.push(("preset".into(), name.clone()));
        }
        pairs.extend([
            ("seed".into(), format!("{seed}")),
            ("iters".into(), format!("{iters}")),
            ("batch".into(), format!("{batch}")),
            ("burn-in".into(), format!("{burn_in}")),
            ("beta-mode".into(), beta_mode_text(beta_mode).into()),
            ("eta-theta".into(), eta_theta.to_string()),
            ("eta-psi".into(), eta_psi.to_string()),
            ("eta-r".into(), eta_r.to_string()),
            ("theta0".into(), theta0_text(&theta0)),
        ]);
        print!("{}", dump_config_lines(&pairs));
        return Ok(());
    }

    let trainer_config = TrainerConfig {
        eta_theta,
        eta_psi,
        eta_r,
        batch_size: batch,
        burn_in,
        max_iters: iters,
        seed,
        beta_mode,
        source,
    };
    let reference = match exact::qsd(&kernel) {
        Ok(alpha) => Some(alpha),
        Err(e) => {
            eprintln!("qsd: reference QSD unavailable ({e}); l2_error left blank");
            None
        }
    };
    let (trace, state) = actor_critic::train(
        &kernel,
        trainer_config,
        TrainerInit::with_theta(theta0),
        reference.as_ref(),
    )?;

    if let Some(prefix) = &args.checkpoint {
        let dir = prefix.parent();
        if let Some(dir) = dir {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        state
            .policy
            .write_csv_file(prefix.with_extension("theta.csv"))?;
        state
            .values
            .write_csv_file(prefix.with_extension("psi.csv"))?;
    }
    if args.svg {
        if let Some(out) = &args.out {
            let pts: Vec<(f64, f64)> = trace
                .rows
                .iter()
                .filter_map(|r| {
                    r.l2_error
                        .filter(|e| *e > 0.0)
                        .map(|e| (r.iteration as f64, e))
                })
                .collect();
            let svg = loglog_svg("actor-critic", &[("l2 error".into(), pts)]);
            std::fs::write(out.with_extension("svg"), svg)?;
        }
    }
    emit(args.out.as_ref(), &trace.to_csv())
}

fn cmd_baseline(args: &BaselineArgs, config: &ConfigMap) -> Result<()> {
    let small = args.chain.small || config.get_flag("small")?;
    let preset_name = args.preset.clone().or(config.get::<String>("preset")?);
    let named_preset = match preset_name.as_deref() {
        Some(name) if PRESET_NAMES.contains(&name) => Some(Preset::by_name(name, small)?),
        _ => None,
    };
    let chain = resolve_chain_with_default(
        &args.chain,
        config,
        named_preset.as_ref().map(|p| &p.chain),
    )?;
    let preset = match (named_preset, preset_name.as_deref()) {
        (Some(p), _) => Some(p),
        (None, Some(name)) => Some(resolve_preset(name, &chain, small)?),
        (None, None) => None,
    };

    let method: BaselineMethod = args
        .method
        .clone()
        .or(config.get::<String>("method")?)
        .unwrap_or_else(|| "vanilla".into())
        .parse()?;
    let seed = args.seed.or(config.get("seed")?).unwrap_or(0);
    let iters = args
        .iters
        .or(config.get("iters")?)
        .or(preset.as_ref().map(|p| p.baseline_iters))
        .unwrap_or(10_000);
    let epsilon: Schedule<f64> = match args
        .epsilon_schedule
        .clone()
        .or(config.get::<String>("epsilon-schedule")?)
    {
        Some(text) => text.parse()?,
        None => preset
            .as_ref()
            .map(|p| p.projection_epsilon)
            .unwrap_or(Schedule::InversePower { exponent: 0.99 }),
    };
    let max_episode_steps = args
        .max_episode_steps
        .or(config.get("max-episode-steps")?)
        .or(preset.as_ref().and_then(|p| p.max_episode_steps));

    if args.dump_config {
        let mut pairs = chain.describe();
        pairs.extend([
            ("method".into(), method.name().into()),
            ("seed".into(), format!("{seed}")),
            ("iters".into(), format!("{iters}")),
            ("epsilon-schedule".into(), epsilon.to_string()),
        ]);
        if let Some(cap) = max_episode_steps {
            pairs.push(("max-episode-steps".into(), format!("{cap}")));
        }
        print!("{}", dump_config_lines(&pairs));
        return Ok(());
    }

    let kernel = chain.build()?;
    let baseline_config = BaselineConfig {
        method,
        epsilon,
        max_iters: iters,
        seed,
        max_episode_steps,
        alpha0: preset.as_ref().map(|p| p.alpha0()),
    };
    let reference = match exact::qsd(&kernel) {
        Ok(alpha) => Some(alpha),
        Err(e) => {
            eprintln!("qsd: reference QSD unavailable ({e}); l2_error left blank");
            None
        }
    };
    let trace = run_baseline(&kernel, &baseline_config, reference.as_ref())?;
    if args.svg {
        if let Some(out) = &args.out {
            let pts: Vec<(f64, f64)> = trace
                .rows
                .iter()
                .filter_map(|r| {
                    r.l2_error
                        .filter(|e| *e > 0.0)
                        .map(|e| (r.iteration as f64, e))
                })
                .collect();
            let svg = loglog_svg(method.name(), &[("l2 error".into(), pts)]);
            std::fs::write(out.with_extension("svg"), svg)?;
        }
    }
    emit(args.out.as_ref(), &trace.to_csv())
}

fn cmd_bench(args: &BenchArgs, config: &ConfigMap) -> Result<()> {
    let small = args.small || config.get_flag("small")?;
    let preset = Preset::by_name(&args.preset, small)?;
    let base_seed = args.seed.or(config.get("seed")?).unwrap_or(0);
    let n_seeds = args.seeds.or(config.get("seeds")?).unwrap_or(1);
    let seeds: Vec<u64> = (0..n_seeds).map(|i| base_seed + i).collect();
    let beta_mode = match args
        .beta_mode
        .clone()
        .or(config.get::<String>("beta-mode")?)
    {
        Some(text) => parse_beta_mode(&text)?,
        None => BetaConfig::Exact,
    };
    let methods = match args.method.clone().or(config.get::<String>("method")?) {
        None => MethodSpec::all().to_vec(),
        Some(name) if name == "actor-critic" => vec![MethodSpec::ActorCritic],
        Some(name) => vec![MethodSpec::Baseline(name.parse()?)],
    };
    let out_dir = args
        .out_dir
        .clone()
        .or(config.get::<PathBuf>("out-dir")?)
        .unwrap_or_else(|| PathBuf::from("bench-out"));
    let ac_iters = args.ac_iters.or(config.get("ac-iters")?);
    let baseline_iters = args.baseline_iters.or(config.get("baseline-iters")?);
    let max_episode_steps = args
        .max_episode_steps
        .or(config.get("max-episode-steps")?);

    if args.dump_config {
        let mut pairs = vec![
            ("preset".into(), preset.name.clone()),
            ("seed".into(), format!("{base_seed}")),
            ("seeds".into(), format!("{n_seeds}")),
            ("beta-mode".into(), beta_mode_text(beta_mode).into()),
            ("ac-iters".into(), format!("{}", ac_iters.unwrap_or(preset.ac_iters))),
            (
                "baseline-iters".into(),
                format!("{}", baseline_iters.unwrap_or(preset.baseline_iters)),
            ),
            ("eta-theta".into(), preset.eta_theta.to_string()),
            ("eta-psi".into(), preset.eta_psi.to_string()),
            ("eta-r".into(), preset.eta_r.to_string()),
            ("batch".into(), format!("{}", preset.batch_size)),
            ("burn-in".into(), format!("{}", preset.burn_in)),
            (
                "epsilon-schedule".into(),
                preset.projection_epsilon.to_string(),
            ),
            ("threshold".into(), format!("{}", preset.threshold)),
            ("theta0".into(), theta0_text(&preset.theta0)),
        ];
        if let Some(cap) = max_episode_steps {
            pairs.push(("max-episode-steps".into(), format!("{cap}")));
        }
        print!("{}", dump_config_lines(&pairs));
        return Ok(());
    }

    let spec = ExperimentSpec {
        preset,
        methods,
        seeds: seeds.clone(),
        ac_iters,
        baseline_iters,
        beta_mode,
        max_episode_steps,
        out_dir: out_dir.clone(),
        svg: args.svg || config.get_flag("svg")?,
    };
    let outcomes = qsd::bench::run_experiment(&spec)?;
    print!("{}", qsd::bench::timing_summary_csv(&outcomes, &seeds));
    for outcome in &outcomes {
        for seed_outcome in &outcome.seeds {
            if let Some(failure) = &seed_outcome.failure {
                eprintln!(
                    "qsd: {} seed {}: {}",
                    outcome.method, seed_outcome.seed, failure
                );
            }
        }
    }
    eprintln!("qsd: traces written to {}", out_dir.display());
    Ok(())
}

fn cmd_validate(args: &ChainArgs, config: &ConfigMap) -> Result<()> {
    let chain = resolve_chain(args, config)?;
    let kernel = chain.build()?;
    let report = kernel.validate();
    println!("{report}");
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let config = ConfigMap::load(cli.config.as_ref())?;
    match &cli.command {
        Command::Exact(args) => cmd_exact(args, &config),
        Command::Train(args) => cmd_train(args, &config),
        Command::Baseline(args) => cmd_baseline(args, &config),
        Command::Bench(args) => cmd_bench(args, &config),
        Command::Validate(args) => cmd_validate(args, &config),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qsd: {e}");
            ExitCode::FAILURE
        }
    }
}
