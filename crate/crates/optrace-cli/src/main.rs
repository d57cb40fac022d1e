/// `println!` that shrugs off a closed stdout (e.g. piping into `head`)
/// instead of panicking on the broken pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod commands;
mod output;

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Usage problems exit 2 (matching clap's own convention); numerical or
/// degenerate outcomes exit 3. A clean "no transition found" is a valid
/// answer and exits 0.
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl From<optrace_core::Error> for CliError {
    fn from(e: optrace_core::Error) -> Self {
        use optrace_core::Error::*;
        match e {
            InvalidParameter { .. } | Contract(_) | UseSymmetry { .. } => {
                CliError::Usage(e.to_string())
            }
            Degenerate(_) | Numerical { .. } => CliError::Failure(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "optrace",
    version,
    about = "Density tables, simulations, and shape diagnostics for the relative \
             weight of two racing options"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Directory receiving CSV and SVG output
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// key=value file supplying defaults for flags (flags win)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads; defaults to OPTRACE_THREADS or all cores
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// RNG seed; omitted, one is drawn from system time and echoed
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate closed-form weight densities
    Density(DensityArgs),
    /// Race two options by Monte Carlo and histogram the weight
    Simulate(SimulateArgs),
    /// Locate the maturity where the weight density turns bimodal
    Critical(CriticalArgs),
    /// Sweep the (drift, inverse-coupling) plane for the shape boundary
    PhaseDiagram(PhaseArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityFamily {
    /// Fixed-horizon payoffs, independent drivers
    European,
    /// Fixed-horizon payoffs, coupled drivers (requires --chi)
    EuropeanCorrelated,
    /// Averaged payoffs at drift index zero
    AsianMu0,
    /// Averaged payoffs at negative drift index (requires --mu)
    AsianNegMu,
    /// Infinite-maturity beta limit for positive drift (requires --mu)
    BetaLimit,
}

impl DensityFamily {
    pub fn slug(self) -> &'static str {
        match self {
            DensityFamily::European => "european",
            DensityFamily::EuropeanCorrelated => "european-correlated",
            DensityFamily::AsianMu0 => "asian-mu0",
            DensityFamily::AsianNegMu => "asian-neg-mu",
            DensityFamily::BetaLimit => "beta-limit",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Nested quadrature of the payoff-time density (maturity >= 5)
    Exact,
    /// Closed-form large-maturity approximation
    Approx,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Style {
    /// Payoff fixed at the horizon
    European,
    /// Payoff averaged along the path
    Asian,
}

#[derive(Args)]
pub struct DensityArgs {
    /// Density family
    #[arg(value_enum)]
    pub family: DensityFamily,

    /// Effective maturity (repeatable); defaults depend on the family
    #[arg(long = "alpha", value_name = "ALPHA")]
    pub alphas: Vec<f64>,

    /// Coupling scale of the two drivers
    #[arg(long, value_name = "CHI")]
    pub chi: Option<f64>,

    /// Drift index
    #[arg(long, value_name = "MU", allow_negative_numbers = true)]
    pub mu: Option<f64>,

    /// Squared volatility for the averaged-payoff construction (default 2)
    #[arg(long, value_name = "S2")]
    pub sigma_sq: Option<f64>,

    /// Payoff-time density route for negative drift (default exact)
    #[arg(long, value_enum)]
    pub method: Option<Method>,

    /// Add the closed-form edge asymptotic alongside each maturity
    #[arg(long)]
    pub with_asymptotic: bool,

    /// Interior grid points
    #[arg(long, value_name = "N")]
    pub points: Option<usize>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Payoff style of both options
    #[arg(long, value_enum)]
    pub style: Style,

    /// Drift index
    #[arg(long, default_value_t = 0.0, value_name = "MU", allow_negative_numbers = true)]
    pub mu: f64,

    /// Coupling scale; omitted or inf means independent drivers
    #[arg(long, value_name = "CHI")]
    pub chi: Option<f64>,

    /// Effective maturity (repeatable)
    #[arg(long = "alpha", value_name = "ALPHA", required = true)]
    pub alphas: Vec<f64>,

    /// Simulated paths per maturity
    #[arg(long, value_name = "N")]
    pub paths: Option<usize>,

    /// Walk steps per path
    #[arg(long, value_name = "N")]
    pub steps: Option<usize>,

    /// Histogram bins
    #[arg(long, value_name = "N")]
    pub bins: Option<usize>,

    /// Fit an effective fixed-horizon maturity to each histogram
    #[arg(long)]
    pub fit: bool,

    /// Add closed-form density columns where a closed form exists
    #[arg(long)]
    pub overlay_analytic: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriticalFamily {
    /// Bisection on the fixed-horizon density, independent drivers
    European,
    /// Bisection on the fixed-horizon density, coupled drivers
    EuropeanCorrelated,
    /// Bisection on the averaged-payoff density at drift index zero
    AsianMu0,
    /// Monte Carlo curvature probes for any drift index
    AsianMc,
}

impl CriticalFamily {
    pub fn slug(self) -> &'static str {
        match self {
            CriticalFamily::European => "european",
            CriticalFamily::EuropeanCorrelated => "european-correlated",
            CriticalFamily::AsianMu0 => "asian-mu0",
            CriticalFamily::AsianMc => "asian-mc",
        }
    }
}

#[derive(Args)]
pub struct CriticalArgs {
    /// Search family
    #[arg(value_enum)]
    pub family: CriticalFamily,

    /// Coupling scale of the two drivers
    #[arg(long, value_name = "CHI")]
    pub chi: Option<f64>,

    /// Drift index (asian-mc only)
    #[arg(long, value_name = "MU", allow_negative_numbers = true)]
    pub mu: Option<f64>,

    /// Maturity bracket to search
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub bracket: Option<Vec<f64>>,

    /// Bisection tolerance on the maturity
    #[arg(long, value_name = "TOL")]
    pub tol: Option<f64>,

    /// Half-offset probing the central second difference; the located root
    /// carries an O(delta^2) bias from the quartic term, so the default
    /// keeps that bias under 1e-6 across the analytic families
    #[arg(long, default_value_t = 5e-4, value_name = "DELTA")]
    pub delta: f64,

    /// Curvature probes across the bracket (asian-mc only)
    #[arg(long, value_name = "N")]
    pub probes: Option<usize>,

    /// Simulated paths per probe (asian-mc only)
    #[arg(long, value_name = "N")]
    pub paths: Option<usize>,

    /// Walk steps per path (asian-mc only)
    #[arg(long, value_name = "N")]
    pub steps: Option<usize>,

    /// Histogram bins per probe (asian-mc only)
    #[arg(long, value_name = "N")]
    pub bins: Option<usize>,
}

#[derive(Args)]
pub struct PhaseArgs {
    /// Drift-index grid point (repeatable, at least two)
    #[arg(long = "mu", value_name = "MU", required = true, allow_negative_numbers = true)]
    pub mus: Vec<f64>,

    /// Inverse coupling grid point (repeatable; 0 = independent)
    #[arg(long = "inv-chi", value_name = "INV_CHI", required = true)]
    pub inv_chis: Vec<f64>,

    /// Step-count refinement schedule
    #[arg(long, value_delimiter = ',', value_name = "N,N,...")]
    pub schedule: Option<Vec<usize>>,

    /// Step size held fixed across the schedule
    #[arg(long, default_value_t = 0.25, value_name = "DT")]
    pub dt: f64,

    /// Relative sup-norm change that counts as converged
    #[arg(long, default_value_t = 0.08, value_name = "EPS")]
    pub conv_eps: f64,

    /// Simulated paths per cell refinement
    #[arg(long, value_name = "N")]
    pub paths: Option<usize>,

    /// Histogram bins
    #[arg(long, value_name = "N")]
    pub bins: Option<usize>,
}

const CONFIG_KEYS: [&str; 8] = [
    "seed", "threads", "paths", "steps", "bins", "points", "probes", "out-dir",
];

/// Values shared by every command after merging flags, config file, and
/// environment. Numeric fields stay unset here when neither flag nor config
/// gave them; each command applies its own default.
pub struct Ctx {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub seed_given: bool,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub bins: Option<usize>,
    pub points: Option<usize>,
    pub probes: Option<usize>,
}

fn config_num<T: FromStr>(cfg: &HashMap<String, String>, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    match cfg.get(key) {
        None => Ok(None),
        Some(s) => s
            .parse::<T>()
            .map(Some)
            .map_err(|e| CliError::Usage(format!("config {key}={s}: {e}"))),
    }
}

fn entropy_seed() -> u64 {
    let t = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default();
    (t.as_nanos() as u64) ^ (u64::from(std::process::id())).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn resolve_threads(flag: Option<usize>, cfg: &HashMap<String, String>) -> Result<usize, CliError> {
    if let Some(t) = flag {
        return Ok(t);
    }
    if let Some(t) = config_num::<usize>(cfg, "threads")? {
        return Ok(t);
    }
    if let Ok(s) = std::env::var("OPTRACE_THREADS") {
        return s
            .parse()
            .map_err(|e| CliError::Usage(format!("OPTRACE_THREADS={s}: {e}")));
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.global.config {
        Some(p) => output::parse_config(p)?,
        None => HashMap::new(),
    };
    for key in cfg.keys() {
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("unknown config key `{key}`")));
        }
    }
    let threads = resolve_threads(cli.global.threads, &cfg)?;
    let (seed, seed_given) = match cli.global.seed.or(config_num(&cfg, "seed")?) {
        Some(s) => (s, true),
        None => (entropy_seed(), false),
    };
    let out_dir = cli
        .global
        .out_dir
        .or_else(|| cfg.get("out-dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = Ctx {
        out_dir,
        seed,
        seed_given,
        paths: config_num(&cfg, "paths")?,
        steps: config_num(&cfg, "steps")?,
        bins: config_num(&cfg, "bins")?,
        points: config_num(&cfg, "points")?,
        probes: config_num(&cfg, "probes")?,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Failure(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Density(args) => commands::density(&args, &ctx),
        Command::Simulate(args) => commands::simulate(&args, &ctx),
        Command::Critical(args) => commands::critical(&args, &ctx),
        Command::PhaseDiagram(args) => commands::phase(&args, &ctx),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
