use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use nonadditivity::channels::PartialTraceChannel;
use nonadditivity::dvoretzky::{
    dvoretzky_dimension, estimate_m, shrinking_experiment, window_experiment, DEFAULT_EPSILON, DEFAULT_SAMPLES,
    DEFAULT_TRIALS,
};
use nonadditivity::ensembles::{Field, Isometry, RngStream};
use nonadditivity::error::LabError;
use nonadditivity::io::{read_json, write_csv, write_json};
use nonadditivity::linalg::SchattenOrder;
use nonadditivity::optimize::{estimate_max_output_norm, AscentConfig};
use nonadditivity::violation::{
    critical_m, run_scan, run_violation, sample_channel, ScanGrid, ScanOutput, ViolationReport, SCHEMA_VERSION,
};

const SEED_ENV: &str = "NONADD_SEED";

// Stream of the generator behind `maxnorm`.
const MAXNORM_STREAM: u64 = 0x6d61_786e;
const DVORETZKY_STREAM: u64 = 0x6476_6f72;

#[derive(Parser)]
#[command(name = "nonadd", version, about = "Random-channel multiplicativity and Schatten-norm concentration experiments")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Haar isometry C^m -> C^d ⊗ C^d and save it.
    ChannelSample(ChannelSampleArgs),
    /// Estimate the maximum output p-norm of a saved channel.
    Maxnorm(MaxnormArgs),
    /// Compare a random channel with its product with the conjugate channel.
    Violation(ViolationArgs),
    /// Run `violation` over a grid read from a JSON file.
    Scan(ScanArgs),
    /// Schatten-norm concentration on random subspaces of M_d.
    #[command(subcommand)]
    Dvoretzky(DvoretzkyCommand),
}

#[derive(Subcommand)]
enum DvoretzkyCommand {
    /// Sphere mean of the q-norm and of the operator norm.
    EstimateM(EstimateMArgs),
    /// Extremes of ||x||_q / ||x||_2 on random subspaces of one dimension.
    Window(WindowArgs),
    /// Worst subspace maximum over a list of dimensions.
    Shrink(ShrinkArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Output {
    /// Artifact path; nothing is written without it.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct SeedArg {
    /// Master seed; falls back to $NONADD_SEED, then to the OS entropy source.
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
}

impl SeedArg {
    fn resolve(&self) -> u64 {
        self.seed.unwrap_or_else(rand::random)
    }
}

#[derive(Args)]
struct AscentArgs {
    #[arg(long, default_value_t = AscentConfig::default().restarts)]
    restarts: usize,

    #[arg(long, default_value_t = AscentConfig::default().max_iters)]
    iters: usize,
}

impl AscentArgs {
    fn config(&self, baseline: usize) -> AscentConfig {
        AscentConfig { restarts: self.restarts, max_iters: self.iters, sample_baseline: baseline, ..Default::default() }
    }
}

#[derive(Args)]
struct ChannelSampleArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    m: usize,
    /// Real orthogonal isometry instead of a complex one.
    #[arg(long)]
    real: bool,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct MaxnormArgs {
    /// Channel file written by `channel-sample`.
    #[arg(long)]
    channel: PathBuf,
    #[arg(long, value_parser = parse_order)]
    p: SchattenOrder,
    #[command(flatten)]
    ascent: AscentArgs,
    /// Random baseline inputs.
    #[arg(long, default_value_t = AscentConfig::default().sample_baseline)]
    samples: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ViolationArgs {
    /// Renyi order, finite and above 1.
    #[arg(long, value_parser = parse_order)]
    p: SchattenOrder,
    #[arg(long)]
    d: usize,
    /// Input dimension; defaults to round(d^(1+1/p)).
    #[arg(long)]
    m: Option<usize>,
    /// Real orthogonal isometry instead of a complex one.
    #[arg(long)]
    real: bool,
    #[command(flatten)]
    ascent: AscentArgs,
    /// Random baseline inputs.
    #[arg(long, default_value_t = AscentConfig::default().sample_baseline)]
    samples: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ScanArgs {
    /// JSON grid and optimizer settings; omitted fields take their defaults.
    #[arg(long)]
    config_file: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct EstimateMArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, value_parser = parse_order)]
    q: SchattenOrder,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, value_parser = parse_order)]
    q: SchattenOrder,
    /// Subspace dimension; defaults to the concentration dimension for --epsilon and --c-eff.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Sphere samples for the mean.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    c_eff: f64,
    #[command(flatten)]
    ascent: AscentArgs,
    #[arg(long, default_value_t = AscentConfig::default().sample_baseline)]
    baseline: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ShrinkArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, value_parser = parse_order)]
    q: SchattenOrder,
    /// Comma-separated subspace dimensions.
    #[arg(long, value_delimiter = ',', required = true)]
    m_list: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[command(flatten)]
    ascent: AscentArgs,
    #[arg(long, default_value_t = AscentConfig::default().sample_baseline)]
    baseline: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: Output,
}

fn parse_order(s: &str) -> Result<SchattenOrder, String> {
    s.parse().map_err(|e: LabError| e.to_string())
}

/// Scan configuration file; every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct ScanFile {
    #[serde(flatten)]
    grid: ScanGrid,
    ascent: AscentConfig,
    seed: Option<u64>,
}

/// Every JSON artifact: the resolved settings next to the result.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: &'a str,
    command: &'a str,
    settings: serde_json::Value,
    result: &'a T,
}

/// Flat CSV form of a violation report.
#[derive(Serialize)]
struct ViolationRow {
    p: f64,
    d: usize,
    m: usize,
    seed: u64,
    field: Field,
    single_norm_estimate: f64,
    single_entropy_estimate: f64,
    product_lambda_max: f64,
    product_p_norm_lb: f64,
    product_entropy_ub: f64,
    certified_entropy_cap: f64,
    multiplicativity_gap: f64,
    additivity_gap: f64,
    violation_detected: bool,
}

impl From<&ViolationReport> for ViolationRow {
    fn from(r: &ViolationReport) -> Self {
        ViolationRow {
            p: r.p.value(),
            d: r.d,
            m: r.m,
            seed: r.seed,
            field: r.field,
            single_norm_estimate: r.single_norm(),
            single_entropy_estimate: r.single_entropy_estimate,
            product_lambda_max: r.product_lambda_max,
            product_p_norm_lb: r.product_p_norm_lb,
            product_entropy_ub: r.product_entropy_ub,
            certified_entropy_cap: r.certified_entropy_cap,
            multiplicativity_gap: r.multiplicativity_gap,
            additivity_gap: r.additivity_gap,
            violation_detected: r.violation_detected,
        }
    }
}

fn emit<T: Serialize, R: Serialize>(
    output: &Output,
    command: &str,
    settings: serde_json::Value,
    result: &T,
    rows: Option<&[R]>,
) -> Result<(), LabError> {
    let Some(path) = &output.out else { return Ok(()) };
    match output.format {
        Format::Json => write_json(path, &Envelope { schema_version: SCHEMA_VERSION, command, settings, result }),
        Format::Csv => match rows {
            Some(rows) => write_csv(path, rows),
            None => Err(LabError::Config(format!("{command} has no CSV form; use --format json"))),
        },
    }
}

fn field_of(real: bool) -> Field {
    if real {
        Field::Real
    } else {
        Field::Complex
    }
}

fn warn_small_p(p: f64) {
    if p < 1.5 {
        eprintln!("warning: p = {p} is close to 1; violations there need d far beyond desk scale");
    }
}

fn finite_p(p: SchattenOrder) -> Result<f64, LabError> {
    if p.is_infinite() {
        return Err(LabError::UnsupportedOrder { order: f64::INFINITY, reason: "entropies need a finite p" });
    }
    Ok(p.value())
}

fn channel_sample(a: &ChannelSampleArgs) -> Result<(), LabError> {
    let seed = a.seed.resolve();
    let channel = sample_channel(a.d, a.m, field_of(a.real), seed)?;
    let v = channel.isometry();
    println!(
        "sampled {} isometry C^{} -> C^{} ⊗ C^{} (seed {seed})",
        if a.real { "real" } else { "complex" },
        a.m,
        a.d,
        a.d
    );
    if let Some(path) = &a.output.out {
        if a.output.format == Format::Csv {
            return Err(LabError::Config("channel files are JSON only".into()));
        }
        write_json(path, v)?;
    }
    Ok(())
}

fn maxnorm(a: &MaxnormArgs) -> Result<(), LabError> {
    let seed = a.seed.resolve();
    let cfg = a.ascent.config(a.samples);
    let v: Isometry =
        read_json(&a.channel).map_err(|e| LabError::Config(format!("{}: {e}", a.channel.display())))?;
    let channel = PartialTraceChannel::new(v);
    let mut rng = RngStream::new(seed, MAXNORM_STREAM);
    let est = estimate_max_output_norm(&channel, a.p, &cfg, &mut rng)?;
    let floor = (channel.output_dim() as f64).powf(a.p.reciprocal() - 1.0);
    println!(
        "p={} d={} m={} max output norm >= {:.10} (floor {:.6}, seed {seed})",
        a.p,
        channel.output_dim(),
        channel.input_dim(),
        est.best_value,
        floor
    );
    let settings = json!({
        "channel": a.channel,
        "p": a.p,
        "seed": seed,
        "ascent": cfg,
    });
    emit::<_, ()>(&a.output, "maxnorm", settings, &est, None)
}

fn violation(a: &ViolationArgs) -> Result<(), LabError> {
    let p = finite_p(a.p)?;
    warn_small_p(p);
    let seed = a.seed.resolve();
    let cfg = a.ascent.config(a.samples);
    let m = match a.m {
        Some(m) => m,
        None => critical_m(a.d, p)?,
    };
    let report = run_violation(p, a.d, m, field_of(a.real), seed, &cfg)?;
    println!("{}", report.summary_line());
    let settings = json!({
        "p": p,
        "d": a.d,
        "m": m,
        "field": field_of(a.real),
        "seed": seed,
        "ascent": cfg,
    });
    let rows = [ViolationRow::from(&report)];
    emit(&a.output, "violation", settings, &report, Some(&rows[..]))
}

fn scan(a: &ScanArgs) -> Result<(), LabError> {
    let file: ScanFile = match &a.config_file {
        Some(path) => read_config(path)?,
        None => ScanFile::default(),
    };
    let seed = a.seed.seed.or(file.seed).unwrap_or_else(rand::random);
    if let Some(p) = file.grid.p_values.iter().copied().reduce(f64::min) {
        warn_small_p(p);
    }
    let out: ScanOutput = run_scan(&file.grid, &file.ascent, seed)?;
    for r in &out.reports {
        println!("{}", r.summary_line());
    }
    for s in &out.summary {
        println!(
            "summary p={} d={}: violation fraction {:.2}, mean multiplicativity gap {:+.6}, mean additivity gap {:+.6}",
            s.p, s.d, s.violation_fraction, s.mean_multiplicativity_gap, s.mean_additivity_gap
        );
    }
    println!("master seed {seed}");
    let settings = json!({
        "config_file": a.config_file,
        "seed": seed,
    });
    let rows: Vec<ViolationRow> = out.reports.iter().map(ViolationRow::from).collect();
    emit(&a.output, "scan", settings, &out, Some(&rows[..]))
}

fn read_config(path: &Path) -> Result<ScanFile, LabError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
}

fn estimate_m_cmd(a: &EstimateMArgs) -> Result<(), LabError> {
    let seed = a.seed.resolve();
    let mut rng = RngStream::new(seed, DVORETZKY_STREAM);
    let stats = estimate_m(a.d, a.q, a.samples, &mut rng)?;
    println!(
        "d={} q={} M_hat={:.8} +/- {:.2e}, E||X||_inf={:.6}; floor check {}, Hoelder check {} (seed {seed})",
        a.d,
        a.q,
        stats.m_hat,
        stats.m_stderr,
        stats.opnorm_mean_hat,
        verdict(stats.lower_bound_holds()),
        verdict(stats.holder_bound_holds())
    );
    let settings = json!({ "d": a.d, "q": a.q, "samples": a.samples, "seed": seed });
    emit(&a.output, "dvoretzky estimate-m", settings, &stats, Some(std::slice::from_ref(&stats)))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn window_cmd(a: &WindowArgs) -> Result<(), LabError> {
    let seed = a.seed.resolve();
    let cfg = a.ascent.config(a.baseline);
    let mut rng = RngStream::new(seed, DVORETZKY_STREAM);
    let stats = estimate_m(a.d, a.q, a.samples, &mut rng)?;
    let m = match a.m {
        Some(m) => m,
        None => dvoretzky_dimension(a.d, a.q, &stats, a.epsilon, a.c_eff)?,
    };
    let win = window_experiment(a.d, a.q, m, a.trials, &cfg, &stats, &mut rng)?;
    println!(
        "d={} q={} m={} M_hat={:.6}: worst max/min {:.4}, eps_eff {:.4} over {} trials (seed {seed})",
        a.d,
        a.q,
        m,
        stats.m_hat,
        win.worst_spread(),
        win.epsilon_effective,
        a.trials
    );
    let settings = json!({
        "d": a.d, "q": a.q, "m": m, "trials": a.trials, "samples": a.samples,
        "epsilon": a.epsilon, "c_eff": a.c_eff, "seed": seed, "ascent": cfg,
    });
    let result = json!({ "stats": stats, "window": win });
    emit(&a.output, "dvoretzky window", settings, &result, Some(&win.rows()[..]))
}

fn shrink_cmd(a: &ShrinkArgs) -> Result<(), LabError> {
    let seed = a.seed.resolve();
    let cfg = a.ascent.config(a.baseline);
    let mut rng = RngStream::new(seed, DVORETZKY_STREAM);
    let rows = shrinking_experiment(a.d, a.q, &a.m_list, a.trials, &cfg, &mut rng)?;
    for r in &rows {
        println!("d={} q={} m={}: worst max ratio {:.6}, empirical C {:.4}", r.d, r.q, r.m, r.worst_max_ratio, r.empirical_c);
    }
    println!("seed {seed}");
    let settings = json!({
        "d": a.d, "q": a.q, "m_list": a.m_list, "trials": a.trials, "seed": seed, "ascent": cfg,
    });
    emit(&a.output, "dvoretzky shrink", settings, &rows, Some(&rows[..]))
}

fn run(cli: &Cli) -> Result<(), LabError> {
    match &cli.command {
        Command::ChannelSample(a) => channel_sample(a),
        Command::Maxnorm(a) => maxnorm(a),
        Command::Violation(a) => violation(a),
        Command::Scan(a) => scan(a),
        Command::Dvoretzky(DvoretzkyCommand::EstimateM(a)) => estimate_m_cmd(a),
        Command::Dvoretzky(DvoretzkyCommand::Window(a)) => window_cmd(a),
        Command::Dvoretzky(DvoretzkyCommand::Shrink(a)) => shrink_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
