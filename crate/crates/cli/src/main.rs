use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use keg::graphex::{build, check_local_finiteness, Family, Graphex, GraphexSpec, ProbeConfig};
use keg::harness::{self, HarnessConfig, KSchedule, Statistic};
use keg::sampler::{self, SamplerConfig};
use keg::theory;

/// Sample, analyse and validate graphex-generated random graphs.
#[derive(Parser)]
#[command(name = "keg", version, about)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one ν-truncation and write its edge list and metadata.
    Sample(SampleArgs),
    /// Evaluate an expected count or the limiting degree ratio.
    Expect(ExpectArgs),
    /// Compare Monte Carlo means with expected counts.
    Validate(ValidateArgs),
    /// Empirical degree law against the limiting ratio.
    Degdist(DegdistArgs),
    /// Mean largest-component fraction along a ν grid.
    Connectivity(ConnectivityArgs),
    /// KS test of restrict(sample(2ν), ν) against sample(ν).
    Projectivity(ProjectivityArgs),
    /// Check the local finiteness conditions of a graphex.
    Check(CheckArgs),
}

#[derive(Args)]
struct GraphexArg {
    /// Graphex spec: a JSON file path, or inline JSON starting with '{'.
    #[arg(long)]
    graphex: String,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    g: GraphexArg,
    #[arg(long)]
    nu: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    /// Bound on the expected number of edges lost to truncation.
    #[arg(long, default_value_t = sampler::DEFAULT_EPSILON)]
    eps: f64,
    /// Override the latent cutoff ϑ_max.
    #[arg(long)]
    theta_max: Option<f64>,
    /// Also write `<out stem>.latent.csv` with latent values.
    #[arg(long)]
    retain_latent: bool,
    /// Use the pairwise sampler even for separable kernels.
    #[arg(long)]
    naive: bool,
    /// Edge-list CSV path; metadata goes to `<out stem>.meta.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stat {
    Edges,
    Vertices,
    Degk,
    Ccdf,
    Density,
}

#[derive(Args)]
struct ExpectArgs {
    #[command(flatten)]
    g: GraphexArg,
    #[arg(long, value_enum)]
    stat: Stat,
    #[arg(long, default_value_t = 0.0)]
    nu: f64,
    /// Degree for `degk` and `ccdf`.
    #[arg(long)]
    k: Option<u64>,
    #[arg(long, default_value_t = 1e-8)]
    rel_tol: f64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    #[arg(long, default_value_t = sampler::DEFAULT_EPSILON)]
    eps: f64,
    #[arg(long, default_value_t = 1e-8)]
    rel_tol: f64,
    /// JSON report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat CSV report path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    g: GraphexArg,
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated ν values.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    nu_grid: Vec<f64>,
    /// Degrees k whose counts N_k are validated.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    k: Vec<u64>,
    /// Also validate star-edge and isolated-edge counts.
    #[arg(long)]
    components: bool,
    #[arg(long, default_value_t = harness::DEFAULT_Z_CRIT)]
    z_crit: f64,
}

#[derive(Args)]
struct DegdistArgs {
    #[command(flatten)]
    g: GraphexArg,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',')]
    nu_grid: Vec<f64>,
    /// Fixed degree threshold k.
    #[arg(long, conflicts_with = "beta", required_unless_present = "beta")]
    k: Option<u64>,
    /// Threshold schedule k = ⌊ν^β⌋.
    #[arg(long)]
    beta: Option<f64>,
    /// Conjectured limit of P(D ≤ k).
    #[arg(long)]
    limit: Option<f64>,
    #[arg(long, default_value_t = harness::DEFAULT_Z_CRIT)]
    z_crit: f64,
}

#[derive(Args)]
struct ConnectivityArgs {
    #[command(flatten)]
    g: GraphexArg,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "25,50,100,200")]
    nu_grid: Vec<f64>,
    #[arg(long, default_value_t = 0.95)]
    threshold: f64,
}

#[derive(Args)]
struct ProjectivityArgs {
    #[command(flatten)]
    g: GraphexArg,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    nu: f64,
    #[arg(long, default_value_t = harness::DEFAULT_P_FLOOR)]
    p_floor: f64,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    g: GraphexArg,
    /// JSON report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A configuration problem; reported on stderr with exit code 2.
struct ConfigError(String);

impl<E: std::fmt::Display> From<E> for ConfigError {
    fn from(e: E) -> Self {
        ConfigError(e.to_string())
    }
}

type CmdResult = Result<bool, ConfigError>;

fn load(arg: &GraphexArg) -> Result<(GraphexSpec, Graphex), ConfigError> {
    let text = if arg.graphex.trim_start().starts_with('{') {
        arg.graphex.clone()
    } else {
        fs::read_to_string(&arg.graphex).map_err(|e| ConfigError(format!("cannot read {}: {e}", arg.graphex)))?
    };
    let spec = GraphexSpec::from_json(&text)?;
    let g = build(&spec)?;
    Ok((spec, g))
}

fn create(path: &Path) -> Result<BufWriter<File>, ConfigError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| ConfigError(format!("cannot write {}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), ConfigError> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => match writeln!(io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(e.into()),
            _ => {}
        },
    }
    Ok(())
}

fn emit_csv(path: Option<&Path>, write: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), ConfigError> {
    if let Some(p) = path {
        let mut w = create(p)?;
        write(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn harness_config(run: &RunArgs) -> HarnessConfig {
    let mut cfg = HarnessConfig::new(run.seed, run.replicates);
    cfg.epsilon = run.eps;
    cfg.rel_tol = run.rel_tol;
    cfg
}

fn warn_custom(spec: &GraphexSpec) {
    if spec.family == Family::Custom {
        eprintln!(
            "warning: the degree-law limit assumes a monotone, differentiable marginal; \
             this is not verified for custom kernels"
        );
    }
}

fn cmd_sample(a: SampleArgs) -> CmdResult {
    let (_, g) = load(&a.g)?;
    let mut cfg = SamplerConfig::new(a.nu, a.seed).replicate(a.replicate);
    cfg.epsilon = a.eps;
    cfg.theta_max = a.theta_max;
    cfg.retain_latent = a.retain_latent;
    cfg.separable_fast_path = !a.naive;
    let graph = sampler::sample_keg(&g, &cfg)?;

    let mut w = create(&a.out)?;
    sampler::write_edges_csv(&graph, &mut w)?;
    w.flush()?;
    emit_json(&sampler::metadata(&graph), Some(&sibling(&a.out, ".meta.json")))?;
    if a.retain_latent {
        let mut w = create(&sibling(&a.out, ".latent.csv"))?;
        sampler::write_latent_csv(&graph, &mut w)?;
        w.flush()?;
    }
    Ok(true)
}

fn cmd_expect(a: ExpectArgs) -> CmdResult {
    let (spec, g) = load(&a.g)?;
    let need_k = || a.k.ok_or_else(|| ConfigError("--k is required for this statistic".into()));
    let value = match a.stat {
        Stat::Edges => serde_json::to_value(theory::expected_edges(&g, a.nu, a.rel_tol)?)?,
        Stat::Vertices => serde_json::to_value(theory::expected_vertices(&g, a.nu, a.rel_tol)?)?,
        Stat::Degk => serde_json::to_value(theory::expected_degree_k(&g, a.nu, need_k()?, a.rel_tol)?)?,
        Stat::Ccdf => {
            warn_custom(&spec);
            let k = need_k()?;
            let v = theory::degree_ccdf(&g, a.nu, k, a.rel_tol)?;
            serde_json::json!({ "query": format!("ccdf(k={k})"), "nu": a.nu, "value": v })
        }
        Stat::Density => serde_json::json!({ "query": "density", "value": theory::classify_density(&g) }),
    };
    emit_json(&value, None)?;
    Ok(true)
}

fn cmd_validate(a: ValidateArgs) -> CmdResult {
    let (spec, g) = load(&a.g)?;
    let mut cfg = harness_config(&a.run);
    cfg.z_crit = a.z_crit;
    let mut stats = Statistic::standard(&a.k);
    if a.components {
        stats.extend([Statistic::StarEdges, Statistic::IsolatedEdges]);
    }
    let report = harness::validate_expectations(&g, &a.nu_grid, &stats, &cfg)?.with_spec(&spec);
    emit_json(&report, a.run.out.as_deref())?;
    emit_csv(a.run.csv.as_deref(), |w| report.write_csv(w))?;
    Ok(report.all_pass)
}

fn cmd_degdist(a: DegdistArgs) -> CmdResult {
    let (spec, g) = load(&a.g)?;
    warn_custom(&spec);
    let mut cfg = harness_config(&a.run);
    cfg.z_crit = a.z_crit;
    let schedule = match (a.k, a.beta) {
        (Some(k), _) => KSchedule::Fixed(k),
        (None, Some(b)) => KSchedule::Power(b),
        (None, None) => return Err(ConfigError("one of --k or --beta is required".into())),
    };
    let report = harness::degdist_experiment(&g, &a.nu_grid, schedule, a.limit, &cfg)?.with_spec(&spec);
    if report.frequent_empty {
        eprintln!("warning: more than 10% of sampled graphs had no vertices at some ν");
    }
    emit_json(&report, a.run.out.as_deref())?;
    emit_csv(a.run.csv.as_deref(), |w| report.write_csv(w))?;
    Ok(report.verdict == harness::Verdict::Pass)
}

fn cmd_connectivity(a: ConnectivityArgs) -> CmdResult {
    let (spec, g) = load(&a.g)?;
    let cfg = harness_config(&a.run);
    let report = harness::connectivity_experiment(&g, &a.nu_grid, a.threshold, &cfg)?.with_spec(&spec);
    emit_json(&report, a.run.out.as_deref())?;
    emit_csv(a.run.csv.as_deref(), |w| report.write_csv(w))?;
    Ok(report.verdict == harness::Verdict::Pass)
}

fn cmd_projectivity(a: ProjectivityArgs) -> CmdResult {
    let (spec, g) = load(&a.g)?;
    let mut cfg = harness_config(&a.run);
    cfg.p_floor = a.p_floor;
    let report = harness::projectivity_test(&g, a.nu, &cfg)?.with_spec(&spec);
    emit_json(&report, a.run.out.as_deref())?;
    emit_csv(a.run.csv.as_deref(), |w| report.write_csv(w))?;
    Ok(report.verdict == harness::Verdict::Pass)
}

fn cmd_check(a: CheckArgs) -> CmdResult {
    let (_, g) = load(&a.g)?;
    let report = check_local_finiteness(&g, &ProbeConfig::default());
    emit_json(&report, a.out.as_deref())?;
    Ok(report.none_violated())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Expect(a) => cmd_expect(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Degdist(a) => cmd_degdist(a),
        Command::Connectivity(a) => cmd_connectivity(a),
        Command::Projectivity(a) => cmd_projectivity(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(ConfigError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
