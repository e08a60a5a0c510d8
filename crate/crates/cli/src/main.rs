use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pathwise::localtime::{field_bytes, write_local_time_csv};
use pathwise::partitions::uniform_checkpoints;
use pathwise::paths::{generate, ingest_csv, write_path_csv};
use pathwise::ranks::{rank_decomposition, write_ranks_csv};
use pathwise::tanaka::{
    finite_n_report, identity_suite, tanaka_meyer_identity, write_identity_csv,
};
use pathwise::variation::write_variation_csv;
use pathwise::{
    build_rank_system, discrete_local_time, pth_variation, tanaka_class, PathKind, PathSpec,
    SampledPath, SpaceGrid,
};
use pathwise_cli::acceptance::{run_acceptance, AcceptanceOptions, DEFAULT_SEEDS};
use pathwise_cli::config::{ExperimentConfig, PartitionChoice};
use pathwise_cli::run::{
    hierarchy, off_sample_level, output_dir, run, threads_from_env, THREADS_ENV,
};

/// Pathwise p-th variation, local times and Tanaka formulas on sampled paths.
///
/// Path files are CSVs with header `t,value`. The worker count is taken from the
/// PATHWISE_THREADS environment variable (default: all cores); outputs do not depend on it.
#[derive(Debug, Parser)]
#[command(name = "pathwise", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a path and write it as `t,value` CSV.
    Generate(GenerateArgs),
    /// p-th variation per level at uniform checkpoints (`level,t,value`).
    Variation(AnalysisArgs),
    /// Discrete local times per level on a space grid (`level,t,x,value`).
    LocalTime(LocalTimeArgs),
    /// Finite-n change of variable and Tanaka–Meyer identities per level.
    Tanaka(TanakaArgs),
    /// Rank decomposition `A = B + C + D` of a system of paths (`k,level,t,A,B,C,D,residual`).
    Ranks(RanksArgs),
    /// Zero-set and max/min local-time identities of two paths.
    Identities(IdentitiesArgs),
    /// Run the acceptance suite and print one line per criterion.
    Acceptance(AcceptanceArgs),
    /// Run a TOML experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Fbm,
    Bm,
    Linear,
    Triangle,
    Constant,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "fbm")]
    kind: Kind,
    #[arg(long, default_value_t = 0.5)]
    hurst: f64,
    /// Slope of a linear path.
    #[arg(long, default_value_t = 1.0)]
    slope: f64,
    #[arg(long, default_value_t = 0.5)]
    peak_time: f64,
    #[arg(long, default_value_t = 1.0)]
    peak_value: f64,
    /// Value of a constant path.
    #[arg(long, default_value_t = 0.0)]
    value: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// The grid has `2^n_max + 1` samples.
    #[arg(long, default_value_t = 12)]
    n_max: u32,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Path CSV with header `t,value`.
    #[arg(long)]
    input: PathBuf,
    /// Resample onto `2^n_max + 1` points; defaults to the closest dyadic grid.
    #[arg(long)]
    n_max: Option<u32>,
}

#[derive(Debug, Args)]
struct LevelArgs {
    /// Even order p >= 2.
    #[arg(long, default_value_t = 2)]
    p: u32,
    /// Finest level; defaults to the grid resolution.
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long, value_enum, default_value = "dyadic")]
    partition: Partition,
    /// Number of uniform checkpoints in (0, T].
    #[arg(long, default_value_t = 4)]
    checkpoints: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Partition {
    Dyadic,
    Lebesgue,
}

impl From<Partition> for PartitionChoice {
    fn from(p: Partition) -> Self {
        match p {
            Partition::Dyadic => PartitionChoice::Dyadic,
            Partition::Lebesgue => PartitionChoice::Lebesgue,
        }
    }
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    levels: LevelArgs,
}

#[derive(Debug, Args)]
struct LocalTimeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    levels: LevelArgs,
    /// Cells of the space grid covering the path range.
    #[arg(long, default_value_t = 200)]
    cells: usize,
    /// Cap on the `levels x checkpoints x cells` tensor.
    #[arg(long, default_value_t = 1 << 30)]
    max_tensor_bytes: u64,
}

#[derive(Debug, Args)]
struct FunctionArgs {
    /// pos_part_pow, neg_part_pow, abs_pow, poly or x_pow_pm1.
    #[arg(long, default_value = "pos_part_pow")]
    function: String,
    /// Level `a` of the kink families, or polynomial coefficients.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0")]
    params: Vec<f64>,
}

#[derive(Debug, Args)]
struct TanakaArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    levels: LevelArgs,
    #[command(flatten)]
    function: FunctionArgs,
    /// Levels of the Tanaka–Meyer identity; ties with samples move to the next float up.
    #[arg(long = "at", value_delimiter = ',', allow_negative_numbers = true, default_value = "0")]
    at: Vec<f64>,
}

#[derive(Debug, Args)]
struct RanksArgs {
    /// Path CSVs on a common grid; repeat for each path.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    n_max: Option<u32>,
    #[command(flatten)]
    levels: LevelArgs,
    #[command(flatten)]
    function: FunctionArgs,
}

#[derive(Debug, Args)]
struct IdentitiesArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    n_max: Option<u32>,
    #[command(flatten)]
    levels: LevelArgs,
}

#[derive(Debug, Args)]
struct AcceptanceArgs {
    /// Directory for the CSVs of both runs and `acceptance.json`.
    #[arg(long, default_value = "acceptance-out")]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEEDS)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    base_seed: u64,
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(file) => Box::new(
            File::create(file).with_context(|| format!("cannot create {}", file.display()))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn load(file: &Path, n_max: Option<u32>) -> Result<SampledPath> {
    Ok(ingest_csv(file, n_max)?.0)
}

fn function(args: &FunctionArgs, p: u32) -> Result<pathwise::TestFunction> {
    let params: &[f64] = if args.function == "x_pow_pm1" { &[] } else { &args.params };
    Ok(tanaka_class(&args.function, params, p)?)
}

fn levels_of(path: &SampledPath, args: &LevelArgs) -> Result<pathwise::PartitionHierarchy> {
    hierarchy(path, args.partition.into(), args.levels.unwrap_or(path.n_max()))
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate(a) => {
            let kind = match a.kind {
                Kind::Fbm => PathKind::Fbm { hurst: a.hurst },
                Kind::Bm => PathKind::Bm,
                Kind::Linear => PathKind::Linear { slope: a.slope },
                Kind::Triangle => {
                    PathKind::Triangle { peak_time: a.peak_time, peak_value: a.peak_value }
                }
                Kind::Constant => PathKind::Constant { value: a.value },
            };
            let path = generate(&PathSpec::new(kind, a.n_max).seed(a.seed).horizon(a.horizon))?;
            write_path_csv(&path, sink(&a.out)?)?;
        }
        Command::Variation(a) => {
            let path = load(&a.input.input, a.input.n_max)?;
            let h = levels_of(&path, &a.levels)?;
            let cps = uniform_checkpoints(&path, a.levels.checkpoints);
            write_variation_csv(
                &pth_variation(&path, &h, a.levels.p, &cps)?,
                sink(&a.levels.out)?,
            )?;
        }
        Command::LocalTime(a) => {
            let path = load(&a.input.input, a.input.n_max)?;
            let h = levels_of(&path, &a.levels)?;
            let cps = uniform_checkpoints(&path, a.levels.checkpoints);
            let bytes = field_bytes(h.len(), cps.len(), a.cells);
            if bytes > u128::from(a.max_tensor_bytes) {
                anyhow::bail!(
                    "local-time tensor needs {bytes} bytes, above --max-tensor-bytes {}",
                    a.max_tensor_bytes
                );
            }
            let grid = SpaceGrid::covering(&path, a.cells)?;
            let field = discrete_local_time(&path, &h, a.levels.p, &grid, &cps)?;
            write_local_time_csv(&field, sink(&a.levels.out)?)?;
        }
        Command::Tanaka(a) => {
            let path = load(&a.input.input, a.input.n_max)?;
            let h = levels_of(&path, &a.levels)?;
            let p = a.levels.p;
            let t = path.last_index();
            let mut reports = vec![finite_n_report(&path, &h, p, &function(&a.function, p)?, t)?];
            for &level in &a.at {
                reports.push(tanaka_meyer_identity(
                    &path,
                    &h,
                    p,
                    off_sample_level(&path, level),
                    t,
                )?);
            }
            write_identity_csv(&reports, sink(&a.levels.out)?)?;
            return Ok(exact_status(&reports));
        }
        Command::Ranks(a) => {
            let paths = a.inputs.iter().map(|f| load(f, a.n_max)).collect::<Result<Vec<_>>>()?;
            let system = build_rank_system(&paths)?;
            let h = levels_of(&paths[0], &a.levels)?;
            let f = function(&a.function, a.levels.p)?;
            let cps = uniform_checkpoints(&paths[0], a.levels.checkpoints);
            let mut rows = Vec::new();
            for k in 1..=system.m() {
                rows.extend(rank_decomposition(&system, k, &h, a.levels.p, &f, &cps)?);
            }
            write_ranks_csv(&paths[0], &rows, sink(&a.levels.out)?)?;
            if !rows.iter().all(|r| r.passed()) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Identities(a) => {
            let (x, y) = (load(&a.x, a.n_max)?, load(&a.y, a.n_max)?);
            let h = levels_of(&x, &a.levels)?;
            let reports = identity_suite(&x, &y, &h, a.levels.p)?;
            write_identity_csv(&reports, sink(&a.levels.out)?)?;
            return Ok(exact_status(&reports));
        }
        Command::Acceptance(a) => {
            let mut opts = AcceptanceOptions::new(&a.out);
            opts.seeds = a.seeds;
            opts.base_seed = a.base_seed;
            opts.threads = threads_from_env();
            let outcomes = run_acceptance(&opts)?;
            for o in &outcomes {
                println!("{o}");
            }
            if outcomes.iter().any(|o| !o.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Run { config } => {
            let parsed = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return Ok(ExitCode::from(2));
                }
            };
            let out = output_dir(&parsed, &config);
            let summary = run(&parsed, &out)?;
            log::info!("wrote {}", out.join("summary.json").display());
            if !summary.passed() {
                eprintln!("{} exact-class identity checks failed", summary.exact_failures);
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exact_status(reports: &[pathwise::IdentityReport]) -> ExitCode {
    let failed =
        reports.iter().any(|r| r.exactness == pathwise::Exactness::ExactPerLevel && !r.passed());
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = threads_from_env() {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("ignoring {THREADS_ENV}: {e}");
        }
    }
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
