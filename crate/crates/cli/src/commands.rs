use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use hokalman::hankel::{default_split, markov_from_ss};
use hokalman::io;
use hokalman::realize::ho_kalman;
use hokalman::sysid::{estimate_markov, random_system, simulate_rollouts};
use hokalman::{Error, RealizationMode, RsvdConfig, TestMatrixKind};

use crate::bench::{run_bench, run_bounds, to_csv};
use crate::config::BenchConfig;

#[derive(Debug, Parser)]
#[command(
    name = "hokalman",
    version,
    about = "Ho-Kalman system realization with randomized SVD"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate rollouts of a random (or given) stable system.
    Simulate(SimulateArgs),
    /// Estimate Markov parameters from a rollout dataset by least squares.
    Estimate(EstimateArgs),
    /// Realize a state-space model from Markov parameters.
    Realize(RealizeArgs),
    /// Run the benchmark protocol from a config file.
    Bench(BenchArgs),
    /// Evaluate every bound for the configurations in a config file.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long = "T")]
    pub horizon: usize,
    #[arg(long = "N")]
    pub rollouts: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_u: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_w: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma_v: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Simulate this state-space bundle instead of a random system.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Also write the simulated system as a state-space bundle.
    #[arg(long)]
    pub system_out: Option<PathBuf>,
    /// Also write its true Markov parameters up to horizon T.
    #[arg(long)]
    pub markov_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Det,
    Rsvd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TestMatrixArg {
    Gaussian,
    Srft,
}

#[derive(Debug, Args)]
pub struct RealizeArgs {
    #[arg(long)]
    pub markov: PathBuf,
    #[arg(long)]
    pub order: usize,
    #[arg(long)]
    pub t1: Option<usize>,
    #[arg(long)]
    pub t2: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Det)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    pub oversample: usize,
    #[arg(long, default_value_t = 0)]
    pub power: usize,
    #[arg(long, value_enum, default_value_t = TestMatrixArg::Gaussian)]
    pub test_matrix: TestMatrixArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the `output` key of the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run trials concurrently; timings then include contention.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numerical() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    io::read_file(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Parse errors are prefixed with the file they came from.
fn in_file<T>(path: &Path, r: hokalman::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        Error::Parse { .. } => usage(format!("{}: {e}", path.display())),
        other => other.into(),
    })
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    io::write_file(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let ss = match &a.system {
        Some(path) => in_file(path, io::state_space_from_csv(&read(path)?))?,
        None => match (a.n, a.m, a.p) {
            (Some(n), Some(m), Some(p)) => random_system(n, m, p, a.seed)?,
            _ => return Err(usage("--n, --m and --p are required without --system")),
        },
    };
    let data = simulate_rollouts(
        &ss, a.rollouts, a.horizon, a.sigma_u, a.sigma_w, a.sigma_v, a.seed,
    )?;
    write(&a.out, &io::dataset_to_csv(&data))?;
    if let Some(path) = &a.system_out {
        write(path, &io::state_space_to_csv(&ss))?;
    }
    if let Some(path) = &a.markov_out {
        write(path, &io::markov_to_csv(&markov_from_ss(&ss, a.horizon)?))?;
    }
    Ok(())
}

pub fn estimate(a: &EstimateArgs) -> Result<(), Failure> {
    let data = in_file(&a.data, io::dataset_from_csv(&read(&a.data)?))?;
    let g = estimate_markov(&data)?;
    write(&a.out, &io::markov_to_csv(&g))
}

pub fn realize(a: &RealizeArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let g = in_file(&a.markov, io::markov_from_csv(&read(&a.markov)?))?;
    let (t1, t2) = match (a.t1, a.t2) {
        (Some(t1), Some(t2)) => (t1, t2),
        (None, None) => default_split(g.horizon())?,
        _ => return Err(usage("--t1 and --t2 go together")),
    };
    let mode = match a.mode {
        ModeArg::Det => RealizationMode::Deterministic,
        ModeArg::Rsvd => RealizationMode::Stochastic(
            RsvdConfig::new(a.order, a.oversample)
                .power(a.power)
                .seed(a.seed)
                .test_matrix(match a.test_matrix {
                    TestMatrixArg::Gaussian => TestMatrixKind::Gaussian,
                    TestMatrixArg::Srft => TestMatrixKind::Srft,
                }),
        ),
    };
    let r = ho_kalman(&g, a.order, t1, t2, mode)?;
    write(&a.out, &io::state_space_to_csv(&r.ss))?;
    let spectrum: Vec<String> = r.spectrum.iter().map(|s| format!("{s:.10e}")).collect();
    let _ = writeln!(stdout, "mode={} T1={t1} T2={t2} order={}", r.mode, a.order);
    let _ = writeln!(stdout, "time_s={:.6}", r.timing);
    let _ = writeln!(stdout, "sigma={}", spectrum.join(","));
    Ok(())
}

fn load_config(path: &Path) -> Result<BenchConfig, Failure> {
    in_file(path, read(path)?.parse::<BenchConfig>())
}

pub fn bench(a: &BenchArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config)?;
    let out = match (&a.out, &cfg.output) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => return Err(usage("no output path: pass --out or set 'output'")),
    };
    let rows = run_bench(&cfg, a.parallel)?;
    write(&out, &to_csv(&rows))
}

pub fn bounds(a: &BoundsArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config)?;
    write(&a.out, &run_bounds(&cfg)?)
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Realize(a) => realize(a, stdout),
        Command::Bench(a) => bench(a),
        Command::Bounds(a) => bounds(a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}
