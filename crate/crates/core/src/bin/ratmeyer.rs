use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ratmeyer::cli::{self, JobSpec, Mode};
use ratmeyer::Error;

/// Meyer-type wavelets for rational dilations: build, verify and export.
#[derive(Parser)]
#[command(name = "ratmeyer", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "RATMEYER_THREADS")]
    threads: Option<usize>,
    /// JSON job file; command-line flags override its fields.
    #[arg(long, global = true)]
    job: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// Output directory for reports and artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pass/fail tolerance of the main residual.
    #[arg(long)]
    tol: Option<f64>,
    /// Grid nodes per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Seed for completion retries.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Dual-Gramian check of the smooth frequency splitting.
    SfsCheck {
        #[arg(long)]
        delta: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// One-dimensional pipeline for the dilation p/q.
    #[command(name = "build-1d")]
    Build1d {
        #[arg(long)]
        p: Option<u64>,
        #[arg(long)]
        q: Option<u64>,
        /// Mollifier width (defaults to half the admissible bound).
        #[arg(long)]
        eps: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Lift the p/q system to n dimensions.
    BuildLift {
        #[arg(long)]
        p: Option<u64>,
        #[arg(long)]
        q: Option<u64>,
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Arbitrary expansive rational dilation, e.g. '[["0","1/2"],["3","0"]]'.
    BuildGeneral {
        #[arg(long)]
        dilation: Option<String>,
        #[arg(long)]
        delta: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Truncated orthonormality (and optional Parseval capture) of a built system.
    Verify {
        /// system.json written by a build command.
        #[arg(long)]
        system: Option<PathBuf>,
        /// Scale range lo:hi.
        #[arg(long, allow_hyphen_values = true)]
        j_range: Option<String>,
        /// Translations with |k_i| <= k-range.
        #[arg(long)]
        k_range: Option<i64>,
        /// Also measure Parseval capture of a Gaussian probe.
        #[arg(long)]
        parseval: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Plot data as CSV.
    Export {
        #[command(subcommand)]
        what: Export,
    },
}

#[derive(Subcommand)]
enum Export {
    /// Splitting functions f̂_j on [lo, hi].
    Fhat {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        j: Vec<usize>,
        #[arg(long, default_value_t = 0.125)]
        delta: f64,
        #[arg(long, default_value_t = -2.5, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 2.5, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// A grid binary (lowpass.rmg, highpass.rmg) over several periods.
    Grid {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        periods: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn job_from(command: Command) -> Result<Option<JobSpec>, Error> {
    let with = |mode: Mode, c: Common| JobSpec { mode: Some(mode), out: c.out, tol: c.tol, grid: c.grid, seed: c.seed, ..JobSpec::default() };
    Ok(Some(match command {
        Command::SfsCheck { delta, common } => JobSpec { delta, ..with(Mode::SfsCheck, common) },
        Command::Build1d { p, q, eps, common } => JobSpec { p, q, eps, ..with(Mode::Build1d, common) },
        Command::BuildLift { p, q, n, common } => JobSpec { p, q, n, ..with(Mode::BuildLift, common) },
        Command::BuildGeneral { dilation, delta, common } => JobSpec {
            dilation: dilation.as_deref().map(cli::parse_dilation).transpose()?,
            delta,
            ..with(Mode::BuildGeneral, common)
        },
        Command::Verify { system, j_range, k_range, parseval, common } => JobSpec {
            system,
            j_range: j_range.as_deref().map(cli::parse_range).transpose()?,
            k_max: k_range,
            parseval: parseval.then_some(true),
            ..with(Mode::Verify, common)
        },
        Command::Export { what } => {
            match what {
                Export::Fhat { j, delta, lo, hi, points, out } => cli::export_fhat(&out, &j, delta, lo, hi, points)?,
                Export::Grid { input, periods, out } => cli::write_grid_csv(&out, &cli::read_grid(&input)?, periods)?,
            }
            return Ok(None);
        }
    }))
}

fn execute(args: Cli) -> Result<bool, Error> {
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    let file_job = args.job.as_deref().map(cli::load_job).transpose()?;
    let Some(job) = job_from(args.command)? else {
        return Ok(true);
    };
    let job = match file_job {
        Some(f) => job.merge(f),
        None => job,
    };
    let outcome = cli::run(&job)?;
    println!("{}", serde_json::to_string_pretty(&outcome.report)?);
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match execute(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
