//! `tvsnr`: schedule tables, reverse sampling and trajectory analysis.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::RunArgs;
use config::{Eta, ScheduleArgs};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<tvsnr::Error> for CliError {
    fn from(e: tvsnr::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "tvsnr", version, about = "TV/SNR diffusion schedules, samplers and diagnostics")]
struct Cli {
    /// JSON experiment config; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the schedule catalog
    #[command(subcommand)]
    Schedules(SchedulesCmd),
    /// Draw samples with a reverse solver
    Sample {
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Curvature, support and density reports
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
}

#[derive(Subcommand)]
enum SchedulesCmd {
    /// Catalog entries with their default parameters
    List,
    /// Tabulate t, tv_sq, snr_sq, a, b, f, g_sq
    Eval {
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Evaluation times (repeat or comma-separate)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        t: Vec<f64>,
        /// Number of evenly spaced times over the schedule's interval
        #[arg(long)]
        t_grid: Option<usize>,
        /// Steps used to derive a scaled eta
        #[arg(long)]
        steps: Option<usize>,
        /// Output CSV (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated schedule names, one report each
    #[arg(long, value_delimiter = ',')]
    compare: Vec<String>,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Local and global curvature of ODE trajectories
    Curvature(AnalyzeArgs),
    /// Relative support b(t)/b(t_max)
    Support {
        #[command(flatten)]
        args: AnalyzeArgs,
        /// Evaluation times (grid nodes when omitted)
        #[arg(long, value_delimiter = ',')]
        t: Vec<f64>,
    },
    /// Marginal density on a t × x lattice
    Shadow(AnalyzeArgs),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("TVSNR_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("TVSNR_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let config = cli.config.as_deref();
    match cli.command {
        Command::Schedules(SchedulesCmd::List) => commands::schedules_list(),
        Command::Schedules(SchedulesCmd::Eval {
            schedule,
            t,
            t_grid,
            steps,
            out,
        }) => commands::schedules_eval(config, &schedule, &t, t_grid, steps, out.as_deref()),
        Command::Sample { schedule, run } => {
            let exp = commands::resolve(config, &schedule, &run)?;
            commands::sample(&exp)
        }
        Command::Analyze(cmd) => {
            let (args, times, which) = match cmd {
                AnalyzeCmd::Curvature(a) => (a, Vec::new(), "curvature"),
                AnalyzeCmd::Support { args, t } => (args, t, "support"),
                AnalyzeCmd::Shadow(a) => (a, Vec::new(), "shadow"),
            };
            let exp = commands::resolve(config, &args.schedule, &args.run)?;
            let scaled = args.schedule.eta == Some(Eta::Scaled);
            let kappa = args.schedule.kappa;
            match which {
                "curvature" => commands::analyze_curvature(&exp, &args.compare, kappa, scaled),
                "support" => commands::analyze_support(&exp, &args.compare, &times, kappa, scaled),
                _ => commands::analyze_shadow(&exp, &args.compare, kappa, scaled),
            }
        }
    }
}

fn report(err: &CliError) -> ExitCode {
    let body = json!({
        "error": {
            "kind": err.kind(),
            "code": err.exit_code(),
            "message": err.message(),
        }
    });
    eprintln!("{body}");
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&CliError::Config(e.render().to_string().trim_end().to_string())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
