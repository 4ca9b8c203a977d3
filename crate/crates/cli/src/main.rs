//! Command-line harness for the broadcast recovery simulator: error-file
//! generation, single runs, the bandwidth/seed/mode sweep matrix, and
//! aggregated reports with charts.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sarpsim_cli::config::{load_config, parse_seeds, ChannelSetting};
use sarpsim_cli::runner::{build_report, generate_error_files, run_single, run_sweep};
use sarpsim_cli::{CliError, Result};
use sarpsim_core::sarp::RecoveryMode;

#[derive(Parser)]
#[command(
    name = "sarpsim",
    about = "Simulate live DASH broadcast with unicast loss recovery",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw per-seed segment error files.
    GenErrors(GenErrorsArgs),
    /// Execute one scenario and write its artifacts.
    Run(RunArgs),
    /// Execute the full bandwidth x mode x seed matrix.
    Sweep(SweepArgs),
    /// Aggregate sweep output into charts and a report.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenErrorsArgs {
    /// Number of segments in the stream.
    #[arg(long, default_value_t = 1200)]
    segments: u32,
    /// Fraction of segments marked as lost.
    #[arg(long, default_value_t = 0.10)]
    fraction: f64,
    /// Seeds as `a..b` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "1..10")]
    seeds: String,
    /// Output directory for the error files.
    #[arg(long, default_value = "errors")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Config file; omitted means built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the recovery mode (sarp-on or sarp-off).
    #[arg(long)]
    mode: Option<String>,
    /// Override the unicast bandwidth, bits per second.
    #[arg(long, conflicts_with = "bw_trace")]
    bw: Option<u64>,
    /// Override the unicast bandwidth with a trace CSV.
    #[arg(long)]
    bw_trace: Option<PathBuf>,
    /// Output directory for the run artifacts.
    #[arg(long, default_value = "run-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Config file; omitted means built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; one subdirectory per cell.
    #[arg(long, default_value = "sweep-out")]
    out: PathBuf,
    /// Worker thread count; omitted means one per CPU.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep output directory to aggregate.
    #[arg(long = "in")]
    in_dir: PathBuf,
    /// Output directory for charts and report.json.
    #[arg(long, default_value = "report-out")]
    out: PathBuf,
    /// Confidence level for the aggregated intervals.
    #[arg(long, default_value_t = 0.90)]
    level: f64,
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenErrors(args) => {
            let seeds = parse_seeds("seeds", &args.seeds)?;
            let paths = generate_error_files(args.segments, args.fraction, &seeds, &args.out)?;
            println!("wrote {} error files under {}", paths.len(), args.out.display());
        }
        Command::Run(args) => {
            let mut cfg = load_config(args.config.as_deref())?;
            if let Some(seed) = args.seed {
                cfg.run.seed = seed;
            }
            if let Some(mode) = &args.mode {
                cfg.run.mode = RecoveryMode::parse(mode).map_err(|_| {
                    CliError::Config(format!(
                        "invalid value '{mode}' for 'mode': expected sarp-on or sarp-off"
                    ))
                })?;
            }
            if let Some(bps) = args.bw {
                cfg.run.channel = ChannelSetting::ConstantBps(bps);
            }
            if let Some(path) = &args.bw_trace {
                cfg.run.channel = ChannelSetting::Trace(path.clone());
            }
            let result = run_single(&cfg, &args.out)?;
            println!(
                "run complete: final latency {:.3} s, stalls {} ({:.3} s), recoveries {}",
                result.playback.final_latency_s,
                result.playback.stall_log.len(),
                result.playback.stall_total_s(),
                result.recovery_count
            );
            println!("artifacts in {}", args.out.display());
        }
        Command::Sweep(args) => {
            let cfg = load_config(args.config.as_deref())?;
            let outcomes = run_sweep(&cfg, &args.out, args.jobs)?;
            println!("sweep complete: {} cells under {}", outcomes.len(), args.out.display());
        }
        Command::Report(args) => {
            let warnings = build_report(&args.in_dir, &args.out, args.level)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            println!("report written to {}", args.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
