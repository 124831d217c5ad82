use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irs_swipt_cli::{execute, load_experiment, CliError, Overrides, Profile, Scheme};

#[derive(Parser)]
#[command(name = "irs-swipt", version, about = "Grouping and resource allocation sweeps for IRS-aided SWIPT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded sweep and write results.csv and manifest.json.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Number of channel seeds per sweep point.
    #[arg(long)]
    seeds: Option<u64>,
    /// Comma-separated schemes: nonoverlap, overlap, random, noug, each
    /// optionally prefixed by `nonrobust-`.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    /// Base scenario the configuration overrides apply to.
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Only validate the configuration (optionally given here instead of
    /// with --config) and exit.
    #[arg(long, value_name = "PATH", num_args = 0..=1)]
    validate_config: Option<Option<PathBuf>>,
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let overrides =
        Overrides { profile: args.profile, seeds: args.seeds, schemes: args.schemes, workers: args.workers };
    let path = match (&args.validate_config, &args.config) {
        (Some(Some(p)), _) | (_, Some(p)) => p.clone(),
        _ => return Err(CliError::Schema(vec!["a configuration file is required (--config PATH)".into()])),
    };
    let exp = load_experiment(&path, &overrides)?;
    for point in exp.points() {
        for w in point.validate().unwrap_or_default() {
            log::warn!("{w}");
        }
    }
    if args.validate_config.is_some() {
        let rows = exp.points().len() as u64 * exp.seeds * exp.schemes.len() as u64;
        println!("{}: valid ({rows} rows)", path.display());
        return Ok(());
    }
    let rows = execute(&exp, &args.out)?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!("{} rows written to {} ({failed} not ok)", rows.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
