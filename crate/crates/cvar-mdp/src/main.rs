use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cvar_mdp::cli;
use cvar_mdp::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "cvar-mdp",
    version,
    about = "Tabular static-CVaR MDP solver, learner, and evaluator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory, overriding the config (also CVAR_MDP_OUT_DIR).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap (also CVAR_MDP_MAX_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run value iteration and write Q-tables plus reports
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train Q-learning per seed; a reference table enables the error trace
    Learn {
        #[arg(long)]
        config: PathBuf,
        /// Previously solved Q-table to compare against
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Sweep risk levels with a solved table: outer optimization + rollouts
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Q-table produced by solve or learn
        #[arg(long)]
        table: PathBuf,
    },
    /// Solve both bounding operators across grid resolutions
    CompareBounds {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(args: &Cli) -> cvar_mdp::Result<()> {
    let config_path = match &args.command {
        Command::Solve { config }
        | Command::Learn { config, .. }
        | Command::Evaluate { config, .. }
        | Command::CompareBounds { config } => config.clone(),
    };
    let (config, base_dir) = RunConfig::load(&config_path)?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| std::env::var("CVAR_MDP_OUT_DIR").ok().map(PathBuf::from))
        .unwrap_or_else(|| config.output_dir.clone());

    match &args.command {
        Command::Solve { .. } => {
            let files = cli::cmd_solve(&config, &base_dir, &out_dir)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Learn {
            reference,
            seed_offset,
            ..
        } => {
            let files = cli::cmd_learn(&config, &base_dir, &out_dir, reference.as_deref(), *seed_offset)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Evaluate { table, .. } => {
            let csv = cli::cmd_evaluate(&config, &base_dir, table, &out_dir)?;
            println!("{}", csv.display());
        }
        Command::CompareBounds { .. } => {
            let csv = cli::cmd_compare_bounds(&config, &base_dir, &out_dir)?;
            println!("{}", csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Cli::parse();

    let workers = args.workers.or_else(|| {
        std::env::var("CVAR_MDP_MAX_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }

    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(cli::exit_code(&err) as u8)
        }
    }
}
