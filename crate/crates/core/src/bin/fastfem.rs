use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fastfem::cli::{bench, exit_code, format_bench, parse_variants, run_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "fastfem", version, about = "Implicit FEM scenario runner")]
struct Args {
    /// Worker threads for assembly and triangular solves (overrides config and FASTFEM_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Suppress per-step progress on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics and snapshots.
    Run { config: PathBuf },
    /// Compare median step costs across variants.
    Bench {
        config: PathBuf,
        #[arg(long, default_value = "fast,full,cg,pcg")]
        variants: String,
    },
}

fn load(path: &PathBuf, workers: Option<usize>) -> fastfem::Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    cfg.apply_env()?;
    if let Some(w) = workers {
        if w == 0 {
            return Err(fastfem::Error::Config("--workers must be at least 1".into()));
        }
        cfg.run.workers = w;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = match &args.command {
        Command::Run { config } => load(config, args.workers).and_then(|cfg| {
            let summary = run_scenario(&cfg, args.quiet)?;
            if !args.quiet {
                eprintln!("{} steps in {:.2} s", summary.metrics.len(), summary.wall_seconds);
            }
            Ok(())
        }),
        Command::Bench { config, variants } => parse_variants(variants)
            .and_then(|v| Ok((load(config, args.workers)?, v)))
            .and_then(|(cfg, v)| {
                let rows = bench(&cfg, &v, args.quiet)?;
                print!("{}", format_bench(&rows));
                Ok(())
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
