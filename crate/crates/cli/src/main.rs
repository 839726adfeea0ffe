//! `cptrl`: runs CPT policy-optimization experiments described by JSON
//! config files.
//!
//! Exit codes: 0 on success, 2 for config or input-data errors, 3 when an
//! experiment aborts at run time.

mod config;
mod error;
mod experiments;
mod output;

use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cptrl", version, about = "CPT policy optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config's `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seeds as an inclusive range `a..b` or a list `a,b,c` (overrides the config).
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<SeedList>,
        /// Worker threads; defaults to one per core.
        #[arg(long, env = "CPTRL_THREADS")]
        threads: Option<usize>,
    },
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let int = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("`{t}` is not a seed"));
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let range: RangeInclusive<u64> = int(a)?..=int(b)?;
        if range.is_empty() {
            return Err(format!("empty seed range `{s}`"));
        }
        return Ok(SeedList(range.collect()));
    }
    s.split(',').map(int).collect::<Result<_, _>>().map(SeedList)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate { config } => {
            let x = config::load(&config, None)?;
            println!("ok: {} on {}", x.config.kind.name(), x.env_name);
            Ok(())
        }
        Command::Run {
            config,
            out,
            seeds,
            threads,
        } => {
            if let Some(n) = threads {
                if n == 0 {
                    return Err(CliError::Config("--threads must be at least 1".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
            }
            let x = config::load(&config, seeds.map(|s| s.0))?;
            let out_dir = match (out, &x.config.out) {
                (Some(dir), _) => dir,
                (None, Some(dir)) => config.parent().unwrap_or(std::path::Path::new(".")).join(dir),
                (None, None) => PathBuf::from("results").join(config.file_stem().unwrap_or_default()),
            };
            let outputs = experiments::run(&x)?;
            outputs.write(&out_dir)?;
            println!("wrote {} files to {}", outputs.paths().count(), out_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cptrl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges_are_inclusive() {
        assert_eq!(parse_seeds("0..19").unwrap().0.len(), 20);
        assert_eq!(parse_seeds("3..=4").unwrap().0, vec![3, 4]);
        assert_eq!(parse_seeds("5,1,2").unwrap().0, vec![5, 1, 2]);
        assert!(parse_seeds("4..2").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
