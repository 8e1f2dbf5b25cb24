use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use subrh_cli::{config, run, ConfigError, RunConfig, RunError};

#[derive(Parser)]
#[command(name = "subrh", version, about = "Pseudo-harmonic map heat flow on the Heisenberg nilmanifold")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a `section.key = value` config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        scenario: Option<String>,
    },
}

fn load(path: &PathBuf, out: Option<PathBuf>, seed: Option<u64>, grid: Option<usize>, scenario: Option<String>) -> Result<(RunConfig, String), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
    let mut cfg = RunConfig::default();
    for (k, v) in config::parse_pairs(&text)? {
        cfg.set(&k, &v)?;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = grid {
        cfg.grid_n = n;
    }
    if let Some(s) = scenario {
        cfg.set("scenario", &s)?;
    }
    cfg.validate()?;
    Ok((cfg, text))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { config, out, seed, grid, scenario } = cli.command;
    let (cfg, text) = match load(&config, out, seed, grid, scenario) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg, Some(&text)) {
        Ok(outcome) => {
            let s = &outcome.summary;
            for v in &s.verdicts {
                println!("{:<28} {} slack={:e} tol={:e}", v.name, if v.pass { "pass" } else { "FAIL" }, v.slack, v.tol);
            }
            if let Some(e) = &s.error {
                eprintln!("aborted: {e}");
            }
            println!("outputs in {}", outcome.out_dir.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(RunError::exit_code(&e) as u8)
        }
    }
}
