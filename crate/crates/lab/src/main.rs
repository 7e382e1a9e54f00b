use clap::{Parser, Subcommand};
use lab::{ExperimentConfig, ExperimentId};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lab", about = "Depth-separation experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a key = value config file.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set n=10`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory; defaults to the config's `out` key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every *.cfg in a directory and write summary.csv.
    Sweep {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Output directory; defaults to the sweep directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List experiment ids and the claim each one tests.
    List,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, set, out } => {
            let cfg = match ExperimentConfig::load(&config, &set) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            let result = match lab::run(&cfg) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            let dir = out.unwrap_or_else(|| PathBuf::from(cfg.out_dir()));
            match result.write(&dir) {
                Ok(p) => println!("{}", p.display()),
                Err(e) => {
                    eprintln!("cannot write outputs: {e}");
                    return ExitCode::from(1);
                }
            }
            for c in &result.report.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(e) = &result.report.error {
                eprintln!("error: {e}");
            }
            if result.report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) }
        }
        Command::Sweep { dir, workers, out } => {
            let out = out.unwrap_or_else(|| dir.clone());
            match lab::sweep::sweep_dir(&dir, &out, workers) {
                Ok(s) => {
                    print!("{}", s.summary);
                    if s.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) }
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::List => {
            for id in ExperimentId::ALL {
                println!("{id}\t{}", id.theorem());
            }
            ExitCode::SUCCESS
        }
    }
}
