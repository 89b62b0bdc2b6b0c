use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lnb::harness::{grid_search, run_experiment, ExperimentConfig};
use lnb::{verify, Error};

#[derive(Parser)]
#[command(name = "lnb", version, about = "Train and check linear neuron boosting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its metrics CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config entry, e.g. `--set epochs=3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Sweep one config key and report the best value.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the invariant and oracle checks.
    Verify,
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    raw.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::config(format!("--set expects KEY=VALUE, got {kv:?}")))
        })
        .collect()
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = match parse_overrides(&overrides).and_then(|o| ExperimentConfig::load(&config, &o)) {
                Ok(cfg) => cfg,
                Err(e) => return fail(&e),
            };
            println!("running {cfg}");
            match run_experiment(&cfg) {
                Ok(summary) => {
                    println!("{summary}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Grid {
            config,
            axis,
            values,
            overrides,
        } => {
            let cfg = match parse_overrides(&overrides).and_then(|o| ExperimentConfig::load(&config, &o)) {
                Ok(cfg) => cfg,
                Err(e) => return fail(&e),
            };
            match grid_search(&cfg, &axis, &values) {
                Ok((report, best)) => {
                    println!("{report}");
                    if best.is_some() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(3)
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Verify => {
            let results = verify::run_all();
            let mut ok = true;
            for r in &results {
                println!("{r}");
                ok &= r.passed;
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
    }
}
