use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use robustmc::cli::{load_config, replay, run_experiment, CliError, Mode};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    CiTable,
    Margin,
    Curve,
    Specs,
    Demo1,
    Demo2,
    /// Re-run the config embedded in a run log and compare the logs.
    Replay,
}

/// Probabilistic robustness margins and degradation curves by sequential
/// Monte Carlo.
#[derive(Debug, Parser)]
#[command(name = "robustmc", version)]
struct Args {
    #[arg(value_enum)]
    mode: Command,
    /// TOML config (optional for demo1/demo2; a run log for replay).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: &Args) -> Result<(), CliError> {
    let mode = match args.mode {
        Command::CiTable => Mode::CiTable,
        Command::Margin => Mode::Margin,
        Command::Curve => Mode::Curve,
        Command::Specs => Mode::Specs,
        Command::Demo1 => Mode::Demo1,
        Command::Demo2 => Mode::Demo2,
        Command::Replay => {
            let log = args.config.as_deref().ok_or_else(|| {
                CliError::Validation("replay requires --config <run_log.jsonl>".into())
            })?;
            let out = args
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("out/replay"));
            let (same, _) = replay(log, &out)?;
            println!("replay {}", if same { "identical" } else { "DIFFERS" });
            return if same {
                Ok(())
            } else {
                Err(CliError::Numerical {
                    stage: "replay",
                    message: "transcript differs".into(),
                })
            };
        }
    };
    let mut config = load_config(mode, args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let outcome = run_experiment(mode, &config, args.out.as_deref())?;
    print!("{}", outcome.summary);
    for p in &outcome.artifacts {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
