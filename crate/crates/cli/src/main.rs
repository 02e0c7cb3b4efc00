use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use drphase::{run, Command, ConfigError, OutputFormat, RunConfig, THREADS_ENV};

/// Exact evolution, free-energy bounds and phase criteria for the Derrida–Retaux
/// recursion with a random number of terms.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    output: Option<OutputFormat>,
    /// Overrides the simulation seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides every step count in the configuration
    #[arg(long)]
    steps: Option<usize>,
}

fn thread_cap() -> Result<Option<usize>, ConfigError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(ConfigError::Field {
                path: THREADS_ENV.into(),
                message: format!("expected a positive integer, got {v:?}"),
            }),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let setup = || -> Result<RunConfig, ConfigError> {
        if let Some(n) = thread_cap()? {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .expect("global pool is built once");
        }
        let mut cfg = RunConfig::from_path(&cli.config)?;
        if let Some(steps) = cli.steps {
            cfg.override_steps(steps);
        }
        if let Some(seed) = cli.seed {
            cfg.simulate.seed = Some(seed);
        }
        Ok(cfg)
    };
    let cfg = match setup() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = run(cli.command, &cfg, cli.output, &mut out);
    let _ = out.flush();
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
