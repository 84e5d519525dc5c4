use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kinchem::config::{ConfigError, Mode, RunConfig};
use kinchem::run::{emit_report, run_config, RunError, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "kinchem", version, about = "Kinetic chemotaxis simulations and estimate verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eulerian phase-space run (config mode "kinetic").
    Simulate(RunArgs),
    /// Particle run with internal variables (config mode "particles").
    Particles(RunArgs),
    /// Verification suite (config mode "verify").
    Verify(RunArgs),
    /// Summarize a finished run directory and re-check its file hashes.
    Report {
        /// Run directory containing manifest.json.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results are reproducible for a fixed count.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the output directory in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(args: &RunArgs, expected: Mode) -> Result<i32, RunError> {
    let mut config = RunConfig::load(&args.config)?;
    if config.mode != expected {
        return Err(ConfigError::Invalid(vec![format!(
            "config mode is {:?}, but this subcommand runs {:?}",
            config.mode, expected
        )])
        .into());
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(ConfigError::Invalid(vec!["--threads must be at least 1".into()]).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
    }
    let outcome = run_config(&config, args.out.as_deref())?;
    println!("{}: {:?}", outcome.dir.display(), outcome.manifest.status);
    if let Some(m) = &outcome.manifest.message {
        println!("{m}");
    }
    Ok(outcome.exit_code)
}

fn report(dir: &Path) -> Result<i32, RunError> {
    let summary = emit_report(dir)?;
    print!("{}", summary.text);
    Ok(summary.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => execute(a, Mode::Kinetic),
        Command::Particles(a) => execute(a, Mode::Particles),
        Command::Verify(a) => execute(a, Mode::Verify),
        Command::Report { dir } => report(dir),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                RunError::MissingManifest(_) => EXIT_CONFIG,
                e => e.exit_code(),
            }
        }
    };
    ExitCode::from(code as u8)
}
