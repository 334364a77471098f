use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qdimer_cli::commands::Command;
use qdimer_cli::config::{Overrides, RunConfig, OUT_ENV};
use qdimer_cli::error::{CliError, Result, EXIT_OK, EXIT_USAGE};
use qdimer_cli::estimate::LARGE_SECONDS;
use qdimer_cli::manifest::OutputSet;

/// Sweeps and figure data for the driven-dissipative Bose-Hubbard dimer.
#[derive(Parser, Debug)]
#[command(name = "qdimer", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (overrides QDIMER_OUT and the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Allow runs estimated to be paper-scale.
    #[arg(long, global = true)]
    large: bool,
    /// Print the resolved configuration and the estimate, then exit.
    #[arg(long)]
    dry_run: bool,
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides { seed: cli.seed, workers: cli.workers, out: cli.out.clone() };
    cfg.apply(&overrides, std::env::var_os(OUT_ENV).map(PathBuf::from));
    cfg.validate()?;

    let estimate = cli.command.estimate(&cfg)?;
    let wall = estimate.wall_seconds(cfg.workers);
    eprintln!("{}: estimated {:.0} s on {} worker(s)", cli.command.name(), wall, cfg.workers);
    for reason in &estimate.paper_scale {
        eprintln!("  paper-scale: {reason}");
    }
    if cli.dry_run {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    if !cli.large && (!estimate.paper_scale.is_empty() || wall > LARGE_SECONDS) {
        return Err(CliError::Usage(format!(
            "run estimated at {wall:.0} s or paper-scale; pass --large to proceed"
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let mut out = OutputSet::prepare(&cfg.out)?;
    pool.install(|| cli.command.run(&cfg, &mut out))?;
    let manifest = out.finish(cli.command.name(), &cfg, wall)?;
    eprintln!(
        "wrote {} file(s) to {} in {:.1} s",
        manifest.outputs.len(),
        cfg.out.display(),
        manifest.wall_clock_seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
