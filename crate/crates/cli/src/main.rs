use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use swift_core::harness::{run_experiment, write_results, ExperimentConfig, Mode, Scheme};
use swift_core::parallel;

#[derive(Parser, Debug)]
#[command(name = "swift-sim", version, about = "Adaptive mmWave beam-training simulator")]
struct Cli {
    /// Print the available training schemes and exit.
    #[arg(long)]
    list_schemes: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write results.csv, cdf.csv and config.json.
    Run(RunArgs),
    /// Parse and check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Resolve and validate the configuration, print it, and stop.
    #[arg(long)]
    dry_run: bool,
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)?;
    cfg.validate().with_context(|| format!("{} is not a valid experiment", path.display()))?;
    Ok(cfg)
}

fn summary(cfg: &ExperimentConfig) -> String {
    let schemes: Vec<String> = cfg.schemes.iter().map(Scheme::to_string).collect();
    let sweep = match cfg.mode {
        Mode::SingleUser => format!("snr_db {:?}", cfg.single_user.snr_db),
        Mode::MultiUser => format!("users {:?}", cfg.multi_user.users),
    };
    format!(
        "{:?}: {} trials, seed {}, schemes [{}], {}",
        cfg.mode,
        cfg.trials,
        cfg.seed,
        schemes.join(", "),
        sweep
    )
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.threads == Some(0) {
        anyhow::bail!("--threads must be at least 1");
    }
    if args.dry_run {
        println!("{}", summary(&cfg));
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    eprintln!("{}", summary(&cfg));
    let start = Instant::now();
    let table = parallel::with_threads(args.threads, || run_experiment(&cfg))?;
    let files = write_results(&table, &cfg, &args.out)?;
    eprintln!(
        "wrote {} rows to {} and {} CDF points to {} in {:.1?}",
        table.rows.len(),
        files.results.display(),
        table.cdf.len(),
        files.cdf.display(),
        start.elapsed()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = if cli.list_schemes {
        for (name, what) in Scheme::catalogue() {
            println!("{name:14} {what}");
        }
        Ok(())
    } else {
        match cli.command {
            Some(Command::Run(args)) => run(args),
            Some(Command::Validate { config }) => load(&config).map(|cfg| println!("ok: {}", summary(&cfg))),
            None => Err(anyhow::anyhow!("nothing to do; try `swift-sim run --config FILE` or --help")),
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
