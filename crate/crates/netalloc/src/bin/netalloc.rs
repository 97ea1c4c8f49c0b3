use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netalloc::{replay, run_experiment, run_stage, Error, ExperimentConfig, Manifest, Stage, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "netalloc", version, about = "Budgeted treatment allocation experiments on networks")]
struct Cli {
    /// Worker threads; overrides the NETALLOC_WORKERS environment variable.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write graphs, features and factual datasets.
    Generate(StageArgs),
    /// Fit the estimator grids and select by validation loss.
    Train(StageArgs),
    /// Compute one allocation per method and budget.
    Allocate(StageArgs),
    /// Score allocations against the true outcome model.
    Evaluate(StageArgs),
    /// Reshape results into plot-ready tables.
    Report(StageArgs),
    /// Run every stage, from a config or by replaying a manifest.
    Run {
        #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(args: &StageArgs) -> netalloc::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        config.output = out.clone();
    }
    Ok(config)
}

fn workers(flag: Option<usize>) -> netalloc::Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli) -> netalloc::Result<Manifest> {
    if let Some(n) = workers(cli.workers)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
    }
    let (args, stage) = match cli.command {
        Command::Generate(a) => (a, Stage::Generate),
        Command::Train(a) => (a, Stage::Train),
        Command::Allocate(a) => (a, Stage::Allocate),
        Command::Evaluate(a) => (a, Stage::Evaluate),
        Command::Report(a) => (a, Stage::Report),
        Command::Run { config, manifest, out } => {
            return match (config, manifest) {
                (_, Some(m)) => replay(&m, out.as_deref()),
                (Some(c), None) => {
                    let mut config = ExperimentConfig::load(&c)?;
                    if let Some(out) = out {
                        config.output = out;
                    }
                    warn(&config)?;
                    run_experiment(&config)
                }
                (None, None) => Err(Error::Config("run needs --config or --manifest".into())),
            };
        }
    };
    let config = load(&args)?;
    warn(&config)?;
    run_stage(&config, stage)
}

fn warn(config: &ExperimentConfig) -> netalloc::Result<()> {
    for w in config.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(manifest) => {
            let failures: Vec<_> = manifest.failures().collect();
            for f in &failures {
                let what = f.method.as_deref().unwrap_or("stage");
                eprintln!("failed: seed {} beta {} {what}: {}", f.seed, f.beta_spillover, f.error);
            }
            println!("{}", manifest.config.output.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
