use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stabscope::pipeline::output_dir;
use stabscope::{Pipeline, PipelineConfig, Pool, Stage};

#[derive(Parser)]
#[command(name = "stabscope", version, about = "Explainable transient stability assessment pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Never changes any output.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory; overrides the one in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate operational scenarios.
    Scenarios,
    /// Dispatch, power flow and CCT at every fault bus.
    Simulate,
    /// Assemble the transient stability database.
    BuildDb,
    /// Train and select the location models.
    Train,
    /// SHAP cube, summary, dependence and permutation importance data.
    Explain,
    /// Covariance trends for the configured variables.
    Trends,
    /// Evaluate the configured operating rules.
    Intervene,
    /// Assemble the run report.
    Report,
    /// Every stage in order.
    Run,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::Scenarios => Stage::Scenarios,
            Command::Simulate => Stage::Simulate,
            Command::BuildDb => Stage::BuildDb,
            Command::Train => Stage::Train,
            Command::Explain => Stage::Explain,
            Command::Trends => Stage::Trends,
            Command::Intervene => Stage::Intervene,
            Command::Report => Stage::Report,
            Command::Run => return None,
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let Some(config) = cli.config else {
        eprintln!("error: --config <FILE> is required");
        return ExitCode::from(1);
    };
    let loaded = match PipelineConfig::from_file(&config) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let out = output_dir(&loaded, cli.out.as_deref());
    let pool = Pool::new(cli.jobs);
    log::info!("config hash {}, {} worker threads, output {}", loaded.config_hash, pool.threads(), out.display());
    let pipeline = Pipeline::new(loaded, out, pool);
    let result = match cli.command.stage() {
        Some(stage) => pipeline.run_stage(stage).map(|_| ()),
        None => pipeline.run_all(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
