use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use treebench::pipeline::{execute, exit_code, Command, Run};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    /// Load the raw extract, keep the curve cohort and recode it.
    Ingest,
    /// Backward feature elimination by forest SHAP importance.
    SelectFeatures,
    /// Cross-validated comparison of the model roster.
    Compare,
    /// SHAP attributions from the selected-feature forest.
    Explain,
}

#[derive(Debug, Parser)]
#[command(name = "treebench", version, about = "Decision-tree benchmarking on coded crash records")]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Ingest => Command::Ingest,
        Cmd::SelectFeatures => Command::SelectFeatures,
        Cmd::Compare => Command::Compare,
        Cmd::Explain => Command::Explain,
    };
    let result = Run::load(&cli.config, cli.out.as_deref(), cli.seed).and_then(|run| execute(command, &run));
    match &result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => eprintln!("treebench: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
