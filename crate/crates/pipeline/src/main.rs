use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vsn_pipeline::commands::{self, Run};
use vsn_pipeline::fixtures;

#[derive(Parser)]
#[command(name = "vsn", version, about = "Narrative speech screening study runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; relative paths resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// System 1-8; systems 1-7 are feature sets, 8 is the embedding model.
    #[arg(long)]
    system: Option<u8>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic fixture corpus and its config.
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Acoustic, linguistic and reference features per participant.
    Extract(RunArgs),
    /// Fit the topic model and emit topic statistics and trajectories.
    TrainDtm(RunArgs),
    /// Fit the classifier and regressor of a feature system.
    TrainSvm(RunArgs),
    /// Train the embedding model (system 8).
    TrainTitan(RunArgs),
    /// Score the test split and write the report.
    Eval(RunArgs),
    /// Feature attributions and correlation ranking.
    Explain(RunArgs),
    /// Plot-ready matrices: topic curves, correlation and attention maps.
    Plotdata(RunArgs),
}

fn open(a: &RunArgs) -> vsn_pipeline::Result<Run> {
    Run::open(&a.config, a.system, a.seed, &a.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenFixtures { out, seed } => fixtures::generate(out, *seed),
        Command::Extract(a) => open(a).and_then(|r| commands::extract(&r)),
        Command::TrainDtm(a) => open(a).and_then(|r| commands::train_dtm(&r)),
        Command::TrainSvm(a) => open(a).and_then(|r| commands::train_svm(&r)),
        Command::TrainTitan(a) => open(a).and_then(|r| commands::train_titan(&r)),
        Command::Eval(a) => open(a).and_then(|r| commands::eval(&r)),
        Command::Explain(a) => open(a).and_then(|r| commands::explain(&r)),
        Command::Plotdata(a) => open(a).and_then(|r| commands::plotdata(&r)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
