//! Command-line front end for the augmentation workflow.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use latentaug::pipeline::{
    BackendChoice, Overrides, Pipeline, PipelineConfig, PipelineError, Source,
};

#[derive(Parser)]
#[command(name = "latentaug", version, about = "Latent-space attribute augmentation pipeline")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Flags {
    /// TOML config; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Landmark error threshold for the filter.
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Attribute to shift and edit.
    #[arg(long, global = true)]
    attribute: Option<String>,
    /// `synthetic` or `exchange:PATH`.
    #[arg(long, global = true, default_value = "synthetic")]
    backend: String,
    #[arg(long, global = true)]
    edits_per_sample: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Render and encode the train, test and pool splits.
    GenWorld,
    /// Fit one SVM direction per attribute on the pool.
    FitDirections,
    /// Edit training latents along the attribute direction.
    Augment,
    /// Score augmented samples by landmark agreement.
    Filter,
    /// Originals plus the augmented samples the filter kept.
    Mix,
    /// Train a regressor.
    Train {
        /// baseline, augmented or filtered.
        #[arg(long, default_value = "filtered")]
        source: String,
    },
    /// Evaluate every trained model on the test split.
    Eval,
    /// Render the evaluation as a text table.
    Report,
    /// Run every stage and print the comparison table.
    Bench,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenWorld => "gen-world",
            Command::FitDirections => "fit-directions",
            Command::Augment => "augment",
            Command::Filter => "filter",
            Command::Mix => "mix",
            Command::Train { .. } => "train",
            Command::Eval => "eval",
            Command::Report => "report",
            Command::Bench => "bench",
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let f = cli.flags;
    let base = match &f.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let cfg = base.resolve(&Overrides {
        seed: f.seed,
        output_dir: f.out,
        tau: f.tau,
        attribute: f.attribute,
        edits_per_sample: f.edits_per_sample,
    })?;
    let backend = BackendChoice::parse(&f.backend)?;
    let pipeline = Pipeline::new(cfg, backend)?;
    let name = cli.command.name();
    log::info!(
        "{name}: seed {}, output {}",
        pipeline.config().seed,
        pipeline.layout().root().display()
    );
    match &cli.command {
        Command::GenWorld => pipeline.gen_world()?,
        Command::FitDirections => pipeline.fit_directions()?,
        Command::Augment => pipeline.augment()?,
        Command::Filter => pipeline.filter()?,
        Command::Mix => pipeline.mix()?,
        Command::Train { source } => {
            let s = Source::parse(source).ok_or_else(|| {
                PipelineError::Config(format!(
                    "unknown source {source:?}; expected baseline, augmented or filtered"
                ))
            })?;
            pipeline.train(s)?
        }
        Command::Eval => {
            pipeline.eval()?;
        }
        Command::Report | Command::Bench => {
            let table = if matches!(cli.command, Command::Bench) {
                pipeline.bench()?
            } else {
                pipeline.report()?
            };
            print!("{table}");
        }
    }
    pipeline
        .write_summary(name)
        .context("writing run summary")?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<PipelineError>()
                .map_or(latentaug::pipeline::EXIT_FAILURE, PipelineError::exit_code);
            ExitCode::from(code)
        }
    }
}
