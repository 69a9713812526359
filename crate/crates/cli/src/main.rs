use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hlr::experiment::{run, ExperimentConfig, Report, Task};
use hlr::{HlrError, Result};

/// Huber loss regression experiments and model tooling.
#[derive(Parser)]
#[command(name = "hlr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(Common),
    /// Fit a model on a labelled CSV and write the model file.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Model file destination (overrides `model`).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Predict with a saved model, one `truth,prediction` row per input row.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Query CSV.
        #[arg(long)]
        input: PathBuf,
        /// The query CSV has no trailing label column.
        #[arg(long)]
        unlabelled: bool,
        /// Prediction CSV destination (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Report destination (overrides `output`); stdout when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads for repetitions and folds (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// `truth,prediction` CSV destination (overrides `predictions`).
    #[arg(long)]
    predictions: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.reps.is_some() {
            cfg.repetitions = self.reps;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if let Some(p) = &self.predictions {
            cfg.predictions = Some(p.clone());
        }
        Ok(cfg)
    }
}

fn emit(report: &Report) -> Result<()> {
    if report.config.output.is_none() {
        println!("{}", report.to_json()?);
    }
    for (name, s) in &report.aggregate {
        eprintln!("{name}: {:.6} ± {:.6} (n={})", s.mean, s.std, s.count);
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let report = run(&common.load()?.resolve()?)?;
            emit(&report)
        }
        Command::Fit { common, model } => {
            let mut cfg = common.load()?;
            if cfg.task != Task::Fit {
                return Err(HlrError::Config(format!(
                    "`hlr fit` needs a config with task = \"fit\", found {:?}",
                    cfg.task
                )));
            }
            if model.is_some() {
                cfg.model = model;
            }
            let report = run(&cfg.resolve()?)?;
            emit(&report)
        }
        Command::Predict {
            model,
            input,
            unlabelled,
            out,
        } => {
            let model = hlr::model_io::load_model(&model)?;
            let dims = model
                .support
                .first()
                .map(|s| s.view_dims())
                .ok_or_else(|| HlrError::Format("model has no support samples".into()))?;
            let ds = hlr::data::load_csv(&input, &dims, !unlabelled)?;
            let preds = model.predict_many(ds.samples())?;
            let rows: Vec<(Option<f64>, f64)> = ds.optional_labels().into_iter().zip(preds).collect();
            match out {
                Some(path) => hlr::experiment::write_predictions(&rows, std::fs::File::create(path)?),
                None => hlr::experiment::write_predictions(&rows, std::io::stdout().lock()),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
