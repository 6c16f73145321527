//! `flynn`: train, infer and run experiments with the FlyNN classifier.
//!
//! Exit codes: 0 success, 2 bad configuration or arguments, 3 bad input data
//! or files, 4 network or federation transport failure, 5 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flynn_core::data::{fetch_dataset, load_csv, FetchOptions, CACHE_DIR_ENV};
use flynn_core::harness::{
    cmd_bench, cmd_dp_sweep, cmd_scale, cmd_train, default_cache_dir, label_accuracy, load_model, predict_dataset,
    save_model, write_predictions, DatasetSource, ExperimentConfig, ModelConfig,
};
use flynn_core::{Error, ErrorCategory};

#[derive(Parser)]
#[command(name = "flynn", version, about = "FlyHash nearest-neighbor classifier toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it to a file.
    Train(TrainArgs),
    /// Predict every row of a CSV with a saved model.
    Infer(InferArgs),
    /// Cross-validated FlyNN / kNN / SBFC comparison.
    Bench(RunArgs),
    /// Federated training time against the number of parties.
    Scale(RunArgs),
    /// Accuracy of DP federated training over an (epsilon, T) grid.
    DpSweep(RunArgs),
    /// Download a dataset into the content-addressed cache.
    Fetch(FetchArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Numeric CSV with one label column.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    label_column: usize,
    /// The first CSV row is a header.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config with [dataset] and [model] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    rho: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Root seed; the lifting seed is derived from it unless the config pins one.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Predictions CSV: row_id, predicted_label, one score column per class.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct FetchArgs {
    url: String,
    #[arg(long, env = CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    attempts: u32,
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Transport => 4,
        ErrorCategory::Internal => 5,
    }
}

fn load_run_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.repetitions {
        cfg.repetitions = r;
    }
    if let Some(o) = &args.output {
        cfg.output = Some(o.clone());
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    Ok(cfg)
}

fn csv_source(data: &DataArgs) -> Option<DatasetSource> {
    data.data.as_ref().map(|path| DatasetSource::Csv {
        path: path.clone(),
        label_column: data.label_column,
        has_header: data.header,
        min_max_scale: false,
    })
}

fn train_config(args: &TrainArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => {
            let dataset =
                csv_source(&args.data).ok_or_else(|| Error::Config("train needs --config or --data".into()))?;
            let mut cfg = ExperimentConfig::from_toml_str("[dataset]\nsource = \"csv\"\npath = \"\"\n")?;
            cfg.dataset = dataset;
            cfg
        }
    };
    if args.config.is_some() {
        if let Some(src) = csv_source(&args.data) {
            cfg.dataset = src;
        }
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let base = cfg.model.clone();
    let pick = |flag: Option<usize>, from: Option<usize>, name: &str| {
        flag.or(from)
            .ok_or_else(|| Error::Config(format!("missing --{name} (or [model].{name})")))
    };
    cfg.model = Some(ModelConfig {
        m: pick(args.m, base.as_ref().map(|b| b.m), "m")?,
        s: pick(args.s, base.as_ref().map(|b| b.s), "s")?,
        rho: pick(args.rho, base.as_ref().map(|b| b.rho), "rho")?,
        gamma: args.gamma.or(base.as_ref().map(|b| b.gamma)).unwrap_or(0.0),
        seed: base.and_then(|b| b.seed),
    });
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(args) => {
            let cfg = train_config(&args)?;
            let (ds, model) = cmd_train(&cfg)?;
            save_model(&model, &args.output)?;
            let preds = predict_dataset(&model, &ds)?;
            println!(
                "trained on {} rows, {} classes; training accuracy {:.4}; model written to {}",
                ds.n(),
                model.num_classes(),
                label_accuracy(&model, &ds, &preds),
                args.output.display()
            );
        }
        Command::Infer(args) => {
            let model = load_model(&args.model)?;
            let path = args
                .data
                .data
                .as_ref()
                .ok_or_else(|| Error::Config("infer needs --data".into()))?;
            let ds = load_csv(path, args.data.label_column, args.data.header)?;
            let preds = predict_dataset(&model, &ds)?;
            write_predictions(&args.output, &model, &preds)?;
            println!(
                "{} predictions written to {}; accuracy against the label column {:.4}",
                preds.len(),
                args.output.display(),
                label_accuracy(&model, &ds, &preds)
            );
        }
        Command::Bench(args) => {
            let report = cmd_bench(&load_run_config(&args)?)?;
            for m in &report.summary.methods {
                println!(
                    "{:>6}  accuracy {:.4}  normalized {:+.4} ± {:.4}",
                    m.method, m.mean_accuracy, m.mean_normalized, m.se_normalized
                );
            }
            println!(
                "results: {}\nmanifest: {}",
                report.results.display(),
                report.manifest.display()
            );
        }
        Command::Scale(args) => {
            let report = cmd_scale(&load_run_config(&args)?)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("parties  seconds (mean ± sd)  speedup  bytes sent");
            for r in &report.summary.rows {
                println!(
                    "{:>7}  {:>9.4} ± {:<8.4}  {:>7.3}  {}",
                    r.parties, r.mean_seconds, r.sd_seconds, r.speedup, r.bytes_sent
                );
            }
            println!(
                "results: {}\nmanifest: {}",
                report.results.display(),
                report.manifest.display()
            );
        }
        Command::DpSweep(args) => {
            let report = cmd_dp_sweep(&load_run_config(&args)?)?;
            let s = &report.summary;
            println!("non-DP accuracy {:.4} ± {:.4}", s.non_dp_mean, s.non_dp_se);
            for c in &s.curves {
                println!(
                    "epsilon {:<8} best T {:<6} accuracy {:.4} ± {:.4}",
                    c.epsilon, c.best_samples, c.best_mean, c.best_se
                );
            }
            println!(
                "results: {}\nmanifest: {}",
                report.results.display(),
                report.manifest.display()
            );
        }
        Command::Fetch(args) => {
            let dir = args.cache_dir.unwrap_or_else(default_cache_dir);
            let opts = FetchOptions {
                attempts: args.attempts,
                ..FetchOptions::default()
            };
            let path = fetch_dataset(&args.url, dir, &opts)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
