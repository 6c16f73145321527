//! Experiment drivers behind the `flynn` command line.

mod bench;
mod config;
mod dp_sweep;
mod grid;
mod records;
mod scale;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use bench::{run_bench, BenchOutput, BenchSummary, MethodSummary};
pub use config::{
    default_cache_dir, DatasetSource, DpConfig, ExperimentConfig, ExperimentKind, FederationConfig, GridConfig, Method,
    ModelConfig,
};
pub use dp_sweep::{cell_dp_seed, holdout_split, run_dp_sweep, DpCurve, DpOutput, DpSummary};
pub use grid::{default_sbfc_widths, sample_settings, FlySetting};
pub use records::{
    available_cores, manifest_path, mean_sd, mean_se, write_manifest, write_records, HostInfo, Manifest, ResultRecord,
    SCHEMA_VERSION,
};
pub use scale::{run_scale, ScaleOutput, ScaleRow, ScaleSummary};

use crate::classifier::{infer, train, FlyNNModel, Gamma};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Paths written by an experiment command, plus its summary.
#[derive(Debug)]
pub struct RunReport<S> {
    pub results: PathBuf,
    pub manifest: PathBuf,
    pub warnings: Vec<String>,
    pub summary: S,
}

fn finish<S: Serialize>(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    records: &[ResultRecord],
    warnings: Vec<String>,
    summary: S,
) -> Result<RunReport<S>> {
    let results = cfg
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}-results.csv", kind.name())));
    write_records(&results, records)?;
    let manifest = manifest_path(&results);
    write_manifest(
        &manifest,
        &Manifest {
            experiment: cfg.id(kind),
            schema_version: SCHEMA_VERSION,
            crate_version: env!("CARGO_PKG_VERSION"),
            host: HostInfo::current(),
            config: cfg.to_toml(),
            rows: records.len(),
            warnings: warnings.clone(),
            summary: &summary,
        },
    )?;
    Ok(RunReport {
        results,
        manifest,
        warnings,
        summary,
    })
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<RunReport<BenchSummary>> {
    let out = with_threads(cfg.threads, || run_bench(cfg))??;
    finish(cfg, ExperimentKind::Bench, &out.records, Vec::new(), out.summary)
}

pub fn cmd_scale(cfg: &ExperimentConfig) -> Result<RunReport<ScaleSummary>> {
    let out = run_scale(cfg)?;
    let warnings = out.summary.warnings.clone();
    finish(cfg, ExperimentKind::Scale, &out.records, warnings, out.summary)
}

pub fn cmd_dp_sweep(cfg: &ExperimentConfig) -> Result<RunReport<DpSummary>> {
    let out = with_threads(cfg.threads, || run_dp_sweep(cfg))??;
    finish(cfg, ExperimentKind::DpSweep, &out.records, Vec::new(), out.summary)
}

/// Trains on the configured dataset (seed of a synthetic source: `cfg.seed`)
/// with the `[model]` setting; the lifting seed defaults to one derived
/// from `cfg.seed`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<(Dataset, FlyNNModel)> {
    cfg.validate(ExperimentKind::Train)?;
    let model = cfg.model()?;
    let ds = cfg.dataset.load(cfg.seed)?;
    let trained = train(&ds, model.params(derive_seed(cfg.seed, 1000)), Gamma::new(model.gamma)?)?;
    Ok((ds, trained))
}

pub fn save_model(model: &FlyNNModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, crate::classifier::serialize(model)).map_err(|e| Error::file(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FlyNNModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    crate::classifier::deserialize(&bytes)
}

/// One prediction per row of `ds`: class index and per-class scores.
pub fn predict_dataset(model: &FlyNNModel, ds: &Dataset) -> Result<Vec<(usize, Vec<f64>)>> {
    if ds.d() != model.input_dim() {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            actual: ds.d(),
        });
    }
    ds.rows().map(|x| infer(model, x).map(|(c, s)| (c, s.0))).collect()
}

/// Fraction of rows whose predicted label text equals the dataset's.
pub fn label_accuracy(model: &FlyNNModel, ds: &Dataset, predictions: &[(usize, Vec<f64>)]) -> f64 {
    let hits = predictions
        .iter()
        .enumerate()
        .filter(|(i, (c, _))| model.labels().label(*c) == ds.label_table().label(ds.label(*i)))
        .count();
    hits as f64 / predictions.len().max(1) as f64
}

/// `row_id,predicted_label,score_<label>...`, one line per row.
pub fn write_predictions(path: impl AsRef<Path>, model: &FlyNNModel, predictions: &[(usize, Vec<f64>)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["row_id".to_string(), "predicted_label".to_string()];
    header.extend(model.labels().labels().iter().map(|l| format!("score_{l}")));
    w.write_record(&header)?;
    for (i, (c, scores)) in predictions.iter().enumerate() {
        let mut row = vec![i.to_string(), model.labels().label(*c).to_string()];
        row.extend(scores.iter().map(|s| s.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bench_writes_results_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml_str(
            "[dataset]\nsource = \"synth\"\nn = 60\nd = 4\nclasses = 2\nclusters_per_class = 1\n[grid]\nmethods = [\"knn\"]\nk = [1, 3]\nfolds = 3\n",
        )
        .unwrap();
        cfg.output = Some(dir.path().join("sub/out.csv"));
        let report = cmd_bench(&cfg).unwrap();
        let text = std::fs::read_to_string(&report.results).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 3);
        let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(&report.manifest).unwrap()).unwrap();
        assert_eq!(manifest["rows"], 6);
        assert_eq!(manifest["schema_version"], SCHEMA_VERSION);
        let first = std::fs::read(&report.results).unwrap();
        cfg.threads = Some(2);
        cmd_bench(&cfg).unwrap();
        assert_eq!(std::fs::read(&report.results).unwrap(), first);
    }

    #[test]
    fn train_predict_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str(
            "seed = 4\n[dataset]\nsource = \"synth\"\nn = 80\nd = 5\nclasses = 2\nclusters_per_class = 1\nclass_sep = 20.0\n[model]\nm = 200\ns = 3\nrho = 10\n",
        )
        .unwrap();
        let (ds, model) = cmd_train(&cfg).unwrap();
        let path = dir.path().join("m.bin");
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
        let preds = predict_dataset(&back, &ds).unwrap();
        assert_eq!(label_accuracy(&back, &ds, &preds), 1.0);
        let narrow = ds.subset(&[0]);
        let wrong = Dataset::new(
            4,
            narrow.features()[..4].to_vec(),
            vec![0],
            narrow.label_table().clone(),
            "",
        )
        .unwrap();
        assert!(matches!(predict_dataset(&back, &wrong), Err(Error::Dimension { .. })));
    }
}
