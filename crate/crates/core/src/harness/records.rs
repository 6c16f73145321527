use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Bumped whenever a column is added, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

/// One row of a results file: a (method, params, fold, repetition) cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub experiment: String,
    pub method: String,
    pub params: String,
    pub fold: Option<usize>,
    pub repetition: usize,
    pub accuracy: Option<f64>,
    pub normalized_accuracy: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub bytes_sent: Option<u64>,
    pub bytes_received: Option<u64>,
    /// Repetition seed; with `params` it replays the row on its own.
    pub seed: u64,
}

impl ResultRecord {
    pub fn new(experiment: &str, method: &str, params: String, repetition: usize, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            method: method.to_string(),
            params,
            fold: None,
            repetition,
            accuracy: None,
            normalized_accuracy: None,
            wall_time_s: None,
            bytes_sent: None,
            bytes_received: None,
            seed,
        }
    }
}

pub fn write_records(path: impl AsRef<Path>, records: &[ResultRecord]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record([
            "schema_version",
            "experiment",
            "method",
            "params",
            "fold",
            "repetition",
            "accuracy",
            "normalized_accuracy",
            "wall_time_s",
            "bytes_sent",
            "bytes_received",
            "seed",
        ])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

/// `results.csv` -> `results.manifest.json`.
pub fn manifest_path(results: &Path) -> PathBuf {
    sibling(results, "manifest.json")
}

pub fn sibling(results: &Path, suffix: &str) -> PathBuf {
    let stem = results
        .file_stem()
        .map_or_else(|| "results".into(), |s| s.to_string_lossy().into_owned());
    results.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Clone, Debug, Serialize)]
pub struct HostInfo {
    pub os: &'static str,
    pub arch: &'static str,
    pub cores: usize,
}

impl HostInfo {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            cores: available_cores(),
        }
    }
}

pub fn available_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Config echo, versions, host and the experiment's summary.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest<S: Serialize> {
    pub experiment: String,
    pub schema_version: u32,
    pub crate_version: &'static str,
    pub host: HostInfo,
    pub config: String,
    pub rows: usize,
    pub warnings: Vec<String>,
    pub summary: S,
}

pub fn write_manifest<S: Serialize>(path: impl AsRef<Path>, manifest: &Manifest<S>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serde_json::to_vec_pretty(manifest)?).map_err(|e| Error::file(path, e))
}

/// Mean and standard error of the mean (zero for a single value).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let (mean, se) = mean_se(values);
    (mean, se * (values.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_carries_schema_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut r = ResultRecord::new("bench", "knn", "k=1".into(), 0, 7);
        r.fold = Some(2);
        r.accuracy = Some(0.5);
        write_records(&p, &[r]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "schema_version,experiment,method,params,fold,repetition,accuracy,normalized_accuracy,wall_time_s,bytes_sent,bytes_received,seed"
        );
        assert_eq!(lines.next().unwrap(), "1,bench,knn,k=1,2,0,0.5,,,,,7");
        write_records(&p, &[]).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("schema_version,"));
    }

    #[test]
    fn mean_se_examples() {
        assert_eq!(mean_se(&[2.0]), (2.0, 0.0));
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (1.666_666_666_666_666_7f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sibling_names() {
        assert_eq!(
            manifest_path(Path::new("out/r.csv")),
            PathBuf::from("out/r.manifest.json")
        );
    }
}
