//! Labeled datasets: synthetic generation, CSV ingestion, remote fetch with a
//! content-addressed cache, cross-validation folds, party shards and the
//! normalized-accuracy metric.

mod csvio;
mod fetch;
mod split;
mod synth;

pub use csvio::{load_csv, write_csv};
pub use fetch::{fetch_dataset, FetchOptions, CACHE_DIR_ENV};
pub use split::{kfold, shard, Fold, ShardPolicy};
pub use synth::{binarize, make_classification, SynthSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// External label strings, kept sorted so internal class indices are stable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelTable {
    labels: Vec<String>,
}

impl LabelTable {
    /// Sorts and deduplicates the given labels.
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        labels.sort();
        labels.dedup();
        Self { labels }
    }

    /// Labels `"0", "1", ..` for `classes` classes, in numeric order.
    ///
    /// Numeric order only agrees with lexicographic order below 10 classes,
    /// so larger tables are zero-padded to a common width.
    pub fn numbered(classes: usize) -> Self {
        let width = classes.saturating_sub(1).to_string().len();
        let labels = (0..classes).map(|c| format!("{c:0width$}")).collect();
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .binary_search_by(|l| l.as_str().cmp(label))
            .map_err(|_| Error::UnknownLabel(label.to_string()))
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Row-major `n x d` feature matrix with class indices into a [`LabelTable`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    d: usize,
    features: Vec<f64>,
    labels: Vec<u32>,
    label_table: LabelTable,
    provenance: String,
}

impl Dataset {
    pub fn new(
        d: usize,
        features: Vec<f64>,
        labels: Vec<u32>,
        label_table: LabelTable,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::Param("dataset dimension must be positive".into()));
        }
        if features.len() != labels.len() * d {
            return Err(Error::Shape(format!(
                "{} feature values for {} rows of width {d}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= label_table.len()) {
            return Err(Error::Malformed(format!(
                "label index {bad} outside table of {} classes",
                label_table.len()
            )));
        }
        Ok(Self {
            d,
            features,
            labels,
            label_table,
            provenance: provenance.into(),
        })
    }

    /// Builds a dataset from rows and external label strings; the label
    /// table is the sorted set of labels that occur.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[&str], provenance: &str) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.len() != labels.len() {
            return Err(Error::Shape("one label per row required".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                actual: r.len(),
            });
        }
        let table = LabelTable::new(labels.iter().copied());
        let idx = labels
            .iter()
            .map(|l| table.index_of(l).map(|i| i as u32))
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, rows.concat(), idx, table, provenance)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.label_table.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.d)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_table(&self) -> &LabelTable {
        &self.label_table
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Rows at `indices`, in that order, sharing this dataset's label table.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            d: self.d,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_table: self.label_table.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Per-class row counts.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_classes()];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Rescales every column to `[0, 1]`; constant columns become 0.
    pub fn min_max_scaled(&self) -> Dataset {
        let mut out = self.clone();
        for j in 0..self.d {
            let col = self.rows().map(|r| r[j]);
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let span = hi - lo;
            for i in 0..self.n() {
                let v = &mut out.features[i * self.d + j];
                *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
            }
        }
        out
    }
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / predicted.len() as f64
}

/// `1 - a / a_k`: zero for the tuned kNN reference, negative when better.
pub fn normalized_accuracy(a: f64, a_k: f64) -> Result<f64> {
    if a_k <= 0.0 || !a_k.is_finite() {
        return Err(Error::Param(format!("reference accuracy must be positive, got {a_k}")));
    }
    Ok(1.0 - a / a_k)
}
