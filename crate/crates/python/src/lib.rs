//! Python bindings: `import flynn`.

use pyo3::exceptions::{PyConnectionError, PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use flynn_core::data::{load_csv, make_classification, shard, ShardPolicy};
use flynn_core::dp::{privatize, sample_laplace, DpParams};
use flynn_core::federated::{comm_report, train_flynn_fl, FederationPlan};
use flynn_core::harness::predict_dataset;
use flynn_core::hash::{fly_hash as core_fly_hash, HashParams, LiftingMatrix};
use flynn_core::knn::{knn_classify as core_knn, SimilarityKind};
use flynn_core::{classifier, Error, ErrorCategory, Gamma, RngState, SynthSpec};

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.category() {
        ErrorCategory::Config => PyValueError::new_err(msg),
        ErrorCategory::Data => match e {
            Error::File { .. } => PyIOError::new_err(msg),
            _ => PyValueError::new_err(msg),
        },
        ErrorCategory::Transport => PyConnectionError::new_err(msg),
        ErrorCategory::Internal => PyRuntimeError::new_err(msg),
    }
}

fn similarity(name: &str) -> PyResult<SimilarityKind> {
    match name {
        "euclidean" => Ok(SimilarityKind::NegativeEuclidean),
        "linf" => Ok(SimilarityKind::NegativeLinf),
        "cosine" => Ok(SimilarityKind::Cosine),
        other => Err(PyValueError::new_err(format!(
            "unknown similarity {other:?}; use 'euclidean', 'linf' or 'cosine'"
        ))),
    }
}

/// Labelled rows of equal length.
#[pyclass(module = "flynn", frozen)]
struct Dataset {
    inner: flynn_core::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    fn new(rows: Vec<Vec<f64>>, labels: Vec<String>) -> PyResult<Self> {
        let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
        let inner = flynn_core::Dataset::from_rows(&rows, &labels, "python").map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Gaussian clusters placed on hypercube vertices, labels "0".."classes-1".
    #[staticmethod]
    #[pyo3(signature = (n, d, classes, clusters_per_class=1, seed=0, class_sep=2.0))]
    fn synthetic(
        n: usize,
        d: usize,
        classes: usize,
        clusters_per_class: usize,
        seed: u64,
        class_sep: f64,
    ) -> PyResult<Self> {
        let mut spec = SynthSpec::new(n, d, classes, clusters_per_class, seed);
        spec.class_sep = class_sep;
        Ok(Self {
            inner: make_classification(&spec).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, label_column, header=false))]
    fn from_csv(path: &str, label_column: usize, header: bool) -> PyResult<Self> {
        Ok(Self {
            inner: load_csv(path, label_column, header).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n() {
            return Err(PyValueError::new_err(format!(
                "row {i} out of range for {} rows",
                self.inner.n()
            )));
        }
        Ok(self.inner.row(i).to_vec())
    }

    fn labels(&self) -> Vec<String> {
        let table = self.inner.label_table();
        (0..self.inner.n())
            .map(|i| table.label(self.inner.label(i)).to_string())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, d={}, classes={})",
            self.inner.n(),
            self.inner.d(),
            self.inner.num_classes()
        )
    }
}

/// A trained FlyNN classifier.
#[pyclass(module = "flynn", frozen)]
struct Model {
    inner: classifier::FlyNNModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (data, m, s, rho, gamma=0.0, seed=0))]
    fn train(data: &Dataset, m: usize, s: usize, rho: usize, gamma: f64, seed: u64) -> PyResult<Self> {
        let gamma = Gamma::new(gamma).map_err(to_py)?;
        let inner = flynn_core::train(&data.inner, HashParams::new(m, s, rho, seed), gamma).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Trains across `parties` simulated parties and returns the model with
    /// the total number of bytes the parties sent. With `epsilon` set, each
    /// party releases `samples` noisy counts instead of its exact counts.
    #[staticmethod]
    #[pyo3(signature = (data, parties, m, s, rho, gamma=0.0, seed=0, epsilon=None, samples=None, dp_seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train_federated(
        py: Python<'_>,
        data: &Dataset,
        parties: usize,
        m: usize,
        s: usize,
        rho: usize,
        gamma: f64,
        seed: u64,
        epsilon: Option<f64>,
        samples: Option<usize>,
        dp_seed: u64,
    ) -> PyResult<(Self, u64)> {
        let gamma = Gamma::new(gamma).map_err(to_py)?;
        let shards = shard(&data.inner, parties, ShardPolicy::RoundRobin).map_err(to_py)?;
        let mut plan = FederationPlan::new(shards, HashParams::new(m, s, rho, seed), gamma);
        plan.dp = match (epsilon, samples) {
            (Some(e), Some(t)) => Some(DpParams::new(e, t).map_err(to_py)?),
            (None, None) => None,
            _ => return Err(PyValueError::new_err("epsilon and samples go together")),
        };
        plan.dp_seed = dp_seed;
        let out = py.detach(|| train_flynn_fl(&plan)).map_err(to_py)?;
        let sent = comm_report(&out).total.bytes_sent;
        Ok((
            Self {
                inner: out.model().clone(),
            },
            sent,
        ))
    }

    /// Predicted label and per-class novelty scores (lower is closer).
    fn predict(&self, x: Vec<f64>) -> PyResult<(String, Vec<f64>)> {
        let (c, scores) = flynn_core::infer(&self.inner, &x).map_err(to_py)?;
        Ok((self.inner.labels().label(c).to_string(), scores.0))
    }

    fn predict_many(&self, py: Python<'_>, data: &Dataset) -> PyResult<Vec<String>> {
        let preds = py.detach(|| predict_dataset(&self.inner, &data.inner)).map_err(to_py)?;
        Ok(preds
            .iter()
            .map(|(c, _)| self.inner.labels().label(*c).to_string())
            .collect())
    }

    /// Fraction of rows of `data` whose predicted label equals the row label.
    fn accuracy(&self, py: Python<'_>, data: &Dataset) -> PyResult<f64> {
        let preds = py.detach(|| predict_dataset(&self.inner, &data.inner)).map_err(to_py)?;
        Ok(flynn_core::harness::label_accuracy(&self.inner, &data.inner, &preds))
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &classifier::serialize(&self.inner))
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: classifier::deserialize(data).map_err(to_py)?,
        })
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().labels().to_vec()
    }

    fn __eq__(&self, other: &Model) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(d={}, classes={})",
            self.inner.input_dim(),
            self.inner.num_classes()
        )
    }
}

/// Indices of the `rho` winning rows of the seeded `m x d` lifting matrix
/// with `s` ones per row.
#[pyfunction]
fn fly_hash(x: Vec<f64>, m: usize, s: usize, rho: usize, seed: u64) -> PyResult<Vec<u32>> {
    let matrix = LiftingMatrix::from_seed(seed, m, x.len(), s).map_err(to_py)?;
    Ok(core_fly_hash(&matrix, rho, &x).map_err(to_py)?.ones().to_vec())
}

#[pyfunction]
#[pyo3(signature = (data, x, k, similarity="euclidean"))]
fn knn_classify(data: &Dataset, x: Vec<f64>, k: usize, similarity: &str) -> PyResult<String> {
    let c = core_knn(&data.inner, &x, k, self::similarity(similarity)?).map_err(to_py)?;
    Ok(data.inner.label_table().label(c).to_string())
}

/// Sparse noisy release of a count vector: `(index, value)` pairs.
#[pyfunction]
fn privatize_counts(counts: Vec<u32>, epsilon: f64, samples: usize, seed: u64) -> PyResult<Vec<(usize, f64)>> {
    let params = DpParams::new(epsilon, samples).map_err(to_py)?;
    let out = privatize(&counts, &params, &mut RngState::new(seed)).map_err(to_py)?;
    Ok(out.entries().to_vec())
}

#[pyfunction]
#[pyo3(name = "sample_laplace")]
fn sample_laplace_py(scale: f64, count: usize, seed: u64) -> PyResult<Vec<f64>> {
    let mut rng = RngState::new(seed);
    (0..count)
        .map(|_| sample_laplace(scale, &mut rng).map_err(to_py))
        .collect()
}

#[pymodule]
fn flynn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(fly_hash, m)?)?;
    m.add_function(wrap_pyfunction!(knn_classify, m)?)?;
    m.add_function(wrap_pyfunction!(privatize_counts, m)?)?;
    m.add_function(wrap_pyfunction!(sample_laplace_py, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
