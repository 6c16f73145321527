use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    fetch_dataset, load_csv, make_classification, Dataset, FetchOptions, ShardPolicy, SynthSpec, CACHE_DIR_ENV,
};
use crate::error::{Error, Result};
use crate::federated::TransportKind;
use crate::hash::HashParams;
use crate::knn::SimilarityKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Bench,
    Scale,
    DpSweep,
    Train,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Bench => "bench",
            ExperimentKind::Scale => "scale",
            ExperimentKind::DpSweep => "dp-sweep",
            ExperimentKind::Train => "train",
        }
    }
}

/// Where rows come from. Synthetic sources are regenerated for every
/// repetition with a seed derived from the run seed; their own `seed` field
/// only matters when the dataset is built directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DatasetSource {
    Synth(SynthSpec),
    #[serde(rename_all = "snake_case")]
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_column: usize,
        #[serde(default)]
        has_header: bool,
        #[serde(default)]
        min_max_scale: bool,
    },
    #[serde(rename_all = "snake_case")]
    Url {
        url: String,
        #[serde(default)]
        label_column: usize,
        #[serde(default)]
        has_header: bool,
        #[serde(default)]
        min_max_scale: bool,
        cache_dir: Option<PathBuf>,
    },
}

impl DatasetSource {
    pub fn is_synthetic(&self) -> bool {
        matches!(self, DatasetSource::Synth(_))
    }

    /// Builds the dataset; synthetic specs use `seed` in place of their own.
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DatasetSource::Synth(spec) => make_classification(&SynthSpec { seed, ..spec.clone() }),
            DatasetSource::Csv {
                path,
                label_column,
                has_header,
                min_max_scale,
            } => {
                let ds = load_csv(path, *label_column, *has_header)?;
                Ok(if *min_max_scale { ds.min_max_scaled() } else { ds })
            }
            DatasetSource::Url {
                url,
                label_column,
                has_header,
                min_max_scale,
                cache_dir,
            } => {
                let dir = match cache_dir {
                    Some(d) => d.clone(),
                    None => default_cache_dir(),
                };
                let path = fetch_dataset(url, dir, &FetchOptions::default())?;
                let ds = load_csv(path, *label_column, *has_header)?;
                Ok(if *min_max_scale { ds.min_max_scaled() } else { ds })
            }
        }
    }
}

/// `$FLYNN_CACHE_DIR`, else `.flynn-cache` under the working directory.
pub fn default_cache_dir() -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV).map_or_else(|| PathBuf::from(".flynn-cache"), PathBuf::from)
}

/// One FlyNN hyper-parameter setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub m: usize,
    pub s: usize,
    pub rho: usize,
    #[serde(default)]
    pub gamma: f64,
    /// Lifting-matrix seed; derived from the run seed when absent.
    pub seed: Option<u64>,
}

impl ModelConfig {
    pub fn params(&self, seed: u64) -> HashParams {
        HashParams::new(self.m, self.s, self.rho, self.seed.unwrap_or(seed))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Flynn,
    Knn,
    Sbfc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Flynn => "flynn",
            Method::Knn => "knn",
            Method::Sbfc => "sbfc",
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Flynn, Method::Knn, Method::Sbfc]
}

fn default_folds() -> usize {
    10
}

fn default_settings() -> usize {
    60
}

fn default_m_range() -> [f64; 2] {
    [2.0, 2048.0]
}

fn default_rho_range() -> [f64; 2] {
    [8.0, 256.0]
}

fn default_gamma_range() -> [f64; 2] {
    [0.0, 0.8]
}

fn default_k() -> Vec<usize> {
    vec![1, 3, 5, 7, 9, 11, 15, 21, 31, 45, 64]
}

fn default_sbfc_gamma() -> Vec<f64> {
    vec![0.0, 0.2, 0.4, 0.6, 0.8]
}

/// Search space of `bench`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Evaluate only the first this-many folds (dry runs).
    pub fold_limit: Option<usize>,
    /// Number of sampled FlyNN settings.
    #[serde(default = "default_settings")]
    pub settings: usize,
    /// Bounds on `m / d`.
    #[serde(default = "default_m_range")]
    pub m_range: [f64; 2],
    /// Bounds on `s`; defaults to `[2, floor(d / 2)]`.
    pub s_range: Option<[f64; 2]>,
    #[serde(default = "default_rho_range")]
    pub rho_range: [f64; 2],
    #[serde(default = "default_gamma_range")]
    pub gamma_range: [f64; 2],
    /// Explicit settings replace the sampled ones when given.
    pub points: Option<Vec<ModelConfig>>,
    /// Seed of the setting sampler; derived from the run seed when absent.
    pub grid_seed: Option<u64>,
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    #[serde(default)]
    pub similarity: SimilarityKind,
    /// SimHash widths; defaults to a log-spaced sweep over `[1, 2048 d]`.
    pub sbfc_m: Option<Vec<usize>>,
    #[serde(default = "default_sbfc_gamma")]
    pub sbfc_gamma: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        toml::from_str("").expect("all grid fields have defaults")
    }
}

fn default_parties() -> Vec<usize> {
    vec![1, 2, 4]
}

fn default_timeout() -> f64 {
    120.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    #[serde(default = "default_parties")]
    pub parties: Vec<usize>,
    #[serde(default = "default_policy")]
    pub policy: ShardPolicy,
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_policy() -> ShardPolicy {
    ShardPolicy::RoundRobin
}

impl Default for FederationConfig {
    fn default() -> Self {
        toml::from_str("").expect("all federation fields have defaults")
    }
}

fn default_test_size() -> usize {
    1000
}

fn default_dp_parties() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpConfig {
    pub epsilon: Vec<f64>,
    /// Values of `T`, the number of released cells per party.
    pub samples: Vec<usize>,
    #[serde(default = "default_dp_parties")]
    pub parties: usize,
    /// Rows held out for testing after a seeded shuffle.
    #[serde(default = "default_test_size")]
    pub test_size: usize,
}

/// Full description of a run. Every field not marked otherwise has a
/// default, so a config only needs a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    /// Free-form run id written into every result row.
    pub id: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: usize,
    pub output: Option<PathBuf>,
    /// Worker threads; all available cores when absent.
    pub threads: Option<usize>,
    /// Fill the wall-time column outside `scale` too (breaks byte-identical reruns).
    #[serde(default)]
    pub record_timing: bool,
    pub dataset: DatasetSource,
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub federation: FederationConfig,
    pub dp: Option<DpConfig>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn id(&self, kind: ExperimentKind) -> String {
        self.id.clone().unwrap_or_else(|| kind.name().to_string())
    }

    pub fn model(&self) -> Result<&ModelConfig> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Config("missing [model] table".into()))
    }

    pub fn dp(&self) -> Result<&DpConfig> {
        self.dp
            .as_ref()
            .ok_or_else(|| Error::Config("missing [dp] table".into()))
    }

    /// Checks the invariants that do not depend on the data.
    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if let Some(k) = self.experiment {
            if k != kind {
                return bad(format!(
                    "config is for `{}` but `{}` was requested",
                    k.name(),
                    kind.name()
                ));
            }
        }
        if self.repetitions < 1 {
            return bad("repetitions must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if let Some(m) = &self.model {
            if !(0.0..1.0).contains(&m.gamma) {
                return bad(format!("model.gamma = {} must lie in [0, 1)", m.gamma));
            }
        }
        match kind {
            ExperimentKind::Bench => self.grid.validate(),
            ExperimentKind::Scale => {
                self.model()?;
                if self.federation.parties.is_empty() || self.federation.parties.contains(&0) {
                    return bad("federation.parties must be a non-empty list of positive counts".into());
                }
                if self.federation.timeout_secs.is_nan() || self.federation.timeout_secs <= 0.0 {
                    return bad("federation.timeout_secs must be positive".into());
                }
                Ok(())
            }
            ExperimentKind::DpSweep => {
                self.model()?;
                let dp = self.dp()?;
                if dp.epsilon.is_empty() || dp.samples.is_empty() {
                    return bad("dp.epsilon and dp.samples must be non-empty".into());
                }
                if dp.epsilon.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    return bad("dp.epsilon values must be positive".into());
                }
                if dp.samples.contains(&0) {
                    return bad("dp.samples values must be positive".into());
                }
                if dp.parties < 2 {
                    return bad("dp.parties must be at least 2".into());
                }
                if dp.test_size == 0 {
                    return bad("dp.test_size must be positive".into());
                }
                Ok(())
            }
            ExperimentKind::Train => self.model().map(|_| ()),
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.methods.is_empty() {
            return bad("grid.methods must be non-empty");
        }
        if self.folds < 2 {
            return bad("grid.folds must be at least 2");
        }
        if self.fold_limit == Some(0) {
            return bad("grid.fold_limit must be positive");
        }
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if self.methods.contains(&Method::Flynn) {
            match &self.points {
                Some(p) if p.is_empty() => return bad("grid.points must be non-empty"),
                Some(_) => {}
                None if self.settings == 0 => return bad("grid.settings must be positive"),
                None => {}
            }
            if !ordered(self.m_range) || self.m_range[0] <= 0.0 {
                return bad("grid.m_range must be an increasing pair of positive numbers");
            }
            if !ordered(self.rho_range) || self.rho_range[0] < 1.0 {
                return bad("grid.rho_range must be an increasing pair, at least 1");
            }
            if let Some(s) = self.s_range {
                if !ordered(s) || s[0] < 1.0 {
                    return bad("grid.s_range must be an increasing pair, at least 1");
                }
            }
            if !ordered(self.gamma_range) || self.gamma_range[0] < 0.0 || self.gamma_range[1] >= 1.0 {
                return bad("grid.gamma_range must lie in [0, 1)");
            }
        }
        if self.methods.contains(&Method::Knn) && (self.k.is_empty() || self.k.contains(&0)) {
            return bad("grid.k must be a non-empty list of positive values");
        }
        if self.methods.contains(&Method::Sbfc) {
            if self.sbfc_gamma.is_empty() || self.sbfc_gamma.iter().any(|g| !(0.0..1.0).contains(g)) {
                return bad("grid.sbfc_gamma must be a non-empty list in [0, 1)");
            }
            if let Some(ms) = &self.sbfc_m {
                if ms.is_empty() || ms.contains(&0) {
                    return bad("grid.sbfc_m must be a non-empty list of positive widths");
                }
            }
        }
        Ok(())
    }
}
