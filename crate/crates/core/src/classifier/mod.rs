//! Per-class Fly Bloom Filters and the nearest-neighbor-style classifier built
//! on them.
//!
//! A filter is stored as integer counts: `c_l[i]` is the number of class-`l`
//! training points whose hash set bit `i`. The multiplicative weights are
//! derived on demand as `w_l[i] = gamma^c_l[i]`, with `gamma^0 = 1` even when
//! `gamma = 0`. Integer counts make training order-free and make federated
//! aggregation a plain integer sum.
//!
//! Scores are double-precision sums of at most `rho` weights in `(0, 1]`, so
//! the accumulated rounding error is below `rho * 2^-53` per score.

mod format;

pub use format::{deserialize, serialize, FORMAT_VERSION, MAGIC};

use crate::data::{Dataset, LabelTable};
use crate::error::{check_dim, Error, Result};
use crate::hash::{AnyHasher, FeatureHasher, HashParams, HashSpec, SparseBitVector};

/// Exact per-class counts, class-major (`classes` rows of length `m`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassCounts {
    classes: usize,
    m: usize,
    data: Vec<u32>,
}

impl ClassCounts {
    pub fn zeros(classes: usize, m: usize) -> Self {
        Self {
            classes,
            m,
            data: vec![0; classes * m],
        }
    }

    pub fn from_flat(classes: usize, m: usize, data: Vec<u32>) -> Result<Self> {
        if data.len() != classes * m {
            return Err(Error::Shape(format!(
                "{} counts for {classes} classes of width {m}",
                data.len()
            )));
        }
        Ok(Self { classes, m, data })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, class: usize, i: usize) -> u32 {
        self.data[class * self.m + i]
    }

    pub fn class_row(&self, class: usize) -> &[u32] {
        &self.data[class * self.m..(class + 1) * self.m]
    }

    /// All classes concatenated, class 0 first.
    pub fn as_flat(&self) -> &[u32] {
        &self.data
    }

    pub fn total(&self, class: usize) -> u64 {
        self.class_row(class).iter().map(|&c| u64::from(c)).sum()
    }

    /// Records one training point of `class` with hash `h`.
    pub fn add_hash(&mut self, class: usize, h: &SparseBitVector) -> Result<()> {
        check_dim(self.m, h.len())?;
        if class >= self.classes {
            return Err(Error::Param(format!("class {class} >= {}", self.classes)));
        }
        let row = &mut self.data[class * self.m..(class + 1) * self.m];
        for &i in h.ones() {
            let c = &mut row[i as usize];
            *c = c.checked_add(1).ok_or_else(|| Error::Param("count overflow".into()))?;
        }
        Ok(())
    }

    /// Removes a previously added point; used to carve out CV folds.
    pub fn remove_hash(&mut self, class: usize, h: &SparseBitVector) -> Result<()> {
        check_dim(self.m, h.len())?;
        let row = &mut self.data[class * self.m..(class + 1) * self.m];
        for &i in h.ones() {
            let c = &mut row[i as usize];
            *c = c
                .checked_sub(1)
                .ok_or_else(|| Error::Param("removing a hash that was never added".into()))?;
        }
        Ok(())
    }

    pub fn merge_from(&mut self, other: &ClassCounts) -> Result<()> {
        if self.classes != other.classes || self.m != other.m {
            return Err(Error::Shape(format!(
                "cannot merge {}x{} counts into {}x{}",
                other.classes, other.m, self.classes, self.m
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = a.checked_add(b).ok_or_else(|| Error::Param("count overflow".into()))?;
        }
        Ok(())
    }
}

/// Element-wise sum of two count tables of equal shape.
pub fn merge_counts(a: &ClassCounts, b: &ClassCounts) -> Result<ClassCounts> {
    let mut out = a.clone();
    out.merge_from(b)?;
    Ok(out)
}

/// Real-valued counts produced by the privatized training path.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyCounts {
    classes: usize,
    m: usize,
    data: Vec<f64>,
}

impl NoisyCounts {
    pub fn from_flat(classes: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != classes * m {
            return Err(Error::Shape(format!(
                "{} counts for {classes} classes of width {m}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Malformed(format!("noisy count {i} is negative or non-finite")));
        }
        Ok(Self { classes, m, data })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FilterCounts {
    Exact(ClassCounts),
    Noisy(NoisyCounts),
}

impl FilterCounts {
    pub fn classes(&self) -> usize {
        match self {
            FilterCounts::Exact(c) => c.classes,
            FilterCounts::Noisy(c) => c.classes,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            FilterCounts::Exact(c) => c.m,
            FilterCounts::Noisy(c) => c.m,
        }
    }

    pub fn exact(&self) -> Option<&ClassCounts> {
        match self {
            FilterCounts::Exact(c) => Some(c),
            FilterCounts::Noisy(_) => None,
        }
    }
}

/// Decay rate in `[0, 1)` together with the decimal text it was parsed from.
#[derive(Clone, Debug, PartialEq)]
pub struct Gamma {
    text: String,
    value: f64,
}

impl Gamma {
    pub fn new(value: f64) -> Result<Self> {
        Self::parse(&format!("{value}"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value: f64 = text
            .trim()
            .parse()
            .map_err(|_| Error::Param(format!("gamma `{text}` is not a number")))?;
        if !(0.0..1.0).contains(&value) {
            return Err(Error::Param(format!("gamma = {value} must lie in [0, 1)")));
        }
        Ok(Self {
            text: text.trim().to_string(),
            value,
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// `gamma^count` by binary exponentiation, so the result depends only on
/// IEEE multiplication and not on the platform's `pow`.
pub fn decay_weight(gamma: f64, count: u32) -> f64 {
    let (mut base, mut e, mut acc) = (gamma, count, 1.0f64);
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

fn noisy_weight(gamma: f64, count: f64) -> f64 {
    if count == 0.0 {
        1.0
    } else {
        gamma.powf(count)
    }
}

/// Per-class novelty scores `sigma_l = sum over ones(h) of w_l[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoveltyScores(pub Vec<f64>);

impl NoveltyScores {
    /// Smallest score, ties going to the smaller class index.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (l, &s) in self.0.iter().enumerate().skip(1) {
            if s < self.0[best] {
                best = l;
            }
        }
        best
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Dense weight table `w_l[i]` ready for scoring.
#[derive(Clone, Debug)]
pub struct Scorer {
    classes: usize,
    m: usize,
    weights: Vec<f64>,
}

impl Scorer {
    pub fn new(counts: &FilterCounts, gamma: f64) -> Self {
        let weights = match counts {
            FilterCounts::Exact(c) => c.data.iter().map(|&k| decay_weight(gamma, k)).collect(),
            FilterCounts::Noisy(c) => c.data.iter().map(|&k| noisy_weight(gamma, k)).collect(),
        };
        Self {
            classes: counts.classes(),
            m: counts.m(),
            weights,
        }
    }

    pub fn from_exact(counts: &ClassCounts, gamma: f64) -> Self {
        Self {
            classes: counts.classes,
            m: counts.m,
            weights: counts.data.iter().map(|&k| decay_weight(gamma, k)).collect(),
        }
    }

    pub fn scores(&self, h: &SparseBitVector) -> Result<NoveltyScores> {
        check_dim(self.m, h.len())?;
        Ok(self.scores_unchecked(h.ones()))
    }

    pub(crate) fn scores_unchecked(&self, ones: &[u32]) -> NoveltyScores {
        NoveltyScores(
            self.weights
                .chunks_exact(self.m)
                .map(|w| ones.iter().map(|&i| w[i as usize]).sum())
                .collect(),
        )
    }

    pub fn predict(&self, h: &SparseBitVector) -> Result<usize> {
        Ok(self.scores(h)?.argmin())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }
}

/// Trained classifier: hash, decay rate, label table and class filters.
#[derive(Clone, Debug)]
pub struct FlyNNModel {
    spec: HashSpec,
    gamma: Gamma,
    labels: LabelTable,
    counts: FilterCounts,
    hasher: AnyHasher,
    scorer: Scorer,
}

impl PartialEq for FlyNNModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.gamma == other.gamma
            && self.labels == other.labels
            && self.counts == other.counts
    }
}

impl FlyNNModel {
    pub fn from_parts(spec: HashSpec, gamma: Gamma, labels: LabelTable, counts: FilterCounts) -> Result<Self> {
        if counts.m() != spec.output_dim() {
            return Err(Error::Shape(format!(
                "counts width {} does not match hash width {}",
                counts.m(),
                spec.output_dim()
            )));
        }
        if counts.classes() != labels.len() {
            return Err(Error::Shape(format!(
                "{} count rows for {} labels",
                counts.classes(),
                labels.len()
            )));
        }
        let hasher = spec.build()?;
        let scorer = Scorer::new(&counts, gamma.value());
        Ok(Self {
            spec,
            gamma,
            labels,
            counts,
            hasher,
            scorer,
        })
    }

    pub fn spec(&self) -> &HashSpec {
        &self.spec
    }

    pub fn gamma(&self) -> &Gamma {
        &self.gamma
    }

    pub fn labels(&self) -> &LabelTable {
        &self.labels
    }

    pub fn counts(&self) -> &FilterCounts {
        &self.counts
    }

    pub fn hasher(&self) -> &AnyHasher {
        &self.hasher
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    /// Weight `w_l[i]`.
    pub fn weight(&self, class: usize, i: usize) -> f64 {
        self.scorer.weights[class * self.scorer.m + i]
    }

    pub fn hash(&self, x: &[f64]) -> Result<SparseBitVector> {
        check_dim(self.input_dim(), x.len())?;
        self.hasher.hash(x)
    }

    pub fn scores_for_hash(&self, h: &SparseBitVector) -> Result<NoveltyScores> {
        self.scorer.scores(h)
    }
}

/// Hashes every row of `ds` and accumulates class counts.
pub fn accumulate_counts<H: FeatureHasher + ?Sized>(hasher: &H, ds: &Dataset) -> Result<ClassCounts> {
    check_dim(hasher.input_dim(), ds.d())?;
    let mut counts = ClassCounts::zeros(ds.num_classes(), hasher.output_dim());
    for (i, row) in ds.rows().enumerate() {
        counts.add_hash(ds.label(i), &hasher.hash(row)?)?;
    }
    Ok(counts)
}

fn train_spec(ds: &Dataset, spec: HashSpec, gamma: Gamma) -> Result<FlyNNModel> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dim(spec.input_dim(), ds.d())?;
    let hasher = spec.build()?;
    let counts = accumulate_counts(&hasher, ds)?;
    let scorer = Scorer::from_exact(&counts, gamma.value());
    Ok(FlyNNModel {
        spec,
        gamma,
        labels: ds.label_table().clone(),
        counts: FilterCounts::Exact(counts),
        hasher,
        scorer,
    })
}

/// Single pass over `ds` with FlyHash.
pub fn train(ds: &Dataset, params: HashParams, gamma: Gamma) -> Result<FlyNNModel> {
    params.validate(ds.d())?;
    train_spec(ds, HashSpec::Fly { d: ds.d(), params }, gamma)
}

/// The same classifier with SimHash of width `m` in place of FlyHash.
pub fn train_sbfc(ds: &Dataset, m: usize, seed: u64, gamma: Gamma) -> Result<FlyNNModel> {
    train_spec(ds, HashSpec::Sim { d: ds.d(), m, seed }, gamma)
}

pub fn novelty_scores(model: &FlyNNModel, x: &[f64]) -> Result<NoveltyScores> {
    let h = model.hash(x)?;
    model.scores_for_hash(&h)
}

/// Internal class index with the lowest novelty score, and all scores.
pub fn infer(model: &FlyNNModel, x: &[f64]) -> Result<(usize, NoveltyScores)> {
    let scores = novelty_scores(model, x)?;
    Ok((scores.argmin(), scores))
}
