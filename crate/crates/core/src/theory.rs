//! Monte-Carlo estimators for the quantities that govern FlyHash locality:
//! the top-`f` fractile `tau_x(f)` of `theta . x` over uniformly random
//! `s`-hot vectors `theta`, and the collision probability
//! `q(x, x') = Pr(theta . x' >= tau_x'(f) | theta . x >= tau_x(f))` with
//! `f = rho / m`. Also the FlyNN-versus-kNN agreement experiment.
//!
//! Fractiles are empirical: over `N` draws, the `ceil(f N)`-th largest value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{train, Gamma};
use crate::data::{make_classification, Dataset, SynthSpec};
use crate::error::{Error, Result};
use crate::hash::HashParams;
use crate::knn::{kth_nn_distance, margin, neighbor_order, vote, SimilarityKind};
use crate::rng::{derive_seed, stream, RngState};

/// Uniform draws of `s`-subsets of `[0, d)`.
pub struct ThetaSampler {
    d: usize,
    s: usize,
    scratch: Vec<u32>,
    rng: RngState,
}

impl ThetaSampler {
    pub fn new(d: usize, s: usize, seed: u64) -> Result<Self> {
        if s < 1 || s > d {
            return Err(Error::Param(format!("s = {s} must lie in [1, d = {d}]")));
        }
        Ok(Self {
            d,
            s,
            scratch: (0..d as u32).collect(),
            rng: RngState::with_stream(seed, stream::THEORY),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Next subset; valid until the following call.
    pub fn draw(&mut self) -> &[u32] {
        for i in 0..self.s {
            let j = i + self.rng.below_usize(self.d - i);
            self.scratch.swap(i, j);
        }
        &self.scratch[..self.s]
    }

    /// `theta . x` for each vector in `xs`, from one fresh draw.
    pub fn project(&mut self, xs: &[&[f64]], out: &mut [f64]) {
        let theta = self.draw();
        for (o, x) in out.iter_mut().zip(xs) {
            *o = theta.iter().map(|&i| x[i as usize]).sum();
        }
    }
}

fn rank_of(f: f64, n: usize) -> usize {
    // Guard against f * n landing a hair above an integer.
    ((f * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// `ceil(f N)`-th largest of `values` (reorders them).
pub fn empirical_fractile(values: &mut [f64], f: f64) -> f64 {
    let k = rank_of(f, values.len());
    let (_, v, _) = values.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    *v
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn for_each_subset(d: usize, s: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        visit(&idx);
        let mut i = s;
        while i > 0 && idx[i - 1] == d - s + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `tau_x(f)`: exact over all `C(d, s)` subsets when there are no more of
/// them than `samples`, otherwise estimated from `samples` random draws.
pub fn estimate_fractile(x: &[f64], s: usize, f: f64, samples: usize, seed: u64) -> Result<f64> {
    let d = x.len();
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::Param(format!("fraction f = {f} must lie in (0, 1]")));
    }
    if samples == 0 {
        return Err(Error::Param("samples must be positive".into()));
    }
    let mut sampler = ThetaSampler::new(d, s, seed)?;
    let mut values = if binomial(d, s) <= samples as u128 {
        let mut all = Vec::new();
        for_each_subset(d, s, |sub| all.push(sub.iter().map(|&i| x[i]).sum()));
        all
    } else {
        (0..samples)
            .map(|_| sampler.draw().iter().map(|&i| x[i as usize]).sum())
            .collect()
    };
    Ok(empirical_fractile(&mut values, f))
}

/// Wilson score interval for `hits` successes in `n` trials at normal
/// quantile `z`.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QEstimate {
    /// `NaN` when no draw met the conditioning event.
    pub q: f64,
    pub lower: f64,
    pub upper: f64,
    pub hits: usize,
    pub conditioned: usize,
}

/// Estimates `q(x, x')` at `f = rho / m` from `samples` shared draws: both
/// fractiles and the conditional frequency come from the same draws, so
/// `q(x, x) = 1` exactly.
pub fn estimate_q(
    x: &[f64],
    x2: &[f64],
    s: usize,
    rho: usize,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<QEstimate> {
    if x.len() != x2.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: x2.len(),
        });
    }
    if rho < 1 || rho > m {
        return Err(Error::Param(format!("rho = {rho} must lie in [1, m = {m}]")));
    }
    if samples == 0 {
        return Err(Error::Param("samples must be positive".into()));
    }
    let f = rho as f64 / m as f64;
    let mut sampler = ThetaSampler::new(x.len(), s, seed)?;
    let mut a = vec![0.0; samples];
    let mut b = vec![0.0; samples];
    let mut pair = [0.0; 2];
    for i in 0..samples {
        sampler.project(&[x, x2], &mut pair);
        a[i] = pair[0];
        b[i] = pair[1];
    }
    let ta = empirical_fractile(&mut a.clone(), f);
    let tb = empirical_fractile(&mut b.clone(), f);
    let (mut hits, mut conditioned) = (0, 0);
    for (va, vb) in a.iter().zip(&b) {
        if *va >= ta {
            conditioned += 1;
            hits += usize::from(*vb >= tb);
        }
    }
    let (lower, upper) = wilson_interval(hits, conditioned, Z95);
    let q = if conditioned == 0 {
        f64::NAN
    } else {
        hits as f64 / conditioned as f64
    };
    Ok(QEstimate {
        q,
        lower,
        upper,
        hits,
        conditioned,
    })
}

/// Half the gap between the `f/2` and `f` fractiles of `x`, from one set of
/// draws.
pub fn fractile_gap(x: &[f64], s: usize, f: f64, samples: usize, seed: u64) -> Result<f64> {
    let mut sampler = ThetaSampler::new(x.len(), s, seed)?;
    let mut values: Vec<f64> = (0..samples)
        .map(|_| sampler.draw().iter().map(|&i| x[i as usize]).sum())
        .collect();
    let hi = empirical_fractile(&mut values, f / 2.0);
    let lo = empirical_fractile(&mut values, f);
    Ok(0.5 * (hi - lo))
}

/// Permutation-invariant distributions for drawing `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetricLaw {
    Gaussian,
    Uniform,
}

impl SymmetricLaw {
    fn fill(self, rng: &mut RngState, out: &mut [f64]) {
        for v in out {
            *v = match self {
                SymmetricLaw::Gaussian => rng.standard_normal(),
                SymmetricLaw::Uniform => 2.0 * rng.next_f64() - 1.0,
            };
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

impl MeanEstimate {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            std_err: (var / n).sqrt(),
            trials: values.len(),
        }
    }

    /// Normal-approximation interval of half-width `z` standard errors.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.std_err, self.mean + z * self.std_err)
    }
}

/// Mean of `q(x, x')` over `trials` draws of `x` from `law`, with `x'`
/// fixed. Trials whose conditioning event was never hit are skipped.
#[allow(clippy::too_many_arguments)]
pub fn permutation_invariant_q_check(
    x2: &[f64],
    s: usize,
    rho: usize,
    m: usize,
    law: SymmetricLaw,
    trials: usize,
    samples_per_trial: usize,
    seed: u64,
) -> Result<MeanEstimate> {
    let mut rng = RngState::with_stream(seed, stream::THEORY);
    let mut x = vec![0.0; x2.len()];
    let mut qs = Vec::with_capacity(trials);
    for t in 0..trials {
        law.fill(&mut rng, &mut x);
        let est = estimate_q(&x, x2, s, rho, m, samples_per_trial, derive_seed(seed, t as u64))?;
        if est.conditioned > 0 {
            qs.push(est.q);
        }
    }
    if qs.is_empty() {
        return Err(Error::Param("no trial hit the conditioning event".into()));
    }
    Ok(MeanEstimate::from_values(&qs))
}

/// A pair `(x, x')` with `x' = x - (Delta / s) u`, `u` uniform in `[0, 1]^d`,
/// which satisfies `x'[i] >= x[i] - Delta / s` for every `i`.
pub fn shifted_pair(
    d: usize,
    s: usize,
    rho: usize,
    m: usize,
    fractile_samples: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let mut rng = RngState::with_stream(seed, stream::THEORY);
    let x: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let delta = fractile_gap(&x, s, rho as f64 / m as f64, fractile_samples, derive_seed(seed, 1))?;
    let step = delta / s as f64;
    let x2 = x.iter().map(|v| v - step * rng.next_f64()).collect();
    Ok((x, x2, delta))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgreementSpec {
    /// Two-class generator for the training set.
    pub data: SynthSpec,
    pub s: usize,
    pub rho: usize,
    pub m_values: Vec<usize>,
    pub k: usize,
    pub queries: usize,
    /// Hash seeds averaged per `m`.
    pub repeats: usize,
    /// Query offset as a fraction of `min(eta / 2, Delta / s)` at the largest `m`.
    pub perturbation: f64,
    pub fractile_samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AgreementRow {
    pub m: usize,
    pub queries: usize,
    pub agree: f64,
    pub satisfied: usize,
    pub agree_satisfied: f64,
}

/// Trains FlyNN (gamma = 0) at every `m` and compares it with kNN
/// (l-infinity) on queries formed by perturbing training points. A query
/// satisfies the precondition when the l-infinity distance to its
/// `ceil((k+1)/2)`-th neighbor is at most `min(eta / 2, Delta_x / s)`.
pub fn agreement_experiment(spec: &AgreementSpec) -> Result<Vec<AgreementRow>> {
    let ds: Dataset = make_classification(&spec.data)?;
    if ds.num_classes() != 2 {
        return Err(Error::Param("the agreement experiment needs two classes".into()));
    }
    if spec.k < 1 || spec.k > ds.n() || spec.repeats == 0 || spec.m_values.is_empty() {
        return Err(Error::Param("k, repeats and m_values must be usable".into()));
    }
    let eta = margin(&ds)?;
    let m_max = *spec.m_values.iter().max().unwrap();
    let mut rng = RngState::with_stream(spec.seed, stream::THEORY);

    let mut queries: Vec<Vec<f64>> = Vec::with_capacity(spec.queries);
    for q in 0..spec.queries {
        let base = ds.row(rng.below_usize(ds.n()));
        let gap = fractile_gap(
            base,
            spec.s,
            spec.rho as f64 / m_max as f64,
            spec.fractile_samples,
            derive_seed(spec.seed, q as u64),
        )?;
        let radius = spec.perturbation * (eta / 2.0).min(gap / spec.s as f64);
        queries.push(base.iter().map(|v| v + radius * (2.0 * rng.next_f64() - 1.0)).collect());
    }
    let knn: Vec<usize> = queries
        .iter()
        .map(|x| {
            Ok(vote(
                &ds,
                &neighbor_order(&ds, x, SimilarityKind::NegativeLinf)?,
                spec.k,
            ))
        })
        .collect::<Result<_>>()?;
    let star = spec.k.div_ceil(2).max(1);
    let near: Vec<f64> = queries
        .iter()
        .map(|x| kth_nn_distance(&ds, x, star))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(spec.m_values.len());
    for &m in &spec.m_values {
        let mut ok = vec![false; queries.len()];
        for (i, x) in queries.iter().enumerate() {
            let gap = fractile_gap(
                x,
                spec.s,
                spec.rho as f64 / m as f64,
                spec.fractile_samples,
                derive_seed(spec.seed ^ m as u64, i as u64),
            )?;
            ok[i] = near[i] <= (eta / 2.0).min(gap / spec.s as f64);
        }
        let (mut agree, mut agree_ok) = (0usize, 0usize);
        for r in 0..spec.repeats {
            let params = HashParams::new(m, spec.s, spec.rho, derive_seed(spec.seed, 1000 + r as u64));
            let model = train(&ds, params, Gamma::new(0.0)?)?;
            for (i, x) in queries.iter().enumerate() {
                let same = model.scores_for_hash(&model.hash(x)?)?.argmin() == knn[i];
                agree += usize::from(same);
                agree_ok += usize::from(same && ok[i]);
            }
        }
        let satisfied = ok.iter().filter(|&&b| b).count();
        let total = (spec.repeats * queries.len()) as f64;
        rows.push(AgreementRow {
            m,
            queries: queries.len(),
            agree: agree as f64 / total,
            satisfied,
            agree_satisfied: if satisfied == 0 {
                f64::NAN
            } else {
                agree_ok as f64 / (spec.repeats * satisfied) as f64
            },
        });
    }
    Ok(rows)
}

/// One line of a theory results file.
#[derive(Clone, Debug, Serialize)]
pub struct TheoryRecord {
    pub experiment: String,
    pub params: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn write_theory_csv(records: &[TheoryRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}
