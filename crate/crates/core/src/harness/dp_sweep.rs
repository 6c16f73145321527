//! Accuracy of DP federated training over an (epsilon, T) grid.
//!
//! Every party hashes its shard once per repetition; each grid cell then
//! privatizes those counts with its own seed and reduces them in the same
//! tree order as the networked protocol, so a cell equals what
//! [`train_flynn_fl`](crate::federated::train_flynn_fl) would build with
//! the logged `dp_seed`.

use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{accumulate_counts, FilterCounts, Gamma, Scorer};
use crate::data::{shard, Dataset};
use crate::dp::{privatize_counts, DpParams, PrivatizedCounts};
use crate::error::{Error, Result};
use crate::federated::tree_reduce_local;
use crate::harness::config::{ExperimentConfig, ExperimentKind};
use crate::harness::records::{mean_se, ResultRecord};
use crate::hash::{FeatureHasher, FlyHasher};
use crate::rng::{derive_seed, stream, RngState};

#[derive(Clone, Debug, Serialize)]
pub struct DpCurve {
    pub epsilon: f64,
    pub samples: Vec<usize>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub best_samples: usize,
    pub best_mean: f64,
    pub best_se: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DpSummary {
    pub non_dp_mean: f64,
    pub non_dp_se: f64,
    pub curves: Vec<DpCurve>,
}

pub struct DpOutput {
    pub records: Vec<ResultRecord>,
    pub summary: DpSummary,
}

/// Seed of the privatization in cell `(e, t)` of repetition `rep_seed`.
pub fn cell_dp_seed(rep_seed: u64, e: usize, t: usize) -> u64 {
    derive_seed(derive_seed(rep_seed, 2 + e as u64), t as u64)
}

/// Rows in shuffled order, the last `test_size` of them held out.
pub fn holdout_split(ds: &Dataset, test_size: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if test_size >= ds.n() {
        return Err(Error::Param(format!(
            "test_size = {test_size} leaves no training rows out of {}",
            ds.n()
        )));
    }
    let mut order: Vec<usize> = (0..ds.n()).collect();
    RngState::with_stream(seed, stream::SPLIT).shuffle(&mut order);
    let cut = ds.n() - test_size;
    Ok((ds.subset(&order[..cut]), ds.subset(&order[cut..])))
}

fn accuracy(scorer: &Scorer, codes: &[Vec<u32>], test: &Dataset) -> f64 {
    let hits = codes
        .iter()
        .enumerate()
        .filter(|(i, c)| scorer.scores_unchecked(c).argmin() == test.label(*i))
        .count();
    hits as f64 / codes.len() as f64
}

pub fn run_dp_sweep(cfg: &ExperimentConfig) -> Result<DpOutput> {
    cfg.validate(ExperimentKind::DpSweep)?;
    let id = cfg.id(ExperimentKind::DpSweep);
    let model = cfg.model()?;
    let dp = cfg.dp()?;
    let gamma = Gamma::new(model.gamma)?;
    let fixed = if cfg.dataset.is_synthetic() {
        None
    } else {
        Some(cfg.dataset.load(0)?)
    };

    let cells: Vec<(usize, usize)> = (0..dp.epsilon.len())
        .flat_map(|e| (0..dp.samples.len()).map(move |t| (e, t)))
        .collect();
    let mut records = Vec::new();
    let mut non_dp = Vec::new();
    let mut acc = vec![vec![Vec::new(); dp.samples.len()]; dp.epsilon.len()];

    for rep in 0..cfg.repetitions {
        let rep_seed = derive_seed(cfg.seed, rep as u64);
        let generated;
        let ds = match &fixed {
            Some(ds) => ds,
            None => {
                generated = cfg.dataset.load(derive_seed(rep_seed, 0))?;
                &generated
            }
        };
        let (train, test) = holdout_split(ds, dp.test_size, derive_seed(rep_seed, 1))?;
        let params = model.params(derive_seed(rep_seed, 1000));
        let hasher = FlyHasher::new(train.d(), params)?;
        let cells_total = params.m * train.num_classes();
        let shards = shard(&train, dp.parties, cfg.federation.policy)?;
        let locals = shards
            .par_iter()
            .map(|s| accumulate_counts(&hasher, s))
            .collect::<Result<Vec<_>>>()?;
        let codes = (0..test.n())
            .into_par_iter()
            .map(|i| hasher.hash(test.row(i)).map(|h| h.ones().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let describe = format!(
            "m={};s={};rho={};gamma={};seed={};parties={}",
            params.m,
            params.s,
            params.rho,
            gamma.text(),
            params.seed,
            dp.parties
        );

        let exact = tree_reduce_local(&locals)?;
        let a = accuracy(&Scorer::from_exact(&exact, gamma.value()), &codes, &test);
        non_dp.push(a);
        let mut r = ResultRecord::new(&id, "flynn-fl", format!("{describe};dp=off"), rep, rep_seed);
        r.accuracy = Some(a);
        records.push(r);

        let results = cells
            .par_iter()
            .map(|&(e, t)| {
                let epsilon = dp.epsilon[e];
                let samples = dp.samples[t];
                DpParams::new(epsilon, samples)?.validate(cells_total)?;
                let per_party = DpParams::new(epsilon / dp.parties as f64, samples)?;
                let dp_seed = cell_dp_seed(rep_seed, e, t);
                let private = locals
                    .iter()
                    .enumerate()
                    .map(|(rank, c)| {
                        let mut rng = RngState::with_stream(derive_seed(dp_seed, rank as u64), stream::PRIVACY);
                        privatize_counts(c, &per_party, &mut rng)
                    })
                    .collect::<Result<Vec<PrivatizedCounts>>>()?;
                let noisy = tree_reduce_local(&private)?.into_noisy_counts(train.num_classes(), params.m)?;
                let scorer = Scorer::new(&FilterCounts::Noisy(noisy), gamma.value());
                Ok((e, t, dp_seed, accuracy(&scorer, &codes, &test)))
            })
            .collect::<Result<Vec<_>>>()?;
        for (e, t, dp_seed, a) in results {
            acc[e][t].push(a);
            let mut r = ResultRecord::new(
                &id,
                "flynn-fl-dp",
                format!(
                    "{describe};epsilon={};T={};dp_seed={dp_seed}",
                    dp.epsilon[e], dp.samples[t]
                ),
                rep,
                rep_seed,
            );
            r.accuracy = Some(a);
            r.normalized_accuracy = Some(1.0 - a / non_dp[rep]).filter(|v| v.is_finite());
            records.push(r);
        }
    }

    let (non_dp_mean, non_dp_se) = mean_se(&non_dp);
    let curves = dp
        .epsilon
        .iter()
        .zip(&acc)
        .map(|(&epsilon, per_t)| {
            let stats: Vec<(f64, f64)> = per_t.iter().map(|v| mean_se(v)).collect();
            let mut best = 0;
            for (t, s) in stats.iter().enumerate() {
                if s.0 > stats[best].0 {
                    best = t;
                }
            }
            DpCurve {
                epsilon,
                samples: dp.samples.clone(),
                mean: stats.iter().map(|s| s.0).collect(),
                se: stats.iter().map(|s| s.1).collect(),
                best_samples: dp.samples[best],
                best_mean: stats[best].0,
                best_se: stats[best].1,
            }
        })
        .collect();
    Ok(DpOutput {
        records,
        summary: DpSummary {
            non_dp_mean,
            non_dp_se,
            curves,
        },
    })
}
