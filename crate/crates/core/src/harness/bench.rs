//! Cross-validated comparison of FlyNN, kNN and SBFC.
//!
//! Each method hashes every row once per setting. The counts of fold `f` are
//! the totals minus the contribution of fold `f`'s own rows, which is exactly
//! what training on the other folds would produce.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{decay_weight, Gamma};
use crate::data::{kfold, Dataset, Fold};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, ExperimentKind, GridConfig, Method};
use crate::harness::grid::{default_sbfc_widths, sample_settings};
use crate::harness::records::{mean_se, ResultRecord};
use crate::hash::{FeatureHasher, FlyHasher, HashParams, SimHasher};
use crate::knn::{neighbor_order, vote_many};
use crate::rng::derive_seed;

/// Codes of every row under one hash function.
enum Codes {
    Sparse(Vec<Vec<u32>>),
    Bits { words: usize, data: Vec<u64> },
}

impl Codes {
    fn build<H: FeatureHasher>(hasher: &H, ds: &Dataset) -> Result<Self> {
        let m = hasher.output_dim();
        let rows: Vec<Vec<u32>> = (0..ds.n())
            .into_par_iter()
            .map(|i| hasher.hash(ds.row(i)).map(|h| h.ones().to_vec()))
            .collect::<Result<_>>()?;
        let ones: usize = rows.iter().map(Vec::len).sum();
        // Dense codes are cheaper as bitsets once they cover more than 1/32 of the bits.
        if ones * 32 <= ds.n() * m {
            return Ok(Codes::Sparse(rows));
        }
        let words = m.div_ceil(64);
        let mut data = vec![0u64; words * ds.n()];
        for (i, row) in rows.iter().enumerate() {
            for &b in row {
                data[i * words + b as usize / 64] |= 1 << (b % 64);
            }
        }
        Ok(Codes::Bits { words, data })
    }

    fn visit(&self, i: usize, mut f: impl FnMut(usize)) {
        match self {
            Codes::Sparse(rows) => rows[i].iter().for_each(|&b| f(b as usize)),
            Codes::Bits { words, data } => {
                for (w, &bits) in data[i * words..(i + 1) * words].iter().enumerate() {
                    let mut rest = bits;
                    while rest != 0 {
                        f(w * 64 + rest.trailing_zeros() as usize);
                        rest &= rest - 1;
                    }
                }
            }
        }
    }
}

/// Mean over the evaluated folds of the fold accuracies, per gamma.
///
/// Returns `[gamma][fold]`.
fn filter_cv(codes: &Codes, m: usize, ds: &Dataset, folds: &[Fold], gammas: &[f64]) -> Vec<Vec<f64>> {
    let classes = ds.num_classes();
    let mut total = vec![0u32; classes * m];
    for i in 0..ds.n() {
        let base = ds.label(i) * m;
        codes.visit(i, |b| total[base + b] += 1);
    }
    let mut out = vec![Vec::with_capacity(folds.len()); gammas.len()];
    let mut weights = vec![0.0; classes * m];
    let mut scores = vec![0.0; classes];
    for fold in folds {
        let mut counts = total.clone();
        for &i in &fold.test {
            let base = ds.label(i) * m;
            codes.visit(i, |b| counts[base + b] -= 1);
        }
        for (g, &gamma) in gammas.iter().enumerate() {
            for (w, &c) in weights.iter_mut().zip(&counts) {
                *w = decay_weight(gamma, c);
            }
            let mut correct = 0usize;
            for &i in &fold.test {
                scores.fill(0.0);
                codes.visit(i, |b| {
                    for (l, s) in scores.iter_mut().enumerate() {
                        *s += weights[l * m + b];
                    }
                });
                let mut best = 0;
                for l in 1..classes {
                    if scores[l] < scores[best] {
                        best = l;
                    }
                }
                correct += usize::from(best == ds.label(i));
            }
            out[g].push(correct as f64 / fold.test.len() as f64);
        }
    }
    out
}

/// `[k][fold]` accuracies of kNN restricted to each fold's training rows.
fn knn_cv(ds: &Dataset, folds: &[Fold], fold_of: &[usize], grid: &GridConfig) -> Result<Vec<Vec<f64>>> {
    let per_fold: Vec<Vec<f64>> = folds
        .iter()
        .enumerate()
        .map(|(f, fold)| {
            let hits: Vec<Vec<bool>> = fold
                .test
                .par_iter()
                .map(|&i| {
                    let order: Vec<usize> = neighbor_order(ds, ds.row(i), grid.similarity)?
                        .into_iter()
                        .filter(|&j| fold_of[j] != f)
                        .collect();
                    Ok(vote_many(ds, &order, &grid.k)
                        .into_iter()
                        .map(|p| p == ds.label(i))
                        .collect())
                })
                .collect::<Result<_>>()?;
            Ok((0..grid.k.len())
                .map(|k| hits.iter().filter(|h| h[k]).count() as f64 / fold.test.len() as f64)
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..grid.k.len())
        .map(|k| per_fold.iter().map(|f| f[k]).collect())
        .collect())
}

/// Fold accuracies of one (method, params) cell in one repetition.
#[derive(Clone, Debug)]
struct Cell {
    method: Method,
    params: String,
    folds: Vec<f64>,
    seconds: f64,
}

impl Cell {
    fn mean(&self) -> f64 {
        self.folds.iter().sum::<f64>() / self.folds.len() as f64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodSummary {
    pub method: String,
    /// Best-tuned mean CV accuracy of every repetition.
    pub best_accuracy: Vec<f64>,
    /// Params of the best cell in every repetition.
    pub best_params: Vec<String>,
    pub normalized: Vec<f64>,
    pub mean_accuracy: f64,
    pub mean_normalized: f64,
    pub se_normalized: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchSummary {
    pub repetitions: usize,
    pub methods: Vec<MethodSummary>,
}

impl BenchSummary {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }
}

pub struct BenchOutput {
    pub records: Vec<ResultRecord>,
    pub summary: BenchSummary,
}

fn repetition_cells(cfg: &ExperimentConfig, ds: &Dataset, rep_seed: u64, grid_seed: u64) -> Result<Vec<Cell>> {
    let grid = &cfg.grid;
    if ds.n() < grid.folds {
        return Err(Error::Param(format!(
            "{} rows cannot fill {} folds",
            ds.n(),
            grid.folds
        )));
    }
    let folds = kfold(ds.n(), grid.folds, derive_seed(rep_seed, 1))?;
    let mut fold_of = vec![0; ds.n()];
    for (f, fold) in folds.iter().enumerate() {
        for &i in &fold.test {
            fold_of[i] = f;
        }
    }
    let folds = &folds[..grid.fold_limit.unwrap_or(grid.folds).min(grid.folds)];
    let d = ds.d();
    let mut cells = Vec::new();

    if grid.methods.contains(&Method::Knn) {
        let start = Instant::now();
        let acc = knn_cv(ds, folds, &fold_of, grid)?;
        let seconds = start.elapsed().as_secs_f64() / grid.k.len() as f64;
        for (k, folds) in grid.k.iter().zip(acc) {
            cells.push(Cell {
                method: Method::Knn,
                params: format!("k={k}"),
                folds,
                seconds,
            });
        }
    }

    if grid.methods.contains(&Method::Flynn) {
        let settings = sample_settings(grid, d, grid_seed)?;
        let fly: Vec<Cell> = settings
            .par_iter()
            .enumerate()
            .map(|(j, p)| {
                let start = Instant::now();
                let seed = derive_seed(rep_seed, 1000 + j as u64);
                let hasher = FlyHasher::new(d, HashParams::new(p.m, p.s, p.rho, seed))?;
                let codes = Codes::build(&hasher, ds)?;
                let acc = filter_cv(&codes, p.m, ds, folds, &[p.gamma.value()]);
                Ok(Cell {
                    method: Method::Flynn,
                    params: format!("{};seed={seed}", p.describe()),
                    folds: acc.into_iter().next().expect("one gamma"),
                    seconds: start.elapsed().as_secs_f64(),
                })
            })
            .collect::<Result<_>>()?;
        cells.extend(fly);
    }

    if grid.methods.contains(&Method::Sbfc) {
        let widths = grid.sbfc_m.clone().unwrap_or_else(|| default_sbfc_widths(d));
        let gammas = grid
            .sbfc_gamma
            .iter()
            .map(|&g| Gamma::new(g))
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<f64> = gammas.iter().map(Gamma::value).collect();
        // Widths run one at a time: the widest code tables are the largest allocations of the run.
        for (j, &m) in widths.iter().enumerate() {
            let start = Instant::now();
            let seed = derive_seed(rep_seed, 2000 + j as u64);
            let hasher = SimHasher::new(d, m, seed)?;
            let codes = Codes::build(&hasher, ds)?;
            let acc = filter_cv(&codes, m, ds, folds, &values);
            let seconds = start.elapsed().as_secs_f64() / gammas.len() as f64;
            for (g, folds) in gammas.iter().zip(acc) {
                cells.push(Cell {
                    method: Method::Sbfc,
                    params: format!("m={m};gamma={};seed={seed}", g.text()),
                    folds,
                    seconds,
                });
            }
        }
    }
    Ok(cells)
}

fn best(cells: &[Cell], method: Method) -> Option<&Cell> {
    // First maximum wins, so ties resolve to the earliest setting.
    cells
        .iter()
        .filter(|c| c.method == method)
        .fold(None, |acc: Option<&Cell>, c| match acc {
            Some(b) if b.mean() >= c.mean() => Some(b),
            _ => Some(c),
        })
}

/// Runs the whole benchmark in memory.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<BenchOutput> {
    cfg.validate(ExperimentKind::Bench)?;
    let id = cfg.id(ExperimentKind::Bench);
    let grid_seed = cfg.grid.grid_seed.unwrap_or(cfg.seed);
    let fixed = if cfg.dataset.is_synthetic() {
        None
    } else {
        Some(cfg.dataset.load(0)?)
    };

    let mut records = Vec::new();
    let mut names: Vec<&'static str> = Vec::new();
    for m in &cfg.grid.methods {
        names.push(m.name());
        if *m == Method::Knn && cfg.grid.k.contains(&1) {
            names.push("1nn");
        }
    }
    let mut best_acc: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut best_params: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    let mut normalized: Vec<Vec<f64>> = vec![Vec::new(); names.len()];

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
        let cells = repetition_cells(cfg, ds, rep_seed, grid_seed)?;
        let reference = best(&cells, Method::Knn).map(Cell::mean).filter(|a| *a > 0.0);

        for cell in &cells {
            for (f, &acc) in cell.folds.iter().enumerate() {
                let mut r = ResultRecord::new(&id, cell.method.name(), cell.params.clone(), rep, rep_seed);
                r.fold = Some(f);
                r.accuracy = Some(acc);
                r.normalized_accuracy = reference.map(|a_k| 1.0 - acc / a_k);
                if cfg.record_timing {
                    r.wall_time_s = Some(cell.seconds / cell.folds.len() as f64);
                }
                records.push(r);
            }
        }

        for (slot, name) in names.iter().enumerate() {
            let chosen = match *name {
                "1nn" => cells.iter().find(|c| c.method == Method::Knn && c.params == "k=1"),
                "knn" => best(&cells, Method::Knn),
                "flynn" => best(&cells, Method::Flynn),
                _ => best(&cells, Method::Sbfc),
            };
            if let Some(c) = chosen {
                best_acc[slot].push(c.mean());
                best_params[slot].push(c.params.clone());
                if let Some(a_k) = reference {
                    normalized[slot].push(1.0 - c.mean() / a_k);
                }
            }
        }
    }

    let methods = names
        .iter()
        .enumerate()
        .map(|(slot, name)| {
            let (mean_normalized, se_normalized) = mean_se(&normalized[slot]);
            MethodSummary {
                method: name.to_string(),
                mean_accuracy: mean_se(&best_acc[slot]).0,
                best_accuracy: std::mem::take(&mut best_acc[slot]),
                best_params: std::mem::take(&mut best_params[slot]),
                normalized: std::mem::take(&mut normalized[slot]),
                mean_normalized,
                se_normalized,
            }
        })
        .collect();
    Ok(BenchOutput {
        records,
        summary: BenchSummary {
            repetitions: cfg.repetitions,
            methods,
        },
    })
}
