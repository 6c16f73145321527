//! Brute-force k-nearest-neighbor classification and the l-infinity margin
//! quantities used to reason about when FlyNN should agree with kNN.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};

/// Similarity between two points; larger means more similar for every kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    #[default]
    NegativeEuclidean,
    NegativeLinf,
    Cosine,
}

impl SimilarityKind {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            // Squared distance has the same ordering and avoids the sqrt.
            SimilarityKind::NegativeEuclidean => -a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>(),
            SimilarityKind::NegativeLinf => -linf(a, b),
            SimilarityKind::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    dot / (na * nb)
                }
            }
        }
    }
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Training indices ordered from most to least similar to `x`; equal
/// similarities keep the smaller training index first.
pub fn neighbor_order(ds: &Dataset, x: &[f64], sim: SimilarityKind) -> Result<Vec<usize>> {
    check_dim(ds.d(), x.len())?;
    let sims: Vec<f64> = ds.rows().map(|r| sim.eval(r, x)).collect();
    let mut order: Vec<usize> = (0..ds.n()).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Majority label among the first `k` entries of `order`; vote ties go to the
/// smaller class index.
pub fn vote(ds: &Dataset, order: &[usize], k: usize) -> usize {
    let mut tally = vec![0usize; ds.num_classes()];
    for &i in &order[..k] {
        tally[ds.label(i)] += 1;
    }
    argmax_first(&tally)
}

/// Predictions for every `k` in `ks` from a single ranking.
pub fn vote_many(ds: &Dataset, order: &[usize], ks: &[usize]) -> Vec<usize> {
    let mut tally = vec![0usize; ds.num_classes()];
    let mut out = vec![0; ks.len()];
    let mut sorted: Vec<(usize, usize)> = ks.iter().copied().enumerate().map(|(j, k)| (k, j)).collect();
    sorted.sort_unstable();
    let mut taken = 0;
    for (k, j) in sorted {
        while taken < k.min(order.len()) {
            tally[ds.label(order[taken])] += 1;
            taken += 1;
        }
        out[j] = argmax_first(&tally);
    }
    out
}

fn argmax_first(tally: &[usize]) -> usize {
    let mut best = 0;
    for (l, &c) in tally.iter().enumerate().skip(1) {
        if c > tally[best] {
            best = l;
        }
    }
    best
}

pub fn knn_classify(ds: &Dataset, x: &[f64], k: usize, sim: SimilarityKind) -> Result<usize> {
    if k < 1 || k > ds.n() {
        return Err(Error::Param(format!("k = {k} must lie in [1, n = {}]", ds.n())));
    }
    let order = neighbor_order(ds, x, sim)?;
    Ok(vote(ds, &order, k))
}

/// Smallest l-infinity distance between points of different classes.
pub fn margin(ds: &Dataset) -> Result<f64> {
    if ds.num_classes() != 2 {
        return Err(Error::Param(format!(
            "margin needs exactly 2 classes, dataset has {}",
            ds.num_classes()
        )));
    }
    let (zero, one): (Vec<usize>, Vec<usize>) = (0..ds.n()).partition(|&i| ds.label(i) == 0);
    if zero.is_empty() || one.is_empty() {
        return Err(Error::Param("margin needs both classes to be non-empty".into()));
    }
    let mut best = f64::INFINITY;
    for &i in &zero {
        for &j in &one {
            best = best.min(linf(ds.row(i), ds.row(j)));
        }
    }
    Ok(best)
}

/// Distance from `x` to its `k`-th nearest training point under l-infinity.
pub fn kth_nn_distance(ds: &Dataset, x: &[f64], k: usize) -> Result<f64> {
    check_dim(ds.d(), x.len())?;
    if k < 1 || k > ds.n() {
        return Err(Error::Param(format!("k = {k} must lie in [1, n = {}]", ds.n())));
    }
    let mut dist: Vec<f64> = ds.rows().map(|r| linf(r, x)).collect();
    let (_, kth, _) = dist.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_classification, LabelTable, SynthSpec};
    use crate::rng::RngState;

    fn ds(rows: &[Vec<f64>], labels: &[u32], classes: usize) -> Dataset {
        Dataset::new(
            rows[0].len(),
            rows.concat(),
            labels.to_vec(),
            LabelTable::numbered(classes),
            "",
        )
        .unwrap()
    }

    #[test]
    fn k1_returns_nearest_label() {
        let s = ds(&[vec![0.0, 0.0], vec![5.0, 5.0], vec![0.5, 0.0]], &[0, 1, 1], 2);
        for kind in [SimilarityKind::NegativeEuclidean, SimilarityKind::NegativeLinf] {
            assert_eq!(knn_classify(&s, &[4.0, 4.0], 1, kind).unwrap(), 1);
            assert_eq!(knn_classify(&s, &[0.0, 0.0], 1, kind).unwrap(), 0);
        }
    }

    #[test]
    fn k_out_of_range() {
        let s = ds(&[vec![0.0]], &[0], 1);
        assert!(knn_classify(&s, &[0.0], 0, SimilarityKind::default()).is_err());
        assert!(knn_classify(&s, &[0.0], 2, SimilarityKind::default()).is_err());
        assert!(knn_classify(&s, &[0.0, 1.0], 1, SimilarityKind::default()).is_err());
    }

    #[test]
    fn k_equals_n_gives_majority() {
        let s = ds(&[vec![0.0], vec![1.0], vec![2.0], vec![9.0]], &[1, 0, 1, 0], 2);
        // 2-2 split: tie goes to class 0.
        assert_eq!(knn_classify(&s, &[9.0], 4, SimilarityKind::default()).unwrap(), 0);
        let s = ds(&[vec![0.0], vec![1.0], vec![2.0]], &[1, 0, 1], 2);
        assert_eq!(knn_classify(&s, &[1.0], 3, SimilarityKind::default()).unwrap(), 1);
    }

    #[test]
    fn k3_matches_subset_enumeration() {
        // Oracle: among all 3-subsets, the k nearest are the subset whose
        // farthest member is closest (ties by index); vote over it.
        let data = make_classification(&SynthSpec::new(20, 3, 2, 1, 6)).unwrap();
        let mut rng = RngState::new(2);
        for _ in 0..25 {
            let x: Vec<f64> = (0..3).map(|_| 2.0 * rng.standard_normal()).collect();
            let dist: Vec<f64> = data
                .rows()
                .map(|r| -SimilarityKind::NegativeEuclidean.eval(r, &x))
                .collect();
            let mut best: Option<(Vec<usize>, f64)> = None;
            for a in 0..20 {
                for b in a + 1..20 {
                    for c in b + 1..20 {
                        let total = dist[a] + dist[b] + dist[c];
                        if best.as_ref().is_none_or(|(_, t)| total < *t) {
                            best = Some((vec![a, b, c], total));
                        }
                    }
                }
            }
            let (set, _) = best.unwrap();
            let ones = set.iter().filter(|&&i| data.label(i) == 1).count();
            let expect = usize::from(ones >= 2);
            assert_eq!(
                knn_classify(&data, &x, 3, SimilarityKind::NegativeEuclidean).unwrap(),
                expect
            );
        }
    }

    #[test]
    fn permutation_invariant_without_ties() {
        let data = make_classification(&SynthSpec::new(40, 4, 3, 2, 1)).unwrap();
        let mut order: Vec<usize> = (0..40).collect();
        RngState::new(8).shuffle(&mut order);
        let perm = data.subset(&order);
        let mut rng = RngState::new(4);
        for _ in 0..30 {
            let x: Vec<f64> = (0..4).map(|_| rng.standard_normal()).collect();
            for k in [1, 3, 7] {
                assert_eq!(
                    knn_classify(&data, &x, k, SimilarityKind::Cosine).unwrap(),
                    knn_classify(&perm, &x, k, SimilarityKind::Cosine).unwrap()
                );
            }
        }
    }

    #[test]
    fn vote_many_agrees_with_vote() {
        let data = make_classification(&SynthSpec::new(30, 3, 3, 1, 2)).unwrap();
        let order = neighbor_order(&data, &[0.1, 0.2, 0.3], SimilarityKind::default()).unwrap();
        let ks = [9, 1, 4, 30];
        let many = vote_many(&data, &order, &ks);
        for (j, &k) in ks.iter().enumerate() {
            assert_eq!(many[j], vote(&data, &order, k));
        }
    }

    #[test]
    fn margin_examples() {
        let s = ds(&[vec![0.0, 0.0], vec![1.0, 3.0]], &[0, 1], 2);
        assert_eq!(margin(&s).unwrap(), 3.0);
        let s = ds(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![7.0, 7.0]], &[0, 1, 1], 2);
        assert_eq!(margin(&s).unwrap(), 0.0);
        assert!(margin(&ds(&[vec![0.0]], &[0], 3)).is_err());
        assert!(margin(&ds(&[vec![0.0]], &[0], 2)).is_err());
    }

    #[test]
    fn margin_matches_double_loop_and_is_symmetric() {
        let data = make_classification(&SynthSpec::new(50, 3, 2, 2, 3)).unwrap();
        let mut oracle = f64::INFINITY;
        for i in 0..50 {
            for j in 0..50 {
                if data.label(i) != data.label(j) {
                    let d = data
                        .row(i)
                        .iter()
                        .zip(data.row(j))
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    oracle = oracle.min(d);
                }
            }
        }
        assert_eq!(margin(&data).unwrap(), oracle);
        let swapped: Vec<u32> = data.labels().iter().map(|&l| 1 - l).collect();
        let flipped = Dataset::new(3, data.features().to_vec(), swapped, LabelTable::numbered(2), "").unwrap();
        assert_eq!(margin(&flipped).unwrap(), oracle);
    }

    #[test]
    fn kth_distance_examples() {
        let s = ds(&[vec![1.0], vec![2.0], vec![3.0]], &[0, 0, 0], 1);
        assert_eq!(kth_nn_distance(&s, &[0.0], 2).unwrap(), 2.0);
        assert_eq!(kth_nn_distance(&s, &[2.0], 1).unwrap(), 0.0);
        let data = make_classification(&SynthSpec::new(30, 4, 2, 1, 9)).unwrap();
        let x = [0.3, -0.2, 1.0, 0.0];
        let mut all: Vec<f64> = data.rows().map(|r| linf(r, &x)).collect();
        all.sort_by(f64::total_cmp);
        for k in 1..=30 {
            assert_eq!(kth_nn_distance(&data, &x, k).unwrap(), all[k - 1]);
        }
    }
}
