use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, RngState};

/// Row indices of one cross-validation split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles rows with `seed` and cuts them into `k` test folds whose sizes
/// differ by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 || k > n {
        return Err(Error::Param(format!("k = {k} must lie in [2, n = {n}]")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngState::with_stream(seed, stream::SPLIT).shuffle(&mut order);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = n / k + usize::from(f < n % k);
        let mut test = order[start..start + len].to_vec();
        test.sort_unstable();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + len..]).copied().collect();
        train.sort_unstable();
        folds.push(Fold { train, test });
        start += len;
    }
    Ok(folds)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShardPolicy {
    /// Row `i` goes to party `i mod parties`.
    RoundRobin,
    /// Rows sorted by class (stable), then cut into contiguous equal chunks:
    /// with as many parties as balanced classes, party `t` holds class `t`.
    ByClass,
}

pub fn shard(ds: &Dataset, parties: usize, policy: ShardPolicy) -> Result<Vec<Dataset>> {
    let n = ds.n();
    if parties < 1 || parties > n {
        return Err(Error::Param(format!("parties = {parties} must lie in [1, n = {n}]")));
    }
    let groups: Vec<Vec<usize>> = match policy {
        ShardPolicy::RoundRobin => (0..parties).map(|t| (t..n).step_by(parties).collect()).collect(),
        ShardPolicy::ByClass => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| ds.label(i));
            let mut out = Vec::with_capacity(parties);
            let mut start = 0;
            for t in 0..parties {
                let len = n / parties + usize::from(t < n % parties);
                out.push(order[start..start + len].to_vec());
                start += len;
            }
            out
        }
    };
    Ok(groups.iter().map(|g| ds.subset(g)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_classification, SynthSpec};

    #[test]
    fn folds_partition_rows() {
        let folds = kfold(103, 10, 3).unwrap();
        let mut seen = vec![0; 103];
        for f in &folds {
            assert_eq!(f.train.len() + f.test.len(), 103);
            for &i in &f.test {
                seen[i] += 1;
            }
            assert!(f.test.iter().all(|i| f.train.binary_search(i).is_err()));
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn leave_one_out() {
        let folds = kfold(7, 7, 0).unwrap();
        assert!(folds.iter().all(|f| f.test.len() == 1 && f.train.len() == 6));
    }

    #[test]
    fn fold_errors() {
        assert!(kfold(5, 6, 0).is_err());
        assert!(kfold(5, 1, 0).is_err());
    }

    #[test]
    fn by_class_one_class_per_party() {
        let ds = make_classification(&SynthSpec::new(100, 4, 4, 1, 2)).unwrap();
        let shards = shard(&ds, 4, ShardPolicy::ByClass).unwrap();
        for (t, s) in shards.iter().enumerate() {
            assert!(s.labels().iter().all(|&l| l as usize == t));
        }
    }

    #[test]
    fn shards_cover_dataset() {
        let ds = make_classification(&SynthSpec::new(37, 3, 2, 1, 2)).unwrap();
        for policy in [ShardPolicy::RoundRobin, ShardPolicy::ByClass] {
            let shards = shard(&ds, 5, policy).unwrap();
            let mut rows: Vec<Vec<u64>> = shards
                .iter()
                .flat_map(|s| {
                    s.rows()
                        .map(|r| r.iter().map(|v| v.to_bits()).collect())
                        .collect::<Vec<_>>()
                })
                .collect();
            let mut all: Vec<Vec<u64>> = ds.rows().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
            rows.sort();
            all.sort();
            assert_eq!(rows, all);
        }
        assert!(shard(&ds, 38, ShardPolicy::RoundRobin).is_err());
    }
}
