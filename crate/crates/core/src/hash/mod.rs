//! Sparse binary hashes of real vectors: FlyHash (sparse lifting followed by
//! winner-take-all) and SimHash (signs of a dense Gaussian projection).

mod lifting;
mod simhash;

pub use lifting::{fly_hash, gen_lifting_matrix, FlyHasher, LiftingMatrix};
pub use simhash::{sim_hash, SimHasher, SimProjection};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary vector of length `len` stored as its strictly increasing one-positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SparseBitVector {
    len: usize,
    ones: Vec<u32>,
}

impl SparseBitVector {
    pub fn new(len: usize, ones: Vec<u32>) -> Result<Self> {
        if ones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Malformed("bit positions not strictly increasing".into()));
        }
        if let Some(&last) = ones.last() {
            if last as usize >= len {
                return Err(Error::Malformed(format!("bit {last} out of range {len}")));
            }
        }
        Ok(Self { len, ones })
    }

    pub(crate) fn from_sorted_unchecked(len: usize, ones: Vec<u32>) -> Self {
        debug_assert!(ones.windows(2).all(|w| w[0] < w[1]));
        Self { len, ones }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn ones(&self) -> &[u32] {
        &self.ones
    }

    pub fn count_ones(&self) -> usize {
        self.ones.len()
    }

    pub fn get(&self, i: usize) -> bool {
        self.ones.binary_search(&(i as u32)).is_ok()
    }

    /// Number of positions set in both vectors.
    pub fn overlap(&self, other: &SparseBitVector) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.ones.len() && j < other.ones.len() {
            match self.ones[i].cmp(&other.ones[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// FlyHash configuration: lifted dimension `m`, `s` ones per lifting row,
/// `rho` ones per hash, and the seed the lifting matrix is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashParams {
    pub m: usize,
    pub s: usize,
    pub rho: usize,
    pub seed: u64,
}

impl HashParams {
    pub fn new(m: usize, s: usize, rho: usize, seed: u64) -> Self {
        Self { m, s, rho, seed }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Param("m must be at least 1".into()));
        }
        if self.s < 1 || self.s > d {
            return Err(Error::Param(format!("s = {} must lie in [1, d = {d}]", self.s)));
        }
        if self.rho < 1 || self.rho > self.m {
            return Err(Error::Param(format!(
                "rho = {} must lie in [1, m = {}]",
                self.rho, self.m
            )));
        }
        Ok(())
    }
}

/// A function from `R^d` to sparse binary vectors of a fixed length.
pub trait FeatureHasher: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn hash(&self, x: &[f64]) -> Result<SparseBitVector>;
}

/// Everything needed to rebuild a hasher; this is what model files persist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HashSpec {
    Fly { d: usize, params: HashParams },
    Sim { d: usize, m: usize, seed: u64 },
}

impl HashSpec {
    pub fn input_dim(&self) -> usize {
        match *self {
            HashSpec::Fly { d, .. } | HashSpec::Sim { d, .. } => d,
        }
    }

    pub fn output_dim(&self) -> usize {
        match *self {
            HashSpec::Fly { params, .. } => params.m,
            HashSpec::Sim { m, .. } => m,
        }
    }

    pub fn seed(&self) -> u64 {
        match *self {
            HashSpec::Fly { params, .. } => params.seed,
            HashSpec::Sim { seed, .. } => seed,
        }
    }

    pub fn build(&self) -> Result<AnyHasher> {
        Ok(match *self {
            HashSpec::Fly { d, params } => AnyHasher::Fly(FlyHasher::new(d, params)?),
            HashSpec::Sim { d, m, seed } => AnyHasher::Sim(SimHasher::new(d, m, seed)?),
        })
    }
}

#[derive(Clone, Debug)]
pub enum AnyHasher {
    Fly(FlyHasher),
    Sim(SimHasher),
}

impl FeatureHasher for AnyHasher {
    fn input_dim(&self) -> usize {
        match self {
            AnyHasher::Fly(h) => h.input_dim(),
            AnyHasher::Sim(h) => h.input_dim(),
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            AnyHasher::Fly(h) => h.output_dim(),
            AnyHasher::Sim(h) => h.output_dim(),
        }
    }

    fn hash(&self, x: &[f64]) -> Result<SparseBitVector> {
        match self {
            AnyHasher::Fly(h) => h.hash(x),
            AnyHasher::Sim(h) => h.hash(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_bits_reject_unsorted() {
        assert!(SparseBitVector::new(5, vec![1, 1]).is_err());
        assert!(SparseBitVector::new(5, vec![3, 2]).is_err());
        assert!(SparseBitVector::new(5, vec![5]).is_err());
        assert!(SparseBitVector::new(5, vec![0, 4]).is_ok());
    }

    #[test]
    fn overlap_counts_shared_bits() {
        let a = SparseBitVector::new(10, vec![0, 3, 5, 9]).unwrap();
        let b = SparseBitVector::new(10, vec![3, 4, 9]).unwrap();
        assert_eq!(a.overlap(&b), 2);
        assert!(a.get(5) && !a.get(4));
    }

    #[test]
    fn params_validation() {
        assert!(HashParams::new(10, 3, 2, 0).validate(5).is_ok());
        assert!(HashParams::new(10, 6, 2, 0).validate(5).is_err());
        assert!(HashParams::new(10, 0, 2, 0).validate(5).is_err());
        assert!(HashParams::new(10, 3, 11, 0).validate(5).is_err());
        assert!(HashParams::new(0, 3, 0, 0).validate(5).is_err());
    }
}
