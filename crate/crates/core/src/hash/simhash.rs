use std::sync::Arc;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::hash::{FeatureHasher, SparseBitVector};
use crate::rng::{stream, RngState};

/// Dense `m x d` projection with standard-normal entries, drawn row by row
/// and stored column-major so that zero coordinates of the input cost nothing.
#[derive(Clone, Debug, PartialEq)]
pub struct SimProjection {
    m: usize,
    d: usize,
    cols: Vec<f64>,
}

impl SimProjection {
    pub fn from_seed(seed: u64, m: usize, d: usize) -> Result<Self> {
        if m < 1 || d < 1 {
            return Err(Error::Param("SimHash needs m >= 1 and d >= 1".into()));
        }
        let mut rng = RngState::with_stream(seed, stream::SIMHASH);
        let mut cols = vec![0.0; m * d];
        for i in 0..m {
            for j in 0..d {
                cols[j * m + i] = rng.standard_normal();
            }
        }
        Ok(Self { m, d, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Param(
                "projection rows must be non-empty and equal length".into(),
            ));
        }
        let m = rows.len();
        let mut cols = vec![0.0; m * d];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                cols[j * m + i] = v;
            }
        }
        Ok(Self { m, d, cols })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }
}

/// Bit `i` is set iff `row_i . x >= 0`; the zero vector hashes to all ones.
pub fn sim_hash(p: &SimProjection, x: &[f64]) -> Result<SparseBitVector> {
    check_dim(p.d, x.len())?;
    check_finite(x)?;
    let mut acc = vec![0.0; p.m];
    for (col, &v) in p.cols.chunks_exact(p.m).zip(x) {
        if v != 0.0 {
            for (a, &w) in acc.iter_mut().zip(col) {
                *a += w * v;
            }
        }
    }
    let ones = (0..p.m as u32).filter(|&i| acc[i as usize] >= 0.0).collect();
    Ok(SparseBitVector::from_sorted_unchecked(p.m, ones))
}

#[derive(Clone, Debug)]
pub struct SimHasher {
    seed: u64,
    projection: Arc<SimProjection>,
}

impl SimHasher {
    pub fn new(d: usize, m: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            seed,
            projection: Arc::new(SimProjection::from_seed(seed, m, d)?),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl FeatureHasher for SimHasher {
    fn input_dim(&self) -> usize {
        self.projection.d
    }

    fn output_dim(&self) -> usize {
        self.projection.m
    }

    fn hash(&self, x: &[f64]) -> Result<SparseBitVector> {
        sim_hash(&self.projection, x)
    }
}
