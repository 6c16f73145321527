use std::sync::Arc;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::hash::{FeatureHasher, HashParams, SparseBitVector};
use crate::rng::{stream, RngState};

/// Sparse binary `m x d` matrix with exactly `s` ones per row, stored as the
/// sorted column indices of each row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiftingMatrix {
    m: usize,
    d: usize,
    s: usize,
    indices: Vec<u32>,
    // Column-major copy of the same pattern: rows holding each column.
    col_start: Vec<u32>,
    col_rows: Vec<u32>,
}

/// Draws each row as a uniform `s`-subset of `[0, d)`.
///
/// Rows are sampled with a partial Fisher-Yates shuffle over a persistent
/// permutation that is undone after each row, so every row costs `O(s)`
/// draws and the result depends only on the generator state.
pub fn gen_lifting_matrix(rng: &mut RngState, m: usize, d: usize, s: usize) -> Result<LiftingMatrix> {
    if m < 1 {
        return Err(Error::Param("m must be at least 1".into()));
    }
    if s < 1 || s > d {
        return Err(Error::Param(format!("s = {s} must lie in [1, d = {d}]")));
    }
    if d > u32::MAX as usize {
        return Err(Error::Param("d too large".into()));
    }
    let mut perm: Vec<u32> = (0..d as u32).collect();
    let mut swaps = vec![0usize; s];
    let mut indices = Vec::with_capacity(m * s);
    for _ in 0..m {
        for (j, slot) in swaps.iter_mut().enumerate() {
            let k = j + rng.below_usize(d - j);
            perm.swap(j, k);
            *slot = k;
        }
        let start = indices.len();
        indices.extend_from_slice(&perm[..s]);
        indices[start..].sort_unstable();
        for j in (0..s).rev() {
            perm.swap(j, swaps[j]);
        }
    }
    Ok(LiftingMatrix::assemble(m, d, s, indices))
}

impl LiftingMatrix {
    /// Rebuilds the matrix that `(seed, m, d, s)` denotes.
    pub fn from_seed(seed: u64, m: usize, d: usize, s: usize) -> Result<Self> {
        let mut rng = RngState::with_stream(seed, stream::LIFTING);
        gen_lifting_matrix(&mut rng, m, d, s)
    }

    /// Builds a matrix from explicit rows; each row is sorted and must hold
    /// `s` distinct indices below `d`.
    pub fn from_rows(d: usize, rows: &[Vec<u32>]) -> Result<Self> {
        let s = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || s == 0 {
            return Err(Error::Param("lifting matrix needs at least one non-empty row".into()));
        }
        let mut indices = Vec::with_capacity(rows.len() * s);
        for row in rows {
            let mut r = row.clone();
            r.sort_unstable();
            r.dedup();
            if r.len() != s || r.iter().any(|&c| c as usize >= d) {
                return Err(Error::Param("rows must hold s distinct indices below d".into()));
            }
            indices.extend(r);
        }
        Ok(Self::assemble(rows.len(), d, s, indices))
    }

    fn assemble(m: usize, d: usize, s: usize, indices: Vec<u32>) -> Self {
        let mut col_start = vec![0u32; d + 1];
        for &c in &indices {
            col_start[c as usize + 1] += 1;
        }
        for j in 0..d {
            col_start[j + 1] += col_start[j];
        }
        let mut fill = col_start.clone();
        let mut col_rows = vec![0u32; indices.len()];
        for (i, row) in indices.chunks_exact(s).enumerate() {
            for &c in row {
                col_rows[fill[c as usize] as usize] = i as u32;
                fill[c as usize] += 1;
            }
        }
        Self {
            m,
            d,
            s,
            indices,
            col_start,
            col_rows,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[i * self.s..(i + 1) * self.s]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.indices.chunks_exact(self.s)
    }

    /// `out[i] = sum of x over row i`.
    ///
    /// Dense inputs walk the rows in `O(m s)`; inputs with many zeros walk
    /// the columns of the non-zero coordinates instead, in `O(m + nnz s m / d)`.
    /// Both visit the terms of each sum in increasing column order, so the
    /// results agree exactly.
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        let nnz = x.iter().filter(|&&v| v != 0.0).count();
        if 2 * nnz >= self.d {
            for (o, row) in out.iter_mut().zip(self.rows()) {
                *o = row.iter().map(|&c| x[c as usize]).sum();
            }
            return;
        }
        out.fill(0.0);
        for (j, &v) in x.iter().enumerate() {
            if v != 0.0 {
                let span = self.col_start[j] as usize..self.col_start[j + 1] as usize;
                for &r in &self.col_rows[span] {
                    out[r as usize] += v;
                }
            }
        }
    }
}

/// Indices of the `rho` largest activations, ties going to the smaller index,
/// returned in increasing order.
pub(crate) fn winner_take_all(activations: &[f64], rho: usize, order: &mut Vec<u32>) -> Vec<u32> {
    let m = activations.len();
    order.clear();
    order.extend(0..m as u32);
    if rho < m {
        order.select_nth_unstable_by(rho - 1, |&a, &b| {
            activations[b as usize]
                .partial_cmp(&activations[a as usize])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
    }
    let mut top = order[..rho].to_vec();
    top.sort_unstable();
    top
}

/// `Gamma_rho(M x)`: exactly `rho` ones at the largest entries of `M x`.
pub fn fly_hash(matrix: &LiftingMatrix, rho: usize, x: &[f64]) -> Result<SparseBitVector> {
    if rho < 1 || rho > matrix.m {
        return Err(Error::Param(format!("rho = {rho} must lie in [1, m = {}]", matrix.m)));
    }
    check_dim(matrix.d, x.len())?;
    check_finite(x)?;
    let mut act = vec![0.0; matrix.m];
    matrix.project_into(x, &mut act);
    let mut order = Vec::with_capacity(matrix.m);
    let ones = winner_take_all(&act, rho, &mut order);
    Ok(SparseBitVector::from_sorted_unchecked(matrix.m, ones))
}

/// FlyHash bound to a concrete lifting matrix. Cheap to clone.
#[derive(Clone, Debug)]
pub struct FlyHasher {
    params: HashParams,
    matrix: Arc<LiftingMatrix>,
}

impl FlyHasher {
    pub fn new(d: usize, params: HashParams) -> Result<Self> {
        params.validate(d)?;
        let matrix = LiftingMatrix::from_seed(params.seed, params.m, d, params.s)?;
        Ok(Self {
            params,
            matrix: Arc::new(matrix),
        })
    }

    pub fn params(&self) -> HashParams {
        self.params
    }

    pub fn matrix(&self) -> &LiftingMatrix {
        &self.matrix
    }
}

impl FeatureHasher for FlyHasher {
    fn input_dim(&self) -> usize {
        self.matrix.d
    }

    fn output_dim(&self) -> usize {
        self.matrix.m
    }

    fn hash(&self, x: &[f64]) -> Result<SparseBitVector> {
        fly_hash(&self.matrix, self.params.rho, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_rows_when_s_equals_d() {
        let mut rng = RngState::new(1);
        let m = gen_lifting_matrix(&mut rng, 3, 4, 4).unwrap();
        for row in m.rows() {
            assert_eq!(row, &[0, 1, 2, 3]);
        }
    }

    #[test]
    fn single_index_rows() {
        let mut rng = RngState::new(2);
        let m = gen_lifting_matrix(&mut rng, 5, 100, 1).unwrap();
        assert_eq!(m.rows().count(), 5);
        assert!(m.rows().all(|r| r.len() == 1 && r[0] < 100));
    }

    #[test]
    fn golden_small_matrix() {
        let mut rng = RngState::new(42);
        let m = gen_lifting_matrix(&mut rng, 2, 6, 2).unwrap();
        let rows: Vec<Vec<u32>> = m.rows().map(|r| r.to_vec()).collect();
        assert_eq!(rows, GOLDEN_SEED42);
    }

    const GOLDEN_SEED42: [[u32; 2]; 2] = [[0, 5], [1, 4]];

    #[test]
    fn rejects_bad_params() {
        let mut rng = RngState::new(0);
        assert!(matches!(gen_lifting_matrix(&mut rng, 3, 4, 5), Err(Error::Param(_))));
        assert!(matches!(gen_lifting_matrix(&mut rng, 3, 4, 0), Err(Error::Param(_))));
        assert!(matches!(gen_lifting_matrix(&mut rng, 0, 4, 2), Err(Error::Param(_))));
    }

    #[test]
    fn from_seed_is_reproducible() {
        let a = LiftingMatrix::from_seed(77, 50, 20, 4).unwrap();
        let b = LiftingMatrix::from_seed(77, 50, 20, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, LiftingMatrix::from_seed(78, 50, 20, 4).unwrap());
    }

    #[test]
    fn zero_input_picks_first_indices() {
        let m = LiftingMatrix::from_seed(3, 10, 4, 2).unwrap();
        let h = fly_hash(&m, 3, &[0.0; 4]).unwrap();
        assert_eq!(h.ones(), &[0, 1, 2]);
    }

    #[test]
    fn hand_computed_three_by_two() {
        // Rows {0}, {1}, {0,1} on x = (3, 1) give activations (3, 1, 4). Rows
        // must share one size, so column 2 is a zero-valued pad.
        assert!(LiftingMatrix::from_rows(2, &[vec![0], vec![1], vec![0, 1]]).is_err());
        let m = LiftingMatrix::from_rows(3, &[vec![0, 2], vec![1, 2], vec![0, 1]]).unwrap();
        let h = fly_hash(&m, 2, &[3.0, 1.0, 0.0]).unwrap();
        assert_eq!(h.ones(), &[0, 2]);
    }

    #[test]
    fn sparsity_of_default_shape() {
        let hasher = FlyHasher::new(20, HashParams::new(2000, 4, 100, 5)).unwrap();
        let mut rng = RngState::new(8);
        let x: Vec<f64> = (0..20).map(|_| rng.standard_normal()).collect();
        let h = hasher.hash(&x).unwrap();
        let zeros = h.len() - h.count_ones();
        assert_eq!(zeros as f64 / h.len() as f64, 0.95);
    }

    #[test]
    fn column_walk_matches_row_sums() {
        let m = LiftingMatrix::from_seed(11, 300, 40, 7).unwrap();
        let mut rng = RngState::new(12);
        for nnz in [0, 1, 5, 19, 20, 40] {
            let mut x = vec![0.0; 40];
            for j in 0..nnz {
                x[(j * 7) % 40] = rng.standard_normal();
            }
            let mut out = vec![f64::NAN; 300];
            m.project_into(&x, &mut out);
            for (i, row) in m.rows().enumerate() {
                let mut acc = 0.0;
                for &c in row {
                    acc += x[c as usize];
                }
                assert_eq!(out[i], acc, "nnz {nnz} row {i}");
            }
        }
    }

    #[test]
    fn rejects_non_finite_and_wrong_dim() {
        let m = LiftingMatrix::from_seed(3, 10, 4, 2).unwrap();
        assert!(matches!(
            fly_hash(&m, 2, &[0.0, f64::NAN, 0.0, 0.0]),
            Err(Error::NonFinite(1))
        ));
        assert!(matches!(fly_hash(&m, 2, &[0.0; 3]), Err(Error::Dimension { .. })));
        assert!(matches!(fly_hash(&m, 11, &[0.0; 4]), Err(Error::Param(_))));
    }

    proptest! {
        #[test]
        fn rows_are_distinct_sorted_in_range(seed in any::<u64>(), m in 1usize..40, d in 1usize..30, s_frac in 0.0f64..1.0) {
            let s = 1 + ((d - 1) as f64 * s_frac) as usize;
            let mat = LiftingMatrix::from_seed(seed, m, d, s).unwrap();
            for row in mat.rows() {
                prop_assert_eq!(row.len(), s);
                prop_assert!(row.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(row.iter().all(|&c| (c as usize) < d));
            }
        }

        #[test]
        fn hash_has_rho_ones_and_is_scale_invariant(
            seed in any::<u64>(),
            x in proptest::collection::vec(-10.0f64..10.0, 12),
            rho in 1usize..60,
            alpha in prop::sample::select(vec![0.5, 2.0, 3.0, 1e-3, 17.25]),
        ) {
            let mat = LiftingMatrix::from_seed(seed, 60, 12, 3).unwrap();
            let h = fly_hash(&mat, rho, &x).unwrap();
            prop_assert_eq!(h.count_ones(), rho);
            let scaled: Vec<f64> = x.iter().map(|v| v * alpha).collect();
            prop_assert_eq!(fly_hash(&mat, rho, &scaled).unwrap(), h);
        }
    }
}
