//! Privatization of flattened class counts: `T` rounds of exponential-mechanism
//! selection without replacement, Laplace noise on the selected entries, zeros
//! everywhere else.
//!
//! Selection is implemented with Gumbel keys. Drawing
//! `k_i = eps * c[i] / (4T) + G_i` with i.i.d. standard Gumbel `G_i` and
//! taking the indices in decreasing key order yields exactly the law of
//! sequential sampling without replacement with probability proportional to
//! `exp(eps * c[i] / (4T))` among the remaining indices. Every round scores
//! with the original counts.

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassCounts, NoisyCounts};
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::varint::{put_varint, Reader};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    pub epsilon: f64,
    pub samples: usize,
}

impl DpParams {
    pub fn new(epsilon: f64, samples: usize) -> Result<Self> {
        let p = Self { epsilon, samples };
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Param(format!("epsilon = {epsilon} must be positive and finite")));
        }
        if samples == 0 {
            return Err(Error::Param("T must be at least 1".into()));
        }
        Ok(p)
    }

    pub fn validate(&self, cells: usize) -> Result<()> {
        Self::new(self.epsilon, self.samples)?;
        if self.samples > cells {
            return Err(Error::Param(format!(
                "T = {} exceeds the number of counts m*L = {cells}",
                self.samples
            )));
        }
        Ok(())
    }

    pub fn laplace_scale(&self) -> f64 {
        2.0 * self.samples as f64 / self.epsilon
    }
}

/// Inverse CDF of Laplace(0, `scale`) at `u` in (0, 1).
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    if u < 0.5 {
        scale * (2.0 * u).ln()
    } else {
        -scale * (2.0 * (1.0 - u)).ln()
    }
}

pub fn sample_laplace(scale: f64, rng: &mut RngState) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Param(format!("Laplace scale {scale} must be positive")));
    }
    Ok(laplace_from_uniform(rng.next_open_f64(), scale))
}

/// Indices picked by the exponential mechanism, in selection order.
pub fn select_indices(c: &[u32], params: &DpParams, rng: &mut RngState) -> Result<Vec<usize>> {
    params.validate(c.len())?;
    let t = params.samples;
    let coef = params.epsilon / (4.0 * t as f64);
    let mut keyed: Vec<(f64, usize)> = c
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let gumbel = -(-rng.next_open_f64().ln()).ln();
            (coef * f64::from(v) + gumbel, i)
        })
        .collect();
    let by_key = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if t < keyed.len() {
        keyed.select_nth_unstable_by(t - 1, by_key);
        keyed.truncate(t);
    }
    keyed.sort_unstable_by(by_key);
    Ok(keyed.into_iter().map(|(_, i)| i).collect())
}

/// Runs the mechanism on flattened counts.
pub fn privatize(c: &[u32], params: &DpParams, rng: &mut RngState) -> Result<PrivatizedCounts> {
    let chosen = select_indices(c, params, rng)?;
    let scale = params.laplace_scale();
    let mut entries: Vec<(usize, f64)> = chosen
        .into_iter()
        .map(|i| {
            let noisy = f64::from(c[i]) + laplace_from_uniform(rng.next_open_f64(), scale);
            (i, noisy.max(0.0))
        })
        .collect();
    entries.sort_unstable_by_key(|e| e.0);
    entries.retain(|e| e.1 != 0.0);
    Ok(PrivatizedCounts { len: c.len(), entries })
}

pub fn privatize_counts(c: &ClassCounts, params: &DpParams, rng: &mut RngState) -> Result<PrivatizedCounts> {
    privatize(c.as_flat(), params, rng)
}

/// Sparse nonnegative vector; only strictly positive entries are stored,
/// sorted by index.
#[derive(Clone, Debug, PartialEq)]
pub struct PrivatizedCounts {
    len: usize,
    entries: Vec<(usize, f64)>,
}

impl PrivatizedCounts {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            entries: Vec::new(),
        }
    }

    pub fn from_entries(len: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_unstable_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Malformed(format!("index {} repeated", w[0].0)));
            }
        }
        for &(i, v) in &entries {
            if i >= len {
                return Err(Error::Malformed(format!("index {i} out of range {len}")));
            }
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Malformed(format!(
                    "value {v} at {i} is not a nonnegative number"
                )));
            }
        }
        entries.retain(|e| e.1 != 0.0);
        Ok(Self { len, entries })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    /// Element-wise sum.
    pub fn merge(&self, other: &PrivatizedCounts) -> Result<PrivatizedCounts> {
        if self.len != other.len {
            return Err(Error::Shape(format!(
                "privatized lengths {} and {}",
                self.len, other.len
            )));
        }
        let (a, b) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                out.push(a[i]);
                i += 1;
            } else if i == a.len() || b[j].0 < a[i].0 {
                out.push(b[j]);
                j += 1;
            } else {
                out.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
        Ok(PrivatizedCounts {
            len: self.len,
            entries: out,
        })
    }

    pub fn into_noisy_counts(self, classes: usize, m: usize) -> Result<NoisyCounts> {
        if classes * m != self.len {
            return Err(Error::Shape(format!("{} entries for {classes} x {m} counts", self.len)));
        }
        NoisyCounts::from_flat(classes, m, self.to_dense())
    }

    /// `varint(len) varint(nnz)` then per entry `varint(index gap) f64-LE`.
    /// The first gap is the index itself.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 12 * self.entries.len());
        put_varint(&mut out, self.len as u64);
        put_varint(&mut out, self.entries.len() as u64);
        let mut prev = 0;
        for &(i, v) in &self.entries {
            put_varint(&mut out, (i - prev) as u64);
            out.extend_from_slice(&v.to_le_bytes());
            prev = i;
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let len = usize::try_from(r.varint("length")?).map_err(|_| Error::Malformed("length overflow".into()))?;
        let nnz = r.varint("entry count")? as usize;
        if nnz > len || nnz > r.remaining() / 9 {
            return Err(Error::Malformed(format!("{nnz} entries cannot fit")));
        }
        let mut entries = Vec::with_capacity(nnz);
        let mut idx = 0usize;
        for k in 0..nnz {
            let gap = r.varint("index gap")? as usize;
            if k > 0 && gap == 0 {
                return Err(Error::Malformed("indices not strictly increasing".into()));
            }
            idx = idx
                .checked_add(gap)
                .filter(|&i| i < len)
                .ok_or_else(|| Error::Malformed("index out of range".into()))?;
            let v = r.f64_le("value")?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Malformed(format!("stored value {v} is not positive")));
            }
            entries.push((idx, v));
        }
        if !r.is_empty() {
            return Err(Error::Malformed("trailing bytes".into()));
        }
        Ok(Self { len, entries })
    }
}
