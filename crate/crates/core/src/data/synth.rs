use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabelTable};
use crate::error::{Error, Result};
use crate::rng::{stream, RngState};

fn default_class_sep() -> f64 {
    2.0
}

/// Parameters of the Gaussian-clusters-on-hypercube-vertices generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub clusters_per_class: usize,
    #[serde(default = "default_class_sep")]
    pub class_sep: f64,
    #[serde(default)]
    pub seed: u64,
    /// Leading dimensions that carry the cluster centers; the rest are pure
    /// unit-variance noise. `None` means all `d` dimensions.
    #[serde(default)]
    pub informative: Option<usize>,
    /// Keep the top-`b` coordinates of every row as ones.
    #[serde(default)]
    pub binarize: Option<usize>,
}

impl SynthSpec {
    pub fn new(n: usize, d: usize, classes: usize, clusters_per_class: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            classes,
            clusters_per_class,
            class_sep: default_class_sep(),
            seed,
            informative: None,
            binarize: None,
        }
    }

    pub fn informative_dims(&self) -> usize {
        self.informative.unwrap_or(self.d)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.classes == 0 || self.clusters_per_class == 0 {
            return Err(Error::Param(
                "n, d, classes and clusters_per_class must be positive".into(),
            ));
        }
        if !(self.class_sep > 0.0 && self.class_sep.is_finite()) {
            return Err(Error::Param("class_sep must be positive".into()));
        }
        let k = self.informative_dims();
        if k == 0 || k > self.d {
            return Err(Error::Param(format!(
                "informative = {k} must lie in [1, d = {}]",
                self.d
            )));
        }
        let centers = self.classes * self.clusters_per_class;
        if k < 64 && centers as u64 > (1u64 << k) {
            return Err(Error::Param(format!(
                "{centers} cluster centers do not fit on the {k}-dimensional hypercube"
            )));
        }
        if let Some(b) = self.binarize {
            if b < 1 || b >= self.d {
                return Err(Error::Param(format!("binarize b = {b} must lie in [1, d)")));
            }
        }
        Ok(())
    }
}

/// Balanced multi-class data whose classes are unions of Gaussian clusters.
///
/// `classes * clusters_per_class` centers sit on distinct random vertices of
/// the hypercube `{-class_sep, +class_sep}^k` spanned by the informative
/// dimensions. Cluster `j` belongs to class `j % classes`. Row `i` has class
/// `i % classes` before the final row shuffle, so class sizes differ by at
/// most one. There is no label noise.
pub fn make_classification(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = RngState::with_stream(spec.seed, stream::SYNTH);
    let k = spec.informative_dims();
    let n_centers = spec.classes * spec.clusters_per_class;

    let mut seen: HashSet<Vec<bool>> = HashSet::with_capacity(n_centers);
    let mut centers = Vec::with_capacity(n_centers);
    while centers.len() < n_centers {
        let vertex: Vec<bool> = (0..k).map(|_| rng.next_u64() & 1 == 1).collect();
        if seen.insert(vertex.clone()) {
            centers.push(vertex);
        }
    }

    let mut order: Vec<usize> = (0..spec.n).collect();
    rng.shuffle(&mut order);

    let mut features = vec![0.0; spec.n * spec.d];
    let mut labels = vec![0u32; spec.n];
    for (slot, &i) in order.iter().enumerate() {
        let class = i % spec.classes;
        let cluster = class + spec.classes * ((i / spec.classes) % spec.clusters_per_class);
        let row = &mut features[slot * spec.d..(slot + 1) * spec.d];
        for (j, v) in row.iter_mut().enumerate() {
            let mean = match centers[cluster].get(j) {
                Some(true) => spec.class_sep,
                Some(false) => -spec.class_sep,
                None => 0.0,
            };
            *v = mean + rng.standard_normal();
        }
        labels[slot] = class as u32;
    }

    let provenance = format!(
        "synthetic n={} d={} classes={} clusters={} sep={} informative={} seed={}",
        spec.n, spec.d, spec.classes, spec.clusters_per_class, spec.class_sep, k, spec.seed
    );
    let ds = Dataset::new(spec.d, features, labels, LabelTable::numbered(spec.classes), provenance)?;
    match spec.binarize {
        Some(b) => binarize(&ds, b),
        None => Ok(ds),
    }
}

/// Per row, the `b` largest coordinates become 1 and the rest 0; ties go to
/// the smaller coordinate index.
pub fn binarize(ds: &Dataset, b: usize) -> Result<Dataset> {
    let d = ds.d();
    if b < 1 || b >= d {
        return Err(Error::Param(format!("b = {b} must lie in [1, d = {d})")));
    }
    let mut features = vec![0.0; ds.n() * d];
    let mut order: Vec<usize> = Vec::with_capacity(d);
    for (i, row) in ds.rows().enumerate() {
        order.clear();
        order.extend(0..d);
        order.select_nth_unstable_by(b - 1, |&p, &q| row[q].partial_cmp(&row[p]).unwrap().then(p.cmp(&q)));
        for &j in &order[..b] {
            features[i * d + j] = 1.0;
        }
    }
    Dataset::new(
        d,
        features,
        ds.labels().to_vec(),
        ds.label_table().clone(),
        format!("{} binarized b={b}", ds.provenance()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let spec = SynthSpec::new(200, 10, 3, 2, 9);
        let a = make_classification(&spec).unwrap();
        let b = make_classification(&spec).unwrap();
        assert_eq!(a, b);
        let c = make_classification(&SynthSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.features(), c.features());
    }

    #[test]
    fn classes_balanced_within_one() {
        let ds = make_classification(&SynthSpec::new(1003, 8, 5, 3, 1)).unwrap();
        let sizes = ds.class_sizes();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(hi - lo <= 1, "{sizes:?}");
        assert_eq!(sizes.iter().sum::<usize>(), 1003);
    }

    #[test]
    fn infeasible_center_count() {
        let mut spec = SynthSpec::new(100, 2, 5, 1, 0);
        assert!(make_classification(&spec).is_err());
        spec.d = 3;
        assert!(make_classification(&spec).is_ok());
    }

    #[test]
    fn binarize_strictly_increasing_row() {
        let row: Vec<f64> = (0..6).map(f64::from).collect();
        let ds = Dataset::from_rows(&[row], &["x"], "").unwrap();
        let b = binarize(&ds, 5).unwrap();
        assert_eq!(b.row(0), &[0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn binarize_matches_sort_oracle() {
        let ds = make_classification(&SynthSpec::new(50, 12, 2, 1, 4)).unwrap();
        let b = binarize(&ds, 4).unwrap();
        for i in 0..ds.n() {
            let row = ds.row(i);
            let mut idx: Vec<usize> = (0..12).collect();
            idx.sort_by(|&p, &q| row[q].partial_cmp(&row[p]).unwrap().then(p.cmp(&q)));
            let mut expect = vec![0.0; 12];
            for &j in &idx[..4] {
                expect[j] = 1.0;
            }
            assert_eq!(b.row(i), expect.as_slice());
        }
    }

    #[test]
    fn binarize_rejects_bad_b() {
        let ds = make_classification(&SynthSpec::new(10, 4, 2, 1, 0)).unwrap();
        assert!(binarize(&ds, 0).is_err());
        assert!(binarize(&ds, 4).is_err());
    }
}
