//! Versioned binary model container.
//!
//! ```text
//! offset  field
//! 0       magic          8 bytes  "FLYNNMDL"
//! 8       version        u16 LE   (currently 1)
//! 10      hash kind      u8       0 = FlyHash, 1 = SimHash
//! 11      counts mode    u8       0 = integer, 1 = real
//! 12      m              u64 LE
//! 20      d              u64 LE
//! 28      s              u64 LE   (0 for SimHash)
//! 36      rho            u64 LE   (0 for SimHash)
//! 44      seed           u64 LE
//! 52      classes        u32 LE
//! 56      body length    u64 LE
//! 64      gamma          u16 LE length + UTF-8 decimal text
//! ..      body           label table: per class, varint length + UTF-8
//!                        integer mode: classes*m varint counts, class-major
//!                        real mode: varint nnz, then nnz pairs of
//!                          (varint gap from previous index, f64 LE)
//! end-4   crc32          u32 LE, IEEE CRC-32 of every preceding byte
//! ```
//!
//! All integers are little-endian. The lifting matrix itself is never stored;
//! it is rebuilt from `(seed, m, d, s)`.

use crate::classifier::{ClassCounts, FilterCounts, FlyNNModel, Gamma, NoisyCounts};
use crate::data::LabelTable;
use crate::error::{Error, Result};
use crate::hash::{HashParams, HashSpec};
use crate::varint::{put_varint, Reader};

pub const MAGIC: &[u8; 8] = b"FLYNNMDL";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_FIXED: usize = 64;

pub fn serialize(model: &FlyNNModel) -> Vec<u8> {
    let mut body = Vec::new();
    for label in model.labels().labels() {
        put_varint(&mut body, label.len() as u64);
        body.extend_from_slice(label.as_bytes());
    }
    let mode = match model.counts() {
        FilterCounts::Exact(c) => {
            for &v in c.as_flat() {
                put_varint(&mut body, u64::from(v));
            }
            0u8
        }
        FilterCounts::Noisy(c) => {
            let nz: Vec<(usize, f64)> = c
                .as_flat()
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect();
            put_varint(&mut body, nz.len() as u64);
            let mut prev = 0usize;
            for (i, v) in nz {
                put_varint(&mut body, (i - prev) as u64);
                body.extend_from_slice(&v.to_le_bytes());
                prev = i;
            }
            1u8
        }
    };

    let (kind, m, d, s, rho, seed) = match *model.spec() {
        HashSpec::Fly { d, params } => (0u8, params.m, d, params.s, params.rho, params.seed),
        HashSpec::Sim { d, m, seed } => (1u8, m, d, 0, 0, seed),
    };
    let gamma = model.gamma().text().as_bytes();

    let mut out = Vec::with_capacity(HEADER_FIXED + 2 + gamma.len() + body.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind);
    out.push(mode);
    for v in [m, d, s, rho] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&(model.num_classes() as u32).to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&(gamma.len() as u16).to_le_bytes());
    out.extend_from_slice(gamma);
    out.extend_from_slice(&body);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn deserialize(bytes: &[u8]) -> Result<FlyNNModel> {
    let mut r = Reader::new(bytes);
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Malformed("not a model file (bad magic)".into()));
    }
    let version = r.u16_le("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let kind = r.u8("hash kind")?;
    let mode = r.u8("counts mode")?;
    let m = r.u64_le("m")? as usize;
    let d = r.u64_le("d")? as usize;
    let s = r.u64_le("s")? as usize;
    let rho = r.u64_le("rho")? as usize;
    let seed = r.u64_le("seed")?;
    let classes = r.u32_le("classes")? as usize;
    let body_len = r.u64_le("body length")? as usize;
    let gamma_len = r.u16_le("gamma length")? as usize;
    let needed = HEADER_FIXED + 2 + gamma_len + body_len + 4;
    if bytes.len() < needed {
        return Err(Error::Truncated("model body"));
    }
    if bytes.len() > needed {
        return Err(Error::Malformed("trailing bytes after checksum".into()));
    }
    let stored = u32::from_le_bytes(bytes[needed - 4..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..needed - 4]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let gamma_text =
        std::str::from_utf8(r.take(gamma_len, "gamma")?).map_err(|_| Error::Malformed("gamma is not UTF-8".into()))?;
    let gamma = Gamma::parse(gamma_text)?;

    let spec = match kind {
        0 => HashSpec::Fly {
            d,
            params: HashParams::new(m, s, rho, seed),
        },
        1 => HashSpec::Sim { d, m, seed },
        k => return Err(Error::Malformed(format!("unknown hash kind {k}"))),
    };
    if let HashSpec::Fly { params, .. } = spec {
        params.validate(d)?;
    }
    // Integer mode spends at least one byte per cell.
    let cells = classes
        .checked_mul(m)
        .filter(|&c| c <= 1 << 34 && (mode != 0 || c <= body_len))
        .ok_or_else(|| Error::Malformed("implausible model shape".into()))?;

    let mut labels = Vec::with_capacity(classes);
    for _ in 0..classes {
        let len = r.varint("label length")? as usize;
        let raw = r.take(len, "label")?;
        labels.push(String::from_utf8(raw.to_vec()).map_err(|_| Error::Malformed("label is not UTF-8".into()))?);
    }
    let table = LabelTable::new(labels.iter().cloned());
    if table.labels() != labels.as_slice() {
        return Err(Error::Malformed("label table is not sorted and unique".into()));
    }

    let counts = match mode {
        0 => {
            let mut data = Vec::with_capacity(cells);
            for _ in 0..cells {
                let v = r.varint("count")?;
                data.push(u32::try_from(v).map_err(|_| Error::Malformed("count exceeds u32".into()))?);
            }
            FilterCounts::Exact(ClassCounts::from_flat(classes, m, data)?)
        }
        1 => {
            let nnz = r.varint("nonzero count")? as usize;
            let mut data = vec![0.0; cells];
            let mut idx = 0usize;
            for k in 0..nnz {
                let gap = r.varint("index gap")? as usize;
                if k > 0 && gap == 0 {
                    return Err(Error::Malformed("repeated index in real counts".into()));
                }
                idx = idx
                    .checked_add(gap)
                    .filter(|&i| i < cells)
                    .ok_or_else(|| Error::Malformed("real count index out of range".into()))?;
                data[idx] = r.f64_le("value")?;
            }
            FilterCounts::Noisy(NoisyCounts::from_flat(classes, m, data)?)
        }
        k => return Err(Error::Malformed(format!("unknown counts mode {k}"))),
    };
    if r.remaining() != 4 {
        return Err(Error::Malformed("body length disagrees with content".into()));
    }
    FlyNNModel::from_parts(spec, gamma, table, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train, train_sbfc};
    use crate::data::{make_classification, SynthSpec};
    use proptest::prelude::*;

    fn sample_model() -> FlyNNModel {
        let ds = make_classification(&SynthSpec::new(50, 6, 3, 1, 2)).unwrap();
        train(&ds, HashParams::new(64, 2, 5, 11), Gamma::parse("0.35").unwrap()).unwrap()
    }

    #[test]
    fn round_trip_exact() {
        let model = sample_model();
        let back = deserialize(&serialize(&model)).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.gamma().text(), "0.35");
    }

    #[test]
    fn round_trip_sbfc_and_noisy() {
        let ds = make_classification(&SynthSpec::new(20, 3, 2, 1, 2)).unwrap();
        let model = train_sbfc(&ds, 16, 4, Gamma::new(0.2).unwrap()).unwrap();
        assert_eq!(deserialize(&serialize(&model)).unwrap(), model);

        let mut data = vec![0.0; 32];
        data[3] = 2.75;
        data[31] = 0.125;
        let noisy = FlyNNModel::from_parts(
            *model.spec(),
            model.gamma().clone(),
            model.labels().clone(),
            FilterCounts::Noisy(NoisyCounts::from_flat(2, 16, data).unwrap()),
        )
        .unwrap();
        assert_eq!(deserialize(&serialize(&noisy)).unwrap(), noisy);
    }

    #[test]
    fn empty_class_model_is_valid() {
        let model = FlyNNModel::from_parts(
            HashSpec::Fly {
                d: 4,
                params: HashParams::new(10, 2, 3, 0),
            },
            Gamma::new(0.5).unwrap(),
            LabelTable::new(["a", "b"]),
            FilterCounts::Exact(ClassCounts::zeros(2, 10)),
        )
        .unwrap();
        let back = deserialize(&serialize(&model)).unwrap();
        assert!(back.counts().exact().unwrap().as_flat().iter().all(|&c| c == 0));
    }

    #[test]
    fn corrupt_body_byte_fails_checksum() {
        let mut bytes = serialize(&sample_model());
        let i = bytes.len() - 10;
        bytes[i] ^= 0x01;
        assert!(matches!(deserialize(&bytes), Err(Error::Checksum { .. })));
    }

    #[test]
    fn version_and_truncation() {
        let bytes = serialize(&sample_model());
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(matches!(deserialize(&v), Err(Error::Version { found: 9, .. })));
        assert!(matches!(
            deserialize(&bytes[..bytes.len() - 7]),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(deserialize(&bytes[..20]), Err(Error::Truncated(_))));
        assert!(deserialize(b"NOTAMODELFILE....").is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_counts_round_trip(counts in proptest::collection::vec(any::<u32>(), 24), seed in any::<u64>()) {
            let model = FlyNNModel::from_parts(
                HashSpec::Fly { d: 5, params: HashParams::new(12, 3, 4, seed) },
                Gamma::new(0.75).unwrap(),
                LabelTable::new(["x", "y"]),
                FilterCounts::Exact(ClassCounts::from_flat(2, 12, counts).unwrap()),
            ).unwrap();
            let bytes = serialize(&model);
            prop_assert_eq!(deserialize(&bytes).unwrap(), model);
        }
    }
}
