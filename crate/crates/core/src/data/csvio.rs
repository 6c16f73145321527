use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::data::{Dataset, LabelTable};
use crate::error::{Error, Result};

/// Reads a numeric CSV with one label column.
///
/// Feature cells go through `str::parse::<f64>`, which rounds the decimal
/// text to the nearest double, so writing with [`write_csv`] and reading back
/// reproduces every value bit for bit. Label cells are kept as strings and
/// mapped through the sorted [`LabelTable`].
pub fn load_csv(path: impl AsRef<Path>, label_column: usize, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut width = None;
    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = line + 1 + usize::from(has_header);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Malformed(format!(
                    "{}: row {row_no} has {} fields, expected {w}",
                    path.display(),
                    record.len()
                )))
            }
            _ => {}
        }
        if label_column >= record.len() {
            return Err(Error::Malformed(format!(
                "label column {label_column} out of range for {} fields",
                record.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_column {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::Malformed(format!(
                    "{}: row {row_no} column {j}: `{cell}` is not a number",
                    path.display()
                ))
            })?;
            features.push(v);
        }
    }
    let width = match width {
        Some(w) if !raw_labels.is_empty() => w,
        _ => return Err(Error::EmptyDataset),
    };
    if width < 2 {
        return Err(Error::Malformed("need at least one feature column".into()));
    }
    let table = LabelTable::new(raw_labels.iter().cloned());
    let labels = raw_labels
        .iter()
        .map(|l| table.index_of(l).map(|i| i as u32))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(width - 1, features, labels, table, path.display().to_string())
}

/// Writes features followed by the external label as the last column.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, header: bool) -> Result<()> {
    let path = path.as_ref();
    let mut out = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut text = String::new();
    if header {
        let cols: Vec<String> = (0..ds.d()).map(|j| format!("x{j}")).collect();
        text.push_str(&cols.join(","));
        text.push_str(",label\n");
    }
    for (i, row) in ds.rows().enumerate() {
        for v in row {
            text.push_str(&format!("{v},"));
        }
        text.push_str(ds.label_table().label(ds.label(i)));
        text.push('\n');
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::file(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_classification, SynthSpec};

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn two_row_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "1.5,2,cat\n-0.25,1e3,dog\n");
        let ds = load_csv(&p, 2, false).unwrap();
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.features(), &[1.5, 2.0, -0.25, 1000.0]);
        assert_eq!(ds.labels(), &[0, 1]);
        assert_eq!(ds.label_table().labels(), &["cat", "dog"]);
    }

    #[test]
    fn header_toggle() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(&dir, "a.csv", "y,f1,f2\nb,1,2\na,3,4\n");
        let b = write(&dir, "b.csv", "b,1,2\na,3,4\n");
        let x = load_csv(&a, 0, true).unwrap();
        let y = load_csv(&b, 0, false).unwrap();
        assert_eq!(x.features(), y.features());
        assert_eq!(x.labels(), y.labels());
    }

    #[test]
    fn generated_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_classification(&SynthSpec::new(60, 5, 3, 2, 7)).unwrap();
        let p = dir.path().join("g.csv");
        write_csv(&ds, &p, true).unwrap();
        let back = load_csv(&p, 5, true).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.label_table(), ds.label_table());
    }

    #[test]
    fn ragged_and_non_numeric_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.csv", "1,2,a\n1,b\n");
        assert!(matches!(load_csv(&p, 2, false), Err(Error::Malformed(_))));
        let p = write(&dir, "n.csv", "1,zz,a\n");
        assert!(matches!(load_csv(&p, 2, false), Err(Error::Malformed(_))));
        let p = write(&dir, "e.csv", "");
        assert!(matches!(load_csv(&p, 0, false), Err(Error::EmptyDataset)));
    }
}
