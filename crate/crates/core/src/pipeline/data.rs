//! Manifest and matrix file I/O.
//!
//! A manifest is a CSV table with columns `subject_id,path,label`; relative
//! paths resolve against the manifest's directory. Matrix files hold one row
//! per line, delimited by whitespace or commas. `nan`, `na` and empty fields
//! mark missing values.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub atlas_dim: usize,
    pub class_count: usize,
}

/// Manifest plus the raw matrices, in manifest order. Missing values are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub matrices: Vec<DMatrix<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.manifest.entries.iter().map(|e| e.label).collect()
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.manifest.entries.iter().map(|e| e.subject_id.clone()).collect()
    }
}

fn parse_field(tok: &str) -> Option<f64> {
    let t = tok.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") || t.eq_ignore_ascii_case("na") {
        return Some(f64::NAN);
    }
    t.parse().ok()
}

/// Parses a delimited numeric table. Rows must have equal length.
pub fn parse_matrix(text: &str, path: &Path) -> Result<DMatrix<f64>, PipelineError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = if line.contains(',') { line.split(',').collect() } else { line.split_whitespace().collect() };
        let mut row = Vec::with_capacity(toks.len());
        for t in toks {
            row.push(parse_field(t).ok_or_else(|| PipelineError::Parse {
                path: path.to_path_buf(),
                line: ln + 1,
                msg: format!("not a number: '{}'", t.trim()),
            })?);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(PipelineError::Parse {
                    path: path.to_path_buf(),
                    line: ln + 1,
                    msg: format!("row has {} fields, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    let (r, c) = (rows.len(), rows.first().map_or(0, Vec::len));
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|_| PipelineError::MissingFile(path.to_path_buf()))?;
    parse_matrix(&text, path)
}

/// Space-delimited, shortest round-trip representation of each entry.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{}", m[(i, j)]);
        }
        s.push('\n');
    }
    s
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<(), PipelineError> {
    std::fs::write(path, format_matrix(m)).map_err(|e| PipelineError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|_| PipelineError::MissingFile(path.to_path_buf()))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<ManifestEntry>().enumerate() {
        let entry = rec.map_err(|e| PipelineError::Parse { path: path.to_path_buf(), line: i + 2, msg: e.to_string() })?;
        out.push(entry);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::Csv(path.to_path_buf(), e.to_string()))?;
    for e in entries {
        w.serialize(e).map_err(|e| PipelineError::Csv(path.to_path_buf(), e.to_string()))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Loads a manifest and every matrix it references.
///
/// The atlas dimension is taken from the first matrix; subject ids must be
/// unique and labels must cover `0..C` without gaps.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset, PipelineError> {
    let entries = read_manifest(manifest_path)?;
    if entries.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut seen = BTreeSet::new();
    let mut matrices = Vec::with_capacity(entries.len());
    let mut atlas_dim = 0;
    for e in &entries {
        if !seen.insert(e.subject_id.clone()) {
            return Err(PipelineError::DuplicateSubject(e.subject_id.clone()));
        }
        let p = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
        let m = read_matrix(&p)?;
        if matrices.is_empty() {
            atlas_dim = m.nrows();
        }
        if m.nrows() != atlas_dim || m.ncols() != atlas_dim || atlas_dim == 0 {
            return Err(PipelineError::DimensionMismatch {
                subject_id: e.subject_id.clone(),
                rows: m.nrows(),
                cols: m.ncols(),
                expected: atlas_dim,
            });
        }
        matrices.push(m);
    }
    let labels: BTreeSet<usize> = entries.iter().map(|e| e.label).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    if labels.len() != class_count {
        let missing = (0..class_count).find(|c| !labels.contains(c)).unwrap_or(0);
        return Err(PipelineError::NonContiguousLabels(missing));
    }
    Ok(Dataset { manifest: DatasetManifest { entries, atlas_dim, class_count }, matrices })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_subject(dir: &Path, name: &str, m: &DMatrix<f64>) -> ManifestEntry {
        let p = dir.join(format!("{name}.txt"));
        write_matrix(&p, m).unwrap();
        ManifestEntry { subject_id: name.into(), path: PathBuf::from(format!("{name}.txt")), label: 0 }
    }

    #[test]
    fn empty_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "subject_id,path,label\n").unwrap();
        assert!(matches!(load_dataset(&p), Err(PipelineError::EmptyDataset)));
    }

    #[test]
    fn loads_two_subjects() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.1 * (i + j) as f64 });
        let mut a = write_subject(dir.path(), "a", &m);
        let b = write_subject(dir.path(), "b", &m);
        a.label = 1;
        let p = dir.path().join("m.csv");
        write_manifest(&p, &[a, b]).unwrap();
        let ds = load_dataset(&p).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.manifest.atlas_dim, 4);
        assert_eq!(ds.manifest.class_count, 2);
        assert_eq!(ds.matrices[0], m);
    }

    #[test]
    fn wrong_shape_names_the_subject() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_subject(dir.path(), "a", &DMatrix::identity(4, 4));
        let b = write_subject(dir.path(), "bad", &DMatrix::zeros(3, 4));
        let p = dir.path().join("m.csv");
        write_manifest(&p, &[a, b]).unwrap();
        match load_dataset(&p) {
            Err(PipelineError::DimensionMismatch { subject_id, .. }) => assert_eq!(subject_id, "bad"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_values_and_parse_errors() {
        let m = parse_matrix("1, nan, 2\n3,,4\n", Path::new("x")).unwrap();
        assert!(m[(0, 1)].is_nan() && m[(1, 1)].is_nan());
        assert_eq!(m[(1, 2)], 4.0);
        match parse_matrix("1 2\n3 x\n", Path::new("x")) {
            Err(PipelineError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read_matrix(Path::new("/nonexistent/file")), Err(PipelineError::MissingFile(_))));
    }

    #[test]
    fn matrix_text_round_trip() {
        let m = DMatrix::from_fn(3, 3, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0));
        assert_eq!(parse_matrix(&format_matrix(&m), Path::new("x")).unwrap(), m);
    }
}
