//! Attention-derived explanation masks.
//!
//! A subject's saliency matrix is the elementwise maximum of its attention
//! coefficients over heads and layers. Class masks average those matrices
//! over the subjects of a class; masks can then be cut to their `L` largest
//! entries, summarized per functional network and written out as node/edge
//! files for a brain viewer.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::gnn::AttentionSnapshot;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("no samples in scope")]
    EmptyScope,
    #[error("ROI {0} has no network assignment")]
    UnmappedRoi(usize),
    #[error("coordinate table has {got} rows, expected {expected}")]
    CoordDimensionMismatch { got: usize, expected: usize },
    #[error("shape mismatch: {got}×{got_cols} vs {expected}×{expected}")]
    ShapeMismatch { got: usize, got_cols: usize, expected: usize },
    #[error("unknown network name '{0}'")]
    UnknownNetwork(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ExplainError>;

/// The nine functional networks used to group ROIs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Network {
    DefaultMode,
    Somatomotor,
    Visual,
    Salience,
    DorsalAttention,
    Frontoparietal,
    Limbic,
    Cerebellar,
    BasalGanglia,
}

impl Network {
    pub const ALL: [Network; 9] = [
        Network::DefaultMode,
        Network::Somatomotor,
        Network::Visual,
        Network::Salience,
        Network::DorsalAttention,
        Network::Frontoparietal,
        Network::Limbic,
        Network::Cerebellar,
        Network::BasalGanglia,
    ];

    pub fn abbreviation(self) -> &'static str {
        match self {
            Network::DefaultMode => "DMN",
            Network::Somatomotor => "SMN",
            Network::Visual => "VN",
            Network::Salience => "SN",
            Network::DorsalAttention => "DAN",
            Network::Frontoparietal => "FPN",
            Network::Limbic => "LN",
            Network::Cerebellar => "CN",
            Network::BasalGanglia => "BLN",
        }
    }

    /// Position in [`Network::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Network {
    type Err = ExplainError;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Network::ALL
            .into_iter()
            .find(|n| n.abbreviation().eq_ignore_ascii_case(t))
            .ok_or_else(|| ExplainError::UnknownNetwork(t.to_string()))
    }
}

impl std::fmt::Display for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.abbreviation())
    }
}

/// ROI names and their network assignment. Entries may be missing, which is
/// reported when the map is used.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMap {
    pub roi_names: Vec<String>,
    pub networks: Vec<Option<Network>>,
}

impl NetworkMap {
    pub fn new(roi_names: Vec<String>, networks: Vec<Option<Network>>) -> Self {
        Self { roi_names, networks }
    }

    /// Assigns ROIs to networks in contiguous, near-equal runs.
    pub fn contiguous(d: usize) -> Self {
        let networks = (0..d).map(|i| Some(Network::ALL[i * 9 / d.max(1)])).collect();
        Self { roi_names: (0..d).map(|i| format!("roi{i}")).collect(), networks }
    }

    pub fn len(&self) -> usize {
        self.networks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.networks.is_empty()
    }

    pub fn network(&self, roi: usize) -> Result<Network> {
        self.networks.get(roi).copied().flatten().ok_or(ExplainError::UnmappedRoi(roi))
    }

    /// Parses `roi_index,roi_name,network_name` rows. A header row is allowed.
    pub fn parse(text: &str, d: usize) -> Result<Self> {
        let mut names: Vec<String> = (0..d).map(|i| format!("roi{i}")).collect();
        let mut networks = vec![None; d];
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split([',', '\t']).map(str::trim).collect();
            if fields.len() < 3 {
                return Err(ExplainError::Parse { line: ln + 1, msg: "expected 3 fields".into() });
            }
            let Ok(idx) = fields[0].parse::<usize>() else {
                if ln == 0 {
                    continue;
                }
                return Err(ExplainError::Parse { line: ln + 1, msg: format!("bad ROI index '{}'", fields[0]) });
            };
            if idx >= d {
                return Err(ExplainError::Parse { line: ln + 1, msg: format!("ROI index {idx} out of range") });
            }
            names[idx] = fields[1].to_string();
            networks[idx] = Some(fields[2].parse()?);
        }
        Ok(Self { roi_names: names, networks })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("roi_index,roi_name,network\n");
        for (i, (name, net)) in self.roi_names.iter().zip(&self.networks).enumerate() {
            let net = net.map(|n| n.abbreviation()).unwrap_or("");
            let _ = writeln!(s, "{i},{name},{net}");
        }
        s
    }

    fn check_covers(&self, d: usize) -> Result<()> {
        (0..d).try_for_each(|i| self.network(i).map(|_| ()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskScope {
    Class(usize),
    Subject(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationMask {
    pub values: DMatrix<f64>,
    pub scope: MaskScope,
    pub top_l: Option<usize>,
}

impl ExplanationMask {
    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn support(&self) -> BTreeSet<(usize, usize)> {
        let d = self.values.nrows();
        let mut s = BTreeSet::new();
        for i in 0..d {
            for j in 0..self.values.ncols() {
                if self.values[(i, j)] != 0.0 {
                    s.insert((i, j));
                }
            }
        }
        s
    }
}

/// Elementwise maximum over a set of equally sized matrices.
pub fn elementwise_max(mats: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = mats.first().ok_or(ExplainError::EmptyScope)?;
    let d = first.nrows();
    let mut out = first.clone();
    for m in &mats[1..] {
        if m.shape() != first.shape() {
            return Err(ExplainError::ShapeMismatch { got: m.nrows(), got_cols: m.ncols(), expected: d });
        }
        out.zip_apply(m, |a, b| *a = a.max(b));
    }
    Ok(out)
}

/// Maximum attention over every head and layer of one sample, as a `d × d`
/// matrix with zeros off the edge set.
pub fn max_over_heads(attention: &AttentionSnapshot) -> Result<DMatrix<f64>> {
    let mut mats = Vec::with_capacity(attention.layers.len() * attention.heads);
    for l in 0..attention.layers.len() {
        if attention.layers[l].cols() != attention.heads || attention.layers[l].rows() != attention.dst.len() {
            return Err(ExplainError::ShapeMismatch {
                got: attention.layers[l].rows(),
                got_cols: attention.layers[l].cols(),
                expected: attention.dst.len(),
            });
        }
        for s in 0..attention.heads {
            mats.push(attention.dense(l, s));
        }
    }
    elementwise_max(&mats)
}

/// Mean of the per-sample saliency matrices of one class.
pub fn class_mask(class: usize, saliency: &[DMatrix<f64>]) -> Result<ExplanationMask> {
    let first = saliency.first().ok_or(ExplainError::EmptyScope)?;
    let mut sum = DMatrix::zeros(first.nrows(), first.ncols());
    for m in saliency {
        if m.shape() != first.shape() {
            return Err(ExplainError::ShapeMismatch { got: m.nrows(), got_cols: m.ncols(), expected: first.nrows() });
        }
        sum += m;
    }
    Ok(ExplanationMask { values: sum / saliency.len() as f64, scope: MaskScope::Class(class), top_l: None })
}

pub fn individual_mask(subject_id: &str, attention: &AttentionSnapshot) -> Result<ExplanationMask> {
    Ok(ExplanationMask {
        values: max_over_heads(attention)?,
        scope: MaskScope::Subject(subject_id.to_string()),
        top_l: None,
    })
}

/// Keeps the `l` largest entries and zeroes the rest. Equal values are
/// ranked by (row, column) order, so exactly `min(l, nonzeros)` entries
/// survive.
pub fn soft_threshold(mask: &ExplanationMask, l: usize) -> ExplanationMask {
    let m = &mask.values;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if m[(i, j)] != 0.0 {
                entries.push((i, j, m[(i, j)]));
            }
        }
    }
    // Stable sort keeps row-major order among ties.
    entries.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut values = DMatrix::zeros(m.nrows(), m.ncols());
    for &(i, j, v) in entries.iter().take(l) {
        values[(i, j)] = v;
    }
    ExplanationMask { values, scope: mask.scope.clone(), top_l: Some(l) }
}

/// Elementwise `max(M, Mᵀ)`.
pub fn symmetrize_max(m: &DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    m.zip_map(&t, f64::max)
}

/// `9 × 9` totals of mask weight between network pairs.
pub fn network_summary(mask: &DMatrix<f64>, netmap: &NetworkMap) -> Result<DMatrix<f64>> {
    let d = mask.nrows();
    netmap.check_covers(d)?;
    let mut out = DMatrix::zeros(9, 9);
    for i in 0..d {
        let p = netmap.network(i)?.index();
        for j in 0..mask.ncols() {
            let q = netmap.network(j)?.index();
            out[(p, q)] += mask[(i, j)];
        }
    }
    Ok(out)
}

/// Space-delimited `d × d` matrix, one row per line.
pub fn format_edge_file(mask: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..mask.nrows() {
        let row: Vec<String> = (0..mask.ncols()).map(|j| format!("{}", mask[(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_edge_file(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| ExplainError::Parse { line: ln + 1, msg: e.to_string() }))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let d = rows.len();
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(ExplainError::ShapeMismatch { got: d, got_cols: r.len(), expected: d });
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

/// Node file rows `x y z color size label`: color is the 1-based network
/// index, size the ROI's summed mask weight.
pub fn format_node_file(mask: &DMatrix<f64>, netmap: &NetworkMap, coords: Option<&[[f64; 3]]>) -> Result<String> {
    let d = mask.nrows();
    if let Some(c) = coords {
        if c.len() != d {
            return Err(ExplainError::CoordDimensionMismatch { got: c.len(), expected: d });
        }
    }
    netmap.check_covers(d)?;
    let mut s = String::new();
    for i in 0..d {
        let [x, y, z] = coords.map(|c| c[i]).unwrap_or([0.0; 3]);
        let color = netmap.network(i)?.index() + 1;
        let size: f64 = mask.row(i).sum();
        let label = netmap.roi_names.get(i).cloned().unwrap_or_else(|| format!("roi{i}"));
        let _ = writeln!(s, "{x} {y} {z} {color} {size} {label}");
    }
    Ok(s)
}

/// Parses `roi_index,x,y,z` rows (header allowed) into a `d`-row table.
pub fn parse_coordinates(text: &str, d: usize) -> Result<Vec<[f64; 3]>> {
    let mut out = vec![None; d];
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split([',', '\t', ' ']).filter(|t| !t.is_empty()).collect();
        let parsed: std::result::Result<Vec<f64>, _> = f.iter().map(|t| t.parse::<f64>()).collect();
        let Ok(v) = parsed else {
            if ln == 0 {
                continue;
            }
            return Err(ExplainError::Parse { line: ln + 1, msg: "non-numeric field".into() });
        };
        if v.len() != 4 || v[0] < 0.0 || v[0].fract() != 0.0 {
            return Err(ExplainError::Parse { line: ln + 1, msg: "expected roi_index,x,y,z".into() });
        }
        let idx = v[0] as usize;
        if idx >= d {
            return Err(ExplainError::CoordDimensionMismatch { got: idx + 1, expected: d });
        }
        out[idx] = Some([v[1], v[2], v[3]]);
    }
    let got = out.iter().filter(|c| c.is_some()).count();
    if got != d {
        return Err(ExplainError::CoordDimensionMismatch { got, expected: d });
    }
    Ok(out.into_iter().map(|c| c.unwrap_or_default()).collect())
}

/// Writes `<stem>.edge` and `<stem>.node` under `dir`.
pub fn export_viewer_files(
    mask: &DMatrix<f64>,
    netmap: &NetworkMap,
    coords: Option<&[[f64; 3]]>,
    dir: &Path,
    stem: &str,
) -> Result<()> {
    let nodes = format_node_file(mask, netmap, coords)?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.edge")), format_edge_file(mask))?;
    std::fs::write(dir.join(format!("{stem}.node")), nodes)?;
    Ok(())
}

/// `|A ∩ B| / |A ∪ B|`; two empty sets score 1.
pub fn jaccard(a: &BTreeSet<(usize, usize)>, b: &BTreeSet<(usize, usize)>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}
