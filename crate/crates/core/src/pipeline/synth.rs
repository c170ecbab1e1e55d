//! Synthetic connectome cohorts with a planted class signal.
//!
//! Every subject shares a random base covariance. Subjects of class `c` add
//! `c · signal_strength` on a fixed block of ROIs (the nodes of two
//! functional networks) plus a subject-specific Wishart noise term, and the
//! result is rescaled to a correlation matrix. The within-block ROI pairs
//! form the ground-truth edge set.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::data::{write_manifest, write_matrix, ManifestEntry};
use super::PipelineError;
use crate::explain::{Network, NetworkMap};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub d: usize,
    pub per_class: Vec<usize>,
    pub signal_strength: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { d: 32, per_class: vec![20; 4], signal_strength: 0.5, noise: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub subject_ids: Vec<String>,
    pub labels: Vec<usize>,
    /// Correlation matrices with unit diagonal.
    pub matrices: Vec<DMatrix<f64>>,
    /// ROIs carrying the class signal.
    pub block: Vec<usize>,
    /// Unordered within-block pairs `(i, j)` with `i < j`.
    pub planted_edges: Vec<(usize, usize)>,
    pub netmap: NetworkMap,
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn to_correlation(s: &DMatrix<f64>) -> DMatrix<f64> {
    let d = s.nrows();
    let inv: Vec<f64> = (0..d).map(|i| 1.0 / s[(i, i)].sqrt()).collect();
    let mut c = DMatrix::from_fn(d, d, |i, j| s[(i, j)] * inv[i] * inv[j]);
    for i in 0..d {
        c[(i, i)] = 1.0;
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticCohort, PipelineError> {
    if cfg.d < 8 {
        return Err(PipelineError::InvalidCounts(format!("d must be at least 8, got {}", cfg.d)));
    }
    if cfg.per_class.is_empty() || cfg.per_class.contains(&0) {
        return Err(PipelineError::InvalidCounts("every class needs at least one subject".into()));
    }
    if !(cfg.signal_strength >= 0.0 && cfg.noise >= 0.0) || !cfg.signal_strength.is_finite() || !cfg.noise.is_finite() {
        return Err(PipelineError::InvalidCounts("signal_strength and noise must be finite and non-negative".into()));
    }
    let d = cfg.d;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let netmap = NetworkMap::contiguous(d);
    let block: Vec<usize> = (0..d)
        .filter(|&i| matches!(netmap.networks[i], Some(Network::Somatomotor | Network::Cerebellar)))
        .collect();
    let indicator = DMatrix::from_fn(d, 1, |i, _| if block.contains(&i) { 1.0 } else { 0.0 });
    let signal = &indicator * indicator.transpose();

    let g = gaussian(d, d, &mut rng);
    let base = &g * g.transpose() / d as f64 + DMatrix::identity(d, d);

    let mut subject_ids = Vec::new();
    let mut labels = Vec::new();
    let mut matrices = Vec::new();
    for (class, &count) in cfg.per_class.iter().enumerate() {
        for _ in 0..count {
            let z = gaussian(d, d, &mut rng);
            let noise = &z * z.transpose() * (cfg.noise / d as f64);
            let sigma = &base + &signal * (cfg.signal_strength * class as f64) + noise;
            subject_ids.push(format!("sub{:04}", subject_ids.len()));
            labels.push(class);
            matrices.push(to_correlation(&sigma));
        }
    }
    let planted_edges =
        block.iter().enumerate().flat_map(|(a, &i)| block[a + 1..].iter().map(move |&j| (i, j))).collect();
    Ok(SyntheticCohort { subject_ids, labels, matrices, block, planted_edges, netmap })
}

impl SyntheticCohort {
    /// Writes `manifest.csv`, `matrices/<id>.txt`, `planted_edges.csv` and
    /// `network_map.csv` under `dir`. Returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, PipelineError> {
        let mdir = dir.join("matrices");
        std::fs::create_dir_all(&mdir).map_err(|e| PipelineError::io(&mdir, e))?;
        let mut entries = Vec::with_capacity(self.matrices.len());
        for ((id, &label), m) in self.subject_ids.iter().zip(&self.labels).zip(&self.matrices) {
            let rel = PathBuf::from("matrices").join(format!("{id}.txt"));
            write_matrix(&dir.join(&rel), m)?;
            entries.push(ManifestEntry { subject_id: id.clone(), path: rel, label });
        }
        let manifest = dir.join("manifest.csv");
        write_manifest(&manifest, &entries)?;
        let mut edges = String::from("i,j\n");
        for (i, j) in &self.planted_edges {
            edges.push_str(&format!("{i},{j}\n"));
        }
        let ep = dir.join("planted_edges.csv");
        std::fs::write(&ep, edges).map_err(|e| PipelineError::io(&ep, e))?;
        let np = dir.join("network_map.csv");
        std::fs::write(&np, self.netmap.to_csv()).map_err(|e| PipelineError::io(&np, e))?;
        Ok(manifest)
    }
}

/// Reads a `planted_edges.csv` written by [`SyntheticCohort::write`].
pub fn read_planted_edges(path: &Path) -> Result<Vec<(usize, usize)>, PipelineError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|_| PipelineError::MissingFile(path.to_path_buf()))?;
    let mut out = Vec::new();
    for (k, rec) in rdr.deserialize::<(usize, usize)>().enumerate() {
        out.push(rec.map_err(|e| PipelineError::Parse { path: path.to_path_buf(), line: k + 2, msg: e.to_string() })?);
    }
    Ok(out)
}
