//! Connectome graphs and node centrality.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::spd::{self, SpdMatrix, SymMatrix};

/// Default sparsification quantile applied before degree/closeness.
pub const DEFAULT_SPARSIFY_QUANTILE: f64 = 0.9;

const WEIGHT_RANGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("edge weight {value} at ({row}, {col}) is outside [-1, 1]")]
    WeightOutOfRange { row: usize, col: usize, value: f64 },
    #[error("node features have {got} rows, expected {expected}")]
    FeatureShape { got: usize, expected: usize },
    #[error("eigenvector centrality did not converge in {max_iter} iterations")]
    NoConvergence { max_iter: usize },
    #[error(transparent)]
    Spd(#[from] spd::SpdError),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Weighted undirected graph over `d` ROIs with a class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Connectome {
    subject_id: String,
    label: usize,
    weights: SymMatrix,
    node_features: DMatrix<f64>,
}

impl Connectome {
    /// Builds a connectome from a Pearson correlation matrix.
    ///
    /// The matrix is symmetrized as `(m + mᵀ)/2` and its diagonal zeroed.
    /// Node features default to the rows of the resulting weight matrix.
    pub fn from_matrix(m: &DMatrix<f64>, subject_id: impl Into<String>, label: usize) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(GraphError::NonSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::NonFinite);
        }
        let mut sym = SymMatrix::symmetrize(m)?.into_matrix();
        for i in 0..sym.nrows() {
            sym[(i, i)] = 0.0;
        }
        for i in 0..sym.nrows() {
            for j in 0..sym.ncols() {
                if sym[(i, j)].abs() > 1.0 + WEIGHT_RANGE_TOL {
                    return Err(GraphError::WeightOutOfRange { row: i, col: j, value: sym[(i, j)] });
                }
            }
        }
        let node_features = sym.clone();
        Ok(Self {
            subject_id: subject_id.into(),
            label,
            weights: SymMatrix::new(sym)?,
            node_features,
        })
    }

    /// Replaces the node feature matrix (one row per ROI).
    pub fn with_node_features(mut self, features: DMatrix<f64>) -> Result<Self> {
        if features.nrows() != self.dim() {
            return Err(GraphError::FeatureShape { got: features.nrows(), expected: self.dim() });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::NonFinite);
        }
        self.node_features = features;
        Ok(self)
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = label;
        self
    }

    pub fn dim(&self) -> usize {
        self.weights.dim()
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn weights(&self) -> &SymMatrix {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }

    pub fn node_features(&self) -> &DMatrix<f64> {
        &self.node_features
    }

    /// Correlation matrix `W + I`, repaired onto the SPD cone.
    pub fn to_spd(&self, floor: f64) -> Result<SpdMatrix> {
        let m = self.weights.as_matrix() + DMatrix::identity(self.dim(), self.dim());
        Ok(spd::nearest_spd(&SymMatrix::new(m)?, floor)?)
    }

    /// Number of nonzero undirected edges.
    pub fn edge_count(&self) -> usize {
        let d = self.dim();
        (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).filter(|&(i, j)| self.weight(i, j) != 0.0).count()
    }

    /// Keeps only edges whose magnitude reaches the `quantile` of all
    /// off-diagonal magnitudes (linear interpolation). Ties at the
    /// threshold are kept.
    pub fn sparsify(&self, quantile: f64) -> Connectome {
        let d = self.dim();
        let mut mags: Vec<f64> = (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .map(|(i, j)| self.weight(i, j).abs())
            .collect();
        if mags.is_empty() || quantile <= 0.0 {
            return self.clone();
        }
        mags.sort_by(f64::total_cmp);
        let threshold = interpolated_quantile(&mags, quantile.min(1.0));
        let mut w = self.weights.as_matrix().clone();
        for i in 0..d {
            for j in 0..d {
                if i != j && w[(i, j)].abs() < threshold {
                    w[(i, j)] = 0.0;
                }
            }
        }
        Connectome {
            subject_id: self.subject_id.clone(),
            label: self.label,
            weights: SymMatrix::new(w).expect("masking preserves symmetry"),
            node_features: self.node_features.clone(),
        }
    }

    /// Relabels nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Connectome {
        let d = self.dim();
        assert_eq!(perm.len(), d);
        let w = DMatrix::from_fn(d, d, |i, j| self.weight(perm[i], perm[j]));
        let f = self.node_features.ncols();
        let feats = DMatrix::from_fn(d, f, |i, k| self.node_features[(perm[i], k)]);
        Connectome {
            subject_id: self.subject_id.clone(),
            label: self.label,
            weights: SymMatrix::new(w).expect("permutation preserves symmetry"),
            node_features: feats,
        }
    }
}

fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Degree, closeness and eigenvector centrality of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralityProfile {
    pub degree: Vec<f64>,
    pub closeness: Vec<f64>,
    pub eigenvector: Vec<f64>,
}

impl CentralityProfile {
    /// Computes all three measures on the graph sparsified at `quantile`.
    ///
    /// Heavy sparsification often leaves the graph disconnected, and power
    /// iteration then stalls when two components have nearly equal leading
    /// eigenvalues. In that case the eigenvector comes from a full
    /// eigendecomposition instead.
    pub fn compute(c: &Connectome, quantile: f64, tol: f64, max_iter: usize) -> Result<Self> {
        let sparse = c.sparsify(quantile);
        let eigenvector = match eigenvector_centrality(&sparse, tol, max_iter) {
            Ok(v) => v,
            Err(GraphError::NoConvergence { .. }) => {
                log::debug!("{}: power iteration stalled, using direct eigendecomposition", c.subject_id());
                principal_eigenvector(&sparse)
            }
            Err(e) => return Err(e),
        };
        Ok(Self { degree: degree_centrality(&sparse), closeness: closeness_centrality(&sparse), eigenvector })
    }
}

/// Count of incident nonzero edges.
pub fn degree_centrality(c: &Connectome) -> Vec<f64> {
    let d = c.dim();
    (0..d)
        .map(|i| (0..d).filter(|&j| j != i && c.weight(i, j) != 0.0).count() as f64)
        .collect()
}

#[derive(PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn shortest_paths_from(c: &Connectome, src: usize) -> Vec<f64> {
    let d = c.dim();
    let mut dist = vec![f64::INFINITY; d];
    dist[src] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Frontier { dist: 0.0, node: src });
    while let Some(Frontier { dist: du, node: u }) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        for v in 0..d {
            let w = c.weight(u, v);
            if v == u || w == 0.0 {
                continue;
            }
            let nd = du + 1.0 / w.abs();
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Frontier { dist: nd, node: v });
            }
        }
    }
    dist
}

/// Closeness on edge lengths `1/|w|` with the reachable-set correction
/// `(r−1)/Σdist · (r−1)/(d−1)`; isolated nodes score 0.
pub fn closeness_centrality(c: &Connectome) -> Vec<f64> {
    let d = c.dim();
    (0..d)
        .map(|src| {
            let dist = shortest_paths_from(c, src);
            let reach: Vec<f64> = dist.iter().copied().filter(|x| x.is_finite()).collect();
            let r = reach.len();
            let total: f64 = reach.iter().sum();
            if r <= 1 || total <= 0.0 || d <= 1 {
                0.0
            } else {
                let rm1 = (r - 1) as f64;
                (rm1 / total) * (rm1 / (d - 1) as f64)
            }
        })
        .collect()
}

/// Principal eigenvector of `|W|`, unit norm and nonnegative.
///
/// Iterates on `|W| + I`, which shares its eigenvectors with `|W|` but has a
/// strictly dominant eigenvalue on bipartite graphs such as stars.
pub fn eigenvector_centrality(c: &Connectome, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let d = c.dim();
    let a = c.weights.as_matrix().map(f64::abs);
    let mut x = vec![1.0 / (d as f64).sqrt(); d];
    for _ in 0..max_iter {
        let mut next: Vec<f64> = (0..d).map(|i| x[i] + (0..d).map(|j| a[(i, j)] * x[j]).sum::<f64>()).collect();
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(GraphError::NoConvergence { max_iter });
        }
        next.iter_mut().for_each(|v| *v /= norm);
        let delta = next.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        x = next;
        if delta < tol {
            return Ok(x);
        }
    }
    Err(GraphError::NoConvergence { max_iter })
}

/// Leading eigenvector of `|W|` from a full eigendecomposition, unit norm
/// with nonnegative sum. An edgeless graph yields the uniform vector.
pub fn principal_eigenvector(c: &Connectome) -> Vec<f64> {
    let d = c.dim();
    let a = c.weights.as_matrix().map(f64::abs);
    let eig = nalgebra::SymmetricEigen::new(a);
    let mut top = 0;
    for k in 1..d {
        if eig.eigenvalues[k] > eig.eigenvalues[top] {
            top = k;
        }
    }
    if d == 0 || eig.eigenvalues[top] <= 0.0 {
        return vec![1.0 / (d as f64).sqrt(); d];
    }
    let v = eig.eigenvectors.column(top);
    let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
    v.iter().map(|x| x * sign).collect()
}
