//! Stratified learning-based sample selection.
//!
//! A ridge regressor learns to predict the absolute label difference of a
//! pair of connectomes from their tangent-space difference, their centrality
//! changes and their log-Euclidean distance. Each train-in sample is then
//! scored by its mean predicted difference against a holdout group, and the
//! lowest-scoring samples of every class are kept.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{CentralityProfile, Connectome, GraphError, DEFAULT_SPARSIFY_QUANTILE};
use crate::spd::{self, SymMatrix, DEFAULT_SPD_FLOOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("subject {subject_id}: {source}")]
    Subject { subject_id: String, source: GraphError },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dimension mismatch: subject {subject_id} has {got} ROIs, expected {expected}")]
    DimensionMismatch { subject_id: String, got: usize, expected: usize },
    #[error("least-squares system is singular")]
    SingularSystem,
    #[error("feature length {got} does not match regressor ({expected})")]
    FeatureLength { got: usize, expected: usize },
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, SelectionError>;

/// Which centrality measures enter the pair features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CentralitySet {
    pub degree: bool,
    pub closeness: bool,
    pub eigenvector: bool,
}

impl CentralitySet {
    pub const ALL: CentralitySet = CentralitySet { degree: true, closeness: true, eigenvector: true };

    fn flags(&self) -> [bool; 3] {
        [self.degree, self.closeness, self.eigenvector]
    }
}

impl Default for CentralitySet {
    fn default() -> Self {
        Self::ALL
    }
}

impl std::str::FromStr for CentralitySet {
    type Err = String;

    /// Parses `all`, `dc`, `cc`, `ec` or a `+`/`,`-joined combination.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut set = CentralitySet { degree: false, closeness: false, eigenvector: false };
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "all" => set = Self::ALL,
                "dc" => set.degree = true,
                "cc" => set.closeness = true,
                "ec" => set.eigenvector = true,
                other => return Err(format!("unknown centrality '{other}' (expected dc, cc, ec or all)")),
            }
        }
        if set.flags().iter().any(|f| *f) {
            Ok(set)
        } else {
            Err(format!("empty centrality set '{s}'"))
        }
    }
}

impl std::fmt::Display for CentralitySet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if *self == Self::ALL {
            return f.write_str("all");
        }
        let names: Vec<&str> = self
            .flags()
            .iter()
            .zip(["dc", "cc", "ec"])
            .filter(|(on, _)| **on)
            .map(|(_, n)| n)
            .collect();
        f.write_str(&names.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub k_per_class: usize,
    pub ridge_lambda: f64,
    pub oversample_seed: u64,
    pub folds: usize,
    pub centralities: CentralitySet,
    pub sparsify_quantile: f64,
    pub spd_floor: f64,
    pub eig_tol: f64,
    pub eig_max_iter: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            k_per_class: 4,
            ridge_lambda: 1e-3,
            oversample_seed: 0,
            folds: 4,
            centralities: CentralitySet::ALL,
            sparsify_quantile: DEFAULT_SPARSIFY_QUANTILE,
            spd_floor: DEFAULT_SPD_FLOOR,
            eig_tol: 1e-9,
            eig_max_iter: 10_000,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_per_class < 1 {
            return Err(SelectionError::InvalidConfig("k_per_class must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(SelectionError::InvalidConfig("folds must be at least 2".into()));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(SelectionError::InvalidConfig("ridge_lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-subject quantities reused by every pair the subject takes part in.
#[derive(Debug, Clone)]
pub struct SubjectGeometry {
    pub subject_id: String,
    pub label: usize,
    pub log_matrix: SymMatrix,
    pub tangent: Vec<f64>,
    pub centrality: Vec<f64>,
}

impl SubjectGeometry {
    pub fn compute(c: &Connectome, cfg: &SelectionConfig) -> Result<Self> {
        let wrap = |source: GraphError| SelectionError::Subject { subject_id: c.subject_id().to_string(), source };
        let s = c.to_spd(cfg.spd_floor).map_err(wrap)?;
        let t = spd::log_map(&s).map_err(|e| wrap(e.into()))?;
        let prof = CentralityProfile::compute(c, cfg.sparsify_quantile, cfg.eig_tol, cfg.eig_max_iter).map_err(wrap)?;
        let mut centrality = prof.degree;
        centrality.extend(prof.closeness);
        centrality.extend(prof.eigenvector);
        Ok(Self {
            subject_id: c.subject_id().to_string(),
            label: c.label(),
            tangent: t.vectorized().to_vec(),
            log_matrix: t.matrix().clone(),
            centrality,
        })
    }

    pub fn compute_all(cs: &[Connectome], cfg: &SelectionConfig) -> Result<Vec<Self>> {
        if let Some(first) = cs.first() {
            let d = first.dim();
            if let Some(bad) = cs.iter().find(|c| c.dim() != d) {
                return Err(SelectionError::DimensionMismatch {
                    subject_id: bad.subject_id().to_string(),
                    got: bad.dim(),
                    expected: d,
                });
            }
        }
        cs.iter().map(|c| Self::compute(c, cfg)).collect()
    }
}

/// Difference features of one unordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeature {
    pub subject_i: String,
    pub subject_j: String,
    /// `vec(log S_i − log S_j)`.
    pub tangent_diff_vec: Vec<f64>,
    /// Degree, closeness and eigenvector centrality differences, concatenated.
    pub centrality_diff: Vec<f64>,
    pub lerm_distance: f64,
    /// `|y_i − y_j|`.
    pub target: f64,
}

impl PairFeature {
    pub fn between(a: &SubjectGeometry, b: &SubjectGeometry) -> Self {
        let tangent_diff_vec = a.tangent.iter().zip(&b.tangent).map(|(x, y)| x - y).collect();
        let centrality_diff = a.centrality.iter().zip(&b.centrality).map(|(x, y)| x - y).collect();
        let lerm_distance = spd::dist_lerm_logs(&a.log_matrix, &b.log_matrix).unwrap_or(f64::NAN);
        Self {
            subject_i: a.subject_id.clone(),
            subject_j: b.subject_id.clone(),
            tangent_diff_vec,
            centrality_diff,
            lerm_distance,
            target: (a.label as f64 - b.label as f64).abs(),
        }
    }

    /// Regression design row: tangent difference magnitudes, the enabled
    /// centrality difference magnitudes, then the LERM distance.
    ///
    /// Magnitudes make the row independent of pair orientation, matching
    /// the symmetric target; signed differences would let the subject order
    /// in the training list decide the sign of every prediction.
    pub fn design_row(&self, centralities: CentralitySet) -> Vec<f64> {
        let d = self.centrality_diff.len() / 3;
        let mut row: Vec<f64> = self.tangent_diff_vec.iter().map(|v| v.abs()).collect();
        for (block, on) in centralities.flags().iter().enumerate() {
            if *on {
                row.extend(self.centrality_diff[block * d..(block + 1) * d].iter().map(|v| v.abs()));
            }
        }
        row.push(self.lerm_distance);
        row
    }
}

/// One feature per unordered pair of `train_in`, in `(i, j), i < j` order.
pub fn build_pair_features(train_in: &[Connectome], cfg: &SelectionConfig) -> Result<Vec<PairFeature>> {
    if train_in.len() < 2 {
        return Err(SelectionError::TooFewSamples { needed: 2, got: train_in.len() });
    }
    let geo = SubjectGeometry::compute_all(train_in, cfg)?;
    Ok(pair_features_from_geometry(&geo))
}

pub fn pair_features_from_geometry(geo: &[SubjectGeometry]) -> Vec<PairFeature> {
    let n = geo.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(PairFeature::between(&geo[i], &geo[j]));
        }
    }
    out
}

/// Linear map from pair features to predicted label difference.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub centralities: CentralitySet,
}

impl Regressor {
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.coefficients.len() {
            return Err(SelectionError::FeatureLength { got: row.len(), expected: self.coefficients.len() });
        }
        Ok(self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>())
    }

    pub fn predict(&self, pair: &PairFeature) -> Result<f64> {
        self.predict_row(&pair.design_row(self.centralities))
    }
}

/// Ridge least squares with an unpenalized intercept.
pub fn fit_difference_regressor(
    pairs: &[PairFeature],
    ridge_lambda: f64,
    centralities: CentralitySet,
) -> Result<Regressor> {
    if pairs.is_empty() {
        return Err(SelectionError::TooFewSamples { needed: 1, got: 0 });
    }
    let rows: Vec<Vec<f64>> = pairs.iter().map(|p| p.design_row(centralities)).collect();
    let targets: Vec<f64> = pairs.iter().map(|p| p.target).collect();
    let (coefficients, intercept) = ridge_fit(&rows, &targets, ridge_lambda)?;
    Ok(Regressor { coefficients, intercept, centralities })
}

/// Solves `min ‖y − b0 − Xb‖² + λ‖b‖²` through whichever of the primal or
/// dual normal equations is smaller.
pub fn ridge_fit(rows: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    let n = rows.len();
    if n == 0 || n != targets.len() {
        return Err(SelectionError::TooFewSamples { needed: 1, got: n.min(targets.len()) });
    }
    let p = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != p) {
        return Err(SelectionError::FeatureLength { got: bad.len(), expected: p });
    }
    let mut x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let col_mean: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
    for j in 0..p {
        x.column_mut(j).add_scalar_mut(-col_mean[j]);
    }
    let y_mean = targets.iter().sum::<f64>() / n as f64;
    let y = DVector::from_iterator(n, targets.iter().map(|t| t - y_mean));

    let beta = if p <= n {
        let mut gram = x.transpose() * &x;
        for i in 0..p {
            gram[(i, i)] += lambda;
        }
        solve_spd(gram, &(x.transpose() * &y))?
    } else {
        let mut gram = &x * x.transpose();
        for i in 0..n {
            gram[(i, i)] += lambda;
        }
        let alpha = solve_spd(gram, &y)?;
        x.transpose() * alpha
    };
    let intercept = y_mean - beta.iter().zip(&col_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok((beta.iter().copied().collect(), intercept))
}

fn solve_spd(gram: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = gram.diagonal().iter().copied().fold(0.0, f64::max);
    if !(scale > 0.0) {
        // zero design: every coefficient is zero
        return if rhs.iter().all(|v| *v == 0.0) {
            Ok(DVector::zeros(rhs.len()))
        } else {
            Err(SelectionError::SingularSystem)
        };
    }
    let chol = Cholesky::new(gram).ok_or(SelectionError::SingularSystem)?;
    let min_pivot = chol.l_dirty().diagonal().iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
    if min_pivot <= scale * 1e-13 {
        return Err(SelectionError::SingularSystem);
    }
    Ok(chol.solve(rhs))
}

/// Mean predicted pair difference of every train-in sample against the holdout.
///
/// Only holdout features enter; their labels are never read.
pub fn score_samples(
    reg: &Regressor,
    train_in: &[SubjectGeometry],
    holdout: &[SubjectGeometry],
) -> Result<BTreeMap<String, f64>> {
    if holdout.is_empty() {
        return Err(SelectionError::TooFewSamples { needed: 1, got: 0 });
    }
    let mut out = BTreeMap::new();
    for s in train_in {
        let mut acc = 0.0;
        for h in holdout {
            acc += reg.predict(&PairFeature::between(s, h))?;
        }
        out.insert(s.subject_id.clone(), acc / holdout.len() as f64);
    }
    Ok(out)
}

/// Per class, the `k` lowest scores; ties go to the smaller subject id.
pub fn select_top_k_stratified(
    scores: &BTreeMap<String, f64>,
    labels: &BTreeMap<String, usize>,
    k_per_class: usize,
) -> Vec<String> {
    let mut by_class: BTreeMap<usize, Vec<(&String, f64)>> = BTreeMap::new();
    for (id, &score) in scores {
        if let Some(&label) = labels.get(id) {
            by_class.entry(label).or_default().push((id, score));
        }
    }
    let mut out = Vec::new();
    for (_, mut members) in by_class {
        members.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        out.extend(members.into_iter().take(k_per_class).map(|(id, _)| id.clone()));
    }
    out
}

/// Duplicates minority-class samples (with replacement) until every class
/// matches the majority count. Originals come first, in input order.
pub fn random_oversample(selected: &[Connectome], seed: u64) -> Vec<Connectome> {
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in selected.iter().enumerate() {
        members.entry(c.label()).or_default().push(i);
    }
    let majority = members.values().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = selected.to_vec();
    for idx in members.values() {
        for _ in idx.len()..majority {
            let pick = idx[rng.random_range(0..idx.len())];
            out.push(selected[pick].clone());
        }
    }
    out
}

/// One row of the selection report.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub subject_id: String,
    pub class: usize,
    pub score: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub selected_ids: Vec<String>,
    pub records: Vec<SelectionRecord>,
}

/// Full selection over a training set.
///
/// The training set is split into train-in and holdout groups by an inner
/// stratified k-fold. Each inner fold fits its own regressor on train-in
/// pairs and scores the train-in samples against the holdout; scores are
/// averaged across inner folds before the per-class top-k cut.
pub fn stratified_selection(train: &[Connectome], cfg: &SelectionConfig, seed: u64) -> Result<SelectionOutcome> {
    cfg.validate()?;
    if train.len() < 3 {
        return Err(SelectionError::TooFewSamples { needed: 3, got: train.len() });
    }
    let geo = SubjectGeometry::compute_all(train, cfg)?;
    let labels: Vec<usize> = train.iter().map(Connectome::label).collect();
    let folds = cfg.folds.min(train.len());
    let assignment = crate::pipeline::cv::stratified_kfold(&labels, folds, seed)
        .map_err(|e| SelectionError::InvalidConfig(e.to_string()))?;

    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for fold in 0..folds {
        let (inner, hold): (Vec<_>, Vec<_>) = geo.iter().zip(&assignment).partition(|(_, &f)| f != fold);
        let inner: Vec<SubjectGeometry> = inner.into_iter().map(|(g, _)| g.clone()).collect();
        let hold: Vec<SubjectGeometry> = hold.into_iter().map(|(g, _)| g.clone()).collect();
        if inner.len() < 2 || hold.is_empty() {
            continue;
        }
        let pairs = pair_features_from_geometry(&inner);
        let reg = fit_difference_regressor(&pairs, cfg.ridge_lambda, cfg.centralities)?;
        for (id, s) in score_samples(&reg, &inner, &hold)? {
            let e = sums.entry(id).or_insert((0.0, 0));
            e.0 += s;
            e.1 += 1;
        }
    }
    let scores: BTreeMap<String, f64> = sums.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect();
    let label_map: BTreeMap<String, usize> = train.iter().map(|c| (c.subject_id().to_string(), c.label())).collect();
    let selected_ids = select_top_k_stratified(&scores, &label_map, cfg.k_per_class);
    let chosen: BTreeSet<&String> = selected_ids.iter().collect();
    let records = train
        .iter()
        .map(|c| SelectionRecord {
            subject_id: c.subject_id().to_string(),
            class: c.label(),
            score: scores.get(c.subject_id()).copied().unwrap_or(f64::NAN),
            selected: chosen.contains(&c.subject_id().to_string()),
        })
        .collect();
    Ok(SelectionOutcome { selected_ids, records })
}
