//! Cross-validated training runs and their on-disk outputs.
//!
//! Layout under the output directory:
//!
//! ```text
//! config.toml         effective configuration
//! folds.csv           subject_id,label,fold
//! predictions.csv     out-of-fold class and probabilities
//! metrics.json        pooled and per-fold metrics
//! fold_<k>/checkpoint.bin, curve.csv, selection.csv, train_ids.txt
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::DMatrix;
use serde::Serialize;

use super::config::{FeatureMode, RunConfig};
use super::cv::{split, stratified_kfold};
use super::data::Dataset;
use super::metrics::{compute_metrics, weighted_f1, MetricsReport};
use super::preprocess::{fisher_z, PositionStats};
use super::PipelineError;
use crate::explain::{
    class_mask, export_viewer_files, max_over_heads, network_summary, soft_threshold, symmetrize_max,
    ExplanationMask, NetworkMap,
};
use crate::gnn::{train, GatModel, Prediction, TrainRecord};
use crate::graph::Connectome;
use crate::selection::SelectionOutcome;

/// Environment variable holding the number of concurrent fold workers.
pub const WORKERS_ENV: &str = "CGAT_WORKERS";

pub fn worker_count(folds: usize) -> usize {
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0).unwrap_or(folds)
}

/// Builds connectomes for a train/test split. Imputation and feature
/// statistics come from the training subjects only.
pub fn fold_connectomes(
    ds: &Dataset,
    cfg: &RunConfig,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<(Vec<Connectome>, Vec<Connectome>), PipelineError> {
    let train_m: Vec<DMatrix<f64>> = train_idx.iter().map(|&i| ds.matrices[i].clone()).collect();
    let stats = PositionStats::fit(&train_m)?;
    let build = |idx: &[usize]| -> Result<Vec<Connectome>, PipelineError> {
        idx.iter()
            .map(|&i| {
                let e = &ds.manifest.entries[i];
                let imputed = stats.impute(&ds.matrices[i]);
                let features = match cfg.features {
                    FeatureMode::Standardize => stats.standardize(&imputed),
                    FeatureMode::Fisher => fisher_z(&imputed),
                    FeatureMode::Raw => imputed.clone(),
                };
                Ok(Connectome::from_matrix(&imputed, e.subject_id.clone(), e.label)?.with_node_features(features)?)
            })
            .collect()
    };
    Ok((build(train_idx)?, build(test_idx)?))
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub predictions: Vec<Prediction>,
    pub records: Vec<TrainRecord>,
    pub selection: Option<SelectionOutcome>,
    pub trained_on: Vec<String>,
    pub model: GatModel,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub assignment: Vec<usize>,
    pub folds: Vec<FoldResult>,
    /// Out-of-fold results in dataset order.
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
    pub metrics: MetricsReport,
}

impl RunOutcome {
    /// Out-of-fold prediction of subject `i` in dataset order.
    pub fn prediction(&self, i: usize) -> &Prediction {
        let f = &self.folds[self.assignment[i]];
        let pos = f.test_indices.iter().position(|&t| t == i).expect("subject is in its test fold");
        &f.predictions[pos]
    }
}

fn run_fold(ds: &Dataset, cfg: &RunConfig, assignment: &[usize], fold: usize) -> Result<FoldResult, PipelineError> {
    let (train_idx, test_idx) = split(assignment, fold);
    let (train_c, test_c) = fold_connectomes(ds, cfg, &train_idx, &test_idx)?;
    let tcfg = cfg.train_config(fold)?;
    let model = GatModel::new(cfg.gat_config(ds.manifest.atlas_dim, ds.manifest.class_count), tcfg.seed)?;
    let out = train(model, &train_c, &test_c, &tcfg, fold)?;
    let predictions = test_c.iter().map(|c| out.model.predict(c)).collect::<Result<Vec<_>, _>>()?;
    Ok(FoldResult {
        fold,
        train_indices: train_idx,
        test_indices: test_idx,
        predictions,
        records: out.records,
        selection: out.selection,
        trained_on: out.trained_on,
        model: out.model,
    })
}

/// Runs `f(fold)` for every fold on up to `workers` threads and returns
/// results in fold order.
fn for_each_fold<T: Send>(
    folds: usize,
    workers: usize,
    f: impl Fn(usize) -> Result<T, PipelineError> + Sync,
) -> Result<Vec<T>, PipelineError> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T, PipelineError>>>> = Mutex::new((0..folds).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, folds) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= folds {
                    break;
                }
                let r = f(k);
                slots.lock().expect("fold result lock")[k] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("fold result lock")
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            r.expect("every fold ran").map_err(|e| PipelineError::Fold { fold: k, source: Box::new(e) })
        })
        .collect()
}

fn assemble(ds: &Dataset, assignment: Vec<usize>, folds: Vec<FoldResult>) -> Result<RunOutcome, PipelineError> {
    let n = ds.len();
    let mut y_pred = vec![0; n];
    let mut probabilities = vec![Vec::new(); n];
    for f in &folds {
        for (&i, p) in f.test_indices.iter().zip(&f.predictions) {
            y_pred[i] = p.class;
            probabilities[i] = p.probabilities.clone();
        }
    }
    let y_true = ds.labels();
    let metrics = compute_metrics(&y_true, &y_pred, &probabilities, ds.manifest.class_count)?;
    Ok(RunOutcome { assignment, folds, y_true, y_pred, probabilities, metrics })
}

/// Stratified k-fold training and out-of-fold evaluation.
pub fn run_cv(ds: &Dataset, cfg: &RunConfig) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let assignment = stratified_kfold(&ds.labels(), cfg.folds, cfg.seed)?;
    let folds = for_each_fold(cfg.folds, worker_count(cfg.folds), |k| run_fold(ds, cfg, &assignment, k))?;
    assemble(ds, assignment, folds)
}

#[derive(Serialize)]
struct FoldSummary {
    fold: usize,
    test_size: usize,
    trained_on: usize,
    f1: f64,
    final_train_loss: Option<f64>,
    final_val_loss: Option<f64>,
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    pooled: &'a MetricsReport,
    folds: Vec<FoldSummary>,
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn metrics_json(outcome: &RunOutcome, classes: usize) -> String {
    let folds = outcome
        .folds
        .iter()
        .map(|f| {
            let t: Vec<usize> = f.test_indices.iter().map(|&i| outcome.y_true[i]).collect();
            let p: Vec<usize> = f.predictions.iter().map(|p| p.class).collect();
            FoldSummary {
                fold: f.fold,
                test_size: f.test_indices.len(),
                trained_on: f.trained_on.len(),
                f1: weighted_f1(&t, &p, classes),
                final_train_loss: f.records.last().map(|r| r.train_loss),
                final_val_loss: f.records.last().map(|r| r.val_loss),
            }
        })
        .collect();
    serde_json::to_string_pretty(&MetricsFile { pooled: &outcome.metrics, folds }).expect("metrics serialize") + "\n"
}

/// Writes every run artifact under `dir`.
pub fn write_outputs(outcome: &RunOutcome, ds: &Dataset, cfg: &RunConfig, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut saved = cfg.clone();
    if let Some(m) = &cfg.manifest {
        saved.manifest = Some(std::path::absolute(m).map_err(|e| PipelineError::io(m, e))?);
    }
    write_file(&dir.join("config.toml"), &saved.to_toml_string())?;

    let mut folds = String::from("subject_id,label,fold\n");
    for (e, &f) in ds.manifest.entries.iter().zip(&outcome.assignment) {
        let _ = writeln!(folds, "{},{},{}", e.subject_id, e.label, f);
    }
    write_file(&dir.join("folds.csv"), &folds)?;

    let classes = ds.manifest.class_count;
    let mut preds = String::from("subject_id,label,fold,predicted");
    for q in 0..classes {
        let _ = write!(preds, ",p{q}");
    }
    preds.push('\n');
    for (i, e) in ds.manifest.entries.iter().enumerate() {
        let _ = write!(preds, "{},{},{},{}", e.subject_id, e.label, outcome.assignment[i], outcome.y_pred[i]);
        for p in &outcome.probabilities[i] {
            let _ = write!(preds, ",{p}");
        }
        preds.push('\n');
    }
    write_file(&dir.join("predictions.csv"), &preds)?;
    write_file(&dir.join("metrics.json"), &metrics_json(outcome, classes))?;

    for f in &outcome.folds {
        let fdir = dir.join(format!("fold_{}", f.fold));
        std::fs::create_dir_all(&fdir).map_err(|e| PipelineError::io(&fdir, e))?;
        f.model.save(&fdir.join("checkpoint.bin"))?;
        let mut curve = String::from("epoch,train_loss,val_loss,val_f1\n");
        for r in &f.records {
            let _ = writeln!(curve, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_f1);
        }
        write_file(&fdir.join("curve.csv"), &curve)?;
        if let Some(sel) = &f.selection {
            write_file(&fdir.join("selection.csv"), &selection_csv(sel))?;
        }
        write_file(&fdir.join("train_ids.txt"), &(f.trained_on.join("\n") + "\n"))?;
    }
    Ok(())
}

pub fn selection_csv(sel: &SelectionOutcome) -> String {
    let mut s = String::from("subject_id,class,score,selected\n");
    for r in &sel.records {
        let _ = writeln!(s, "{},{},{},{}", r.subject_id, r.class, r.score, r.selected);
    }
    s
}

/// Reads `folds.csv` back into a fold assignment aligned with `ds`.
pub fn read_assignment(ds: &Dataset, path: &Path) -> Result<Vec<usize>, PipelineError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|_| PipelineError::MissingFile(path.to_path_buf()))?;
    let mut by_id = BTreeMap::new();
    for (k, rec) in rdr.deserialize::<(String, usize, usize)>().enumerate() {
        let (id, _, fold) =
            rec.map_err(|e| PipelineError::Parse { path: path.to_path_buf(), line: k + 2, msg: e.to_string() })?;
        by_id.insert(id, fold);
    }
    ds.manifest
        .entries
        .iter()
        .map(|e| {
            by_id.get(&e.subject_id).copied().ok_or_else(|| PipelineError::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("subject {} has no fold", e.subject_id),
            })
        })
        .collect()
}

/// Rebuilds out-of-fold predictions from the checkpoints of a finished run.
pub fn reload_run(ds: &Dataset, cfg: &RunConfig, dir: &Path) -> Result<RunOutcome, PipelineError> {
    let assignment = read_assignment(ds, &dir.join("folds.csv"))?;
    let n_folds = assignment.iter().max().map_or(0, |m| m + 1);
    let folds = for_each_fold(n_folds, worker_count(n_folds), |fold| {
        let (train_idx, test_idx) = split(&assignment, fold);
        let (_, test_c) = fold_connectomes(ds, cfg, &train_idx, &test_idx)?;
        let model = GatModel::load(&dir.join(format!("fold_{fold}")).join("checkpoint.bin"))?;
        let predictions = test_c.iter().map(|c| model.predict(c)).collect::<Result<Vec<_>, _>>()?;
        Ok(FoldResult {
            fold,
            train_indices: train_idx,
            test_indices: test_idx,
            predictions,
            records: Vec::new(),
            selection: None,
            trained_on: Vec::new(),
            model,
        })
    })?;
    assemble(ds, assignment, folds)
}

/// Per-class explanation masks over the out-of-fold subjects of each class.
#[derive(Debug, Clone)]
pub struct ClassExplanation {
    pub class: usize,
    pub mask: ExplanationMask,
    pub thresholded: ExplanationMask,
    pub summary: DMatrix<f64>,
}

/// Class masks from held-out attention, symmetrized unless
/// `cfg.directed_masks` is set, then cut to `cfg.top_l` entries.
pub fn class_explanations(
    outcome: &RunOutcome,
    cfg: &RunConfig,
    netmap: &NetworkMap,
) -> Result<Vec<ClassExplanation>, PipelineError> {
    let classes = outcome.metrics.per_class.len();
    let mut out = Vec::with_capacity(classes);
    for class in 0..classes {
        let saliency = (0..outcome.y_true.len())
            .filter(|&i| outcome.y_true[i] == class)
            .map(|i| max_over_heads(&outcome.prediction(i).attention))
            .collect::<Result<Vec<_>, _>>()?;
        let mut mask = class_mask(class, &saliency)?;
        if !cfg.directed_masks {
            mask.values = symmetrize_max(&mask.values);
        }
        let thresholded = soft_threshold(&mask, cfg.top_l);
        let summary = network_summary(&thresholded.values, netmap)?;
        out.push(ClassExplanation { class, mask, thresholded, summary });
    }
    Ok(out)
}

/// Writes `masks/class_<c>.{edge,node}` and `masks/class_<c>_networks.csv`.
pub fn write_explanations(
    expl: &[ClassExplanation],
    netmap: &NetworkMap,
    coords: Option<&[[f64; 3]]>,
    dir: &Path,
) -> Result<(), PipelineError> {
    let mdir = dir.join("masks");
    for e in expl {
        export_viewer_files(&e.thresholded.values, netmap, coords, &mdir, &format!("class_{}", e.class))?;
        let names: Vec<&str> = crate::explain::Network::ALL.iter().map(|n| n.abbreviation()).collect();
        let mut s = format!("network,{}\n", names.join(","));
        for (p, name) in names.iter().enumerate() {
            let row: Vec<String> = (0..9).map(|q| format!("{}", e.summary[(p, q)])).collect();
            let _ = writeln!(s, "{name},{}", row.join(","));
        }
        write_file(&mdir.join(format!("class_{}_networks.csv", e.class)), &s)?;
    }
    Ok(())
}
