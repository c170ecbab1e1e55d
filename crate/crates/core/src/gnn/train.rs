use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{AttentionSnapshot, GatModel, GraphInput};
use super::{GnnError, Result};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::graph::Connectome;
use crate::pipeline::metrics::weighted_f1;
use crate::selection::{random_oversample, stratified_selection, SelectionConfig, SelectionOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Stratified sample selection plus oversampling; `None` trains on the
    /// full training set as given.
    pub selection: Option<SelectionConfig>,
    /// Scale the loss by inverse class frequency of the training list.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 2,
            adam: AdamConfig::default(),
            seed: 0,
            selection: None,
            class_weighting: true,
        }
    }
}

/// Per-epoch summary. `train_loss` is evaluated in inference mode over the
/// training list after the epoch's updates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub fold: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GatModel,
    pub records: Vec<TrainRecord>,
    pub selection: Option<SelectionOutcome>,
    /// Subject ids of the samples actually trained on, duplicates included.
    pub trained_on: Vec<String>,
    /// Attention of every validation subject under the final model.
    pub val_attention: Vec<(String, AttentionSnapshot)>,
}

/// Inverse-frequency class weights `N / (C·N_q)`, rescaled to mean one over
/// the classes that occur. Absent classes get weight zero.
pub fn class_weights(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present == 0 {
        return vec![0.0; classes];
    }
    let n = labels.len() as f64;
    let raw: Vec<f64> =
        counts.iter().map(|&c| if c == 0 { 0.0 } else { n / (classes as f64 * c as f64) }).collect();
    let mean = raw.iter().sum::<f64>() / present as f64;
    raw.iter().map(|r| r / mean).collect()
}

/// `-(1/N) Σ_n r_{y_n} log p_n[y_n]` for an `N × C` log-probability matrix.
pub fn weighted_nll_loss(tape: &mut Tape, log_probs: Var, labels: &[usize], weights: &[f64]) -> Result<Var> {
    let lp = tape.value(log_probs)?;
    let (n, c) = (lp.rows(), lp.cols());
    if n != labels.len() || c != weights.len() {
        return Err(GnnError::DimensionMismatch { what: "loss inputs".into(), got: labels.len(), expected: n });
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= c) {
        return Err(GnnError::DimensionMismatch { what: "label".into(), got: l, expected: c });
    }
    let mask = Tensor::from_fn(n, c, |r, q| if labels[r] == q { weights[q] } else { 0.0 });
    let mask = tape.constant(mask);
    let picked = tape.mul(log_probs, mask)?;
    let total = tape.sum_all(picked)?;
    Ok(tape.scalar_mul(total, -1.0 / n as f64)?)
}

/// Plain-value counterpart of [`weighted_nll_loss`] over probability rows.
pub fn weighted_nll_value(probabilities: &[Vec<f64>], labels: &[usize], weights: &[f64]) -> f64 {
    let n = labels.len().max(1) as f64;
    -probabilities.iter().zip(labels).map(|(p, &y)| weights[y] * p[y].ln()).sum::<f64>() / n
}

fn evaluate(model: &GatModel, graphs: &[GraphInput], labels: &[usize], weights: &[f64]) -> Result<(f64, f64)> {
    let mut probs = Vec::with_capacity(graphs.len());
    let mut preds = Vec::with_capacity(graphs.len());
    for g in graphs {
        let p = model.predict_graph(g)?;
        preds.push(p.class);
        probs.push(p.probabilities);
    }
    Ok((weighted_nll_value(&probs, labels, weights), weighted_f1(labels, &preds, model.config.classes)))
}

/// Trains `model` on `train_set` and tracks loss and F1 on `val_set`.
///
/// With selection enabled, only the selected and oversampled subjects are
/// used for gradient updates. Every class in `0..classes` must occur in
/// `train_set`.
pub fn train(
    mut model: GatModel,
    train_set: &[Connectome],
    val_set: &[Connectome],
    cfg: &TrainConfig,
    fold: usize,
) -> Result<TrainOutcome> {
    let classes = model.config.classes;
    if cfg.batch_size == 0 {
        return Err(GnnError::InvalidConfig("batch_size must be at least 1".into()));
    }
    for class in 0..classes {
        if !train_set.iter().any(|c| c.label() == class) {
            return Err(GnnError::EmptyClass { class });
        }
    }
    if let Some(c) = train_set.iter().chain(val_set).find(|c| c.label() >= classes) {
        return Err(GnnError::DimensionMismatch { what: "label".into(), got: c.label(), expected: classes });
    }

    let (subjects, selection) = match &cfg.selection {
        Some(sel) => {
            let outcome = stratified_selection(train_set, sel, cfg.seed)?;
            let chosen: Vec<Connectome> = train_set
                .iter()
                .filter(|c| outcome.selected_ids.iter().any(|id| id == c.subject_id()))
                .cloned()
                .collect();
            (random_oversample(&chosen, sel.oversample_seed), Some(outcome))
        }
        None => (train_set.to_vec(), None),
    };

    let graphs: Vec<GraphInput> = subjects.iter().map(GraphInput::from_connectome).collect::<Result<_>>()?;
    let labels: Vec<usize> = subjects.iter().map(Connectome::label).collect();
    let val_graphs: Vec<GraphInput> = val_set.iter().map(GraphInput::from_connectome).collect::<Result<_>>()?;
    let val_labels: Vec<usize> = val_set.iter().map(Connectome::label).collect();
    let weights = if cfg.class_weighting { class_weights(&labels, classes) } else { vec![1.0; classes] };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.params());
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let vars = model.register(&mut tape, true);
            let mut outs = Vec::with_capacity(batch.len());
            for &i in batch {
                outs.push(model.forward(&mut tape, &vars, &graphs[i], true, &mut rng)?.log_probs);
            }
            let lp = tape.concat(&outs, 0)?;
            let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let loss = weighted_nll_loss(&mut tape, lp, &batch_labels, &weights)?;
            let grads = tape.backward(loss)?;
            let g: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect::<std::result::Result<_, _>>()?;
            adam_step(model.params_mut(), &g, &mut adam, &cfg.adam)?;
        }
        let (train_loss, _) = evaluate(&model, &graphs, &labels, &weights)?;
        let (val_loss, val_f1) = if val_graphs.is_empty() {
            (0.0, 0.0)
        } else {
            evaluate(&model, &val_graphs, &val_labels, &weights)?
        };
        log::debug!("fold {fold} epoch {epoch}: train {train_loss:.5} val {val_loss:.5} f1 {val_f1:.3}");
        records.push(TrainRecord { fold, epoch, train_loss, val_loss, val_f1 });
    }

    let mut val_attention = Vec::with_capacity(val_set.len());
    for (c, g) in val_set.iter().zip(&val_graphs) {
        val_attention.push((c.subject_id().to_string(), model.predict_graph(g)?.attention));
    }
    let trained_on = subjects.iter().map(|c| c.subject_id().to_string()).collect();
    Ok(TrainOutcome { model, records, selection, trained_on, val_attention })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::GatConfig;
    use nalgebra::DMatrix;

    /// Two classes separated by the sign of one block of edges.
    fn separable(d: usize, n_per_class: usize) -> Vec<Connectome> {
        let mut out = Vec::new();
        for class in 0..2 {
            for s in 0..n_per_class {
                let sign = if class == 0 { 1.0 } else { -1.0 };
                let m = DMatrix::from_fn(d, d, |i, j| {
                    if i == j {
                        0.0
                    } else if i < 3 && j < 3 {
                        sign * 0.6
                    } else {
                        0.1 * (((i * 7 + j * 7 + s * 3) % 5) as f64 - 2.0) / 2.0
                    }
                });
                out.push(Connectome::from_matrix(&m, format!("c{class}s{s}"), class).unwrap());
            }
        }
        out
    }

    #[test]
    fn class_weights_are_inverse_frequency_with_unit_mean() {
        let w = class_weights(&[0, 0, 0, 1], 2);
        // raw: 4/6 and 4/2, mean 4/3
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 1.5).abs() < 1e-12);
        assert_eq!(class_weights(&[0, 1, 2], 3), vec![1.0; 3]);
    }

    #[test]
    fn uniform_predictions_give_log_class_count() {
        let mut tape = Tape::new();
        let lp = tape.constant(Tensor::from_fn(4, 3, |_, _| (1.0f64 / 3.0).ln()));
        let loss = weighted_nll_loss(&mut tape, lp, &[0, 1, 2, 1], &[1.0; 3]).unwrap();
        assert!((tape.value(loss).unwrap().values()[0] - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn training_loss_decreases_on_separable_toy() {
        let data = separable(6, 4);
        let model = GatModel::new(GatConfig::new(6, 2), 0).unwrap();
        let cfg = TrainConfig { epochs: 10, ..TrainConfig::default() };
        let out = train(model, &data, &data, &cfg, 0).unwrap();
        let losses: Vec<f64> = out.records.iter().map(|r| r.train_loss).collect();
        assert!(losses.iter().all(|l| l.is_finite() && *l >= 0.0));
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "losses not decreasing: {losses:?}");
        }
    }

    #[test]
    fn training_is_deterministic_and_zero_epochs_is_identity() {
        let data = separable(5, 3);
        let model = GatModel::new(GatConfig::new(5, 2), 1).unwrap();
        let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let a = train(model.clone(), &data, &data, &cfg, 0).unwrap();
        let b = train(model.clone(), &data, &data, &cfg, 0).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.records, b.records);

        let zero = train(model.clone(), &data, &data, &TrainConfig { epochs: 0, ..cfg }, 0).unwrap();
        assert_eq!(zero.model, model);
        assert!(zero.records.is_empty());
    }

    #[test]
    fn missing_class_is_rejected() {
        let data: Vec<Connectome> = separable(5, 3).into_iter().filter(|c| c.label() == 0).collect();
        let model = GatModel::new(GatConfig::new(5, 2), 1).unwrap();
        assert!(matches!(train(model, &data, &[], &TrainConfig::default(), 0), Err(GnnError::EmptyClass { class: 1 })));
    }
}
