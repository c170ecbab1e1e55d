//! Seeded class-stratified k-fold assignment.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PipelineError;

/// Returns the validation fold of every sample.
///
/// Within each class (in ascending label order) members are shuffled and
/// dealt round-robin, continuing the deal position across classes so fold
/// sizes stay within one of each other.
pub fn stratified_kfold(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>, PipelineError> {
    if folds < 2 {
        return Err(PipelineError::InvalidFolds(folds));
    }
    if labels.len() < folds {
        return Err(PipelineError::InvalidFolds(folds));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0; labels.len()];
    let mut next = 0;
    for (label, mut members) in by_class {
        if members.len() < folds {
            log::warn!("class {label} has {} members for {folds} folds; some folds will lack it", members.len());
        }
        members.shuffle(&mut rng);
        for m in members {
            out[m] = next % folds;
            next += 1;
        }
    }
    Ok(out)
}

/// Indices of the samples outside / inside validation fold `fold`.
pub fn split(assignment: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..assignment.len()).partition(|&i| assignment[i] != fold)
}
