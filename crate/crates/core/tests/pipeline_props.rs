mod common;

use common::*;
use connectome_gat::nalgebra::DMatrix;
use connectome_gat::pipeline::cv::{split, stratified_kfold};
use connectome_gat::pipeline::metrics::{binary_auc, compute_metrics};
use connectome_gat::pipeline::preprocess::impute_and_standardize;
use connectome_gat::pipeline::synth::{generate_synthetic, SynthConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fraction of (positive, negative) pairs ranked correctly, ties counting one half.
fn pairwise_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for i in (0..scores.len()).filter(|&i| positive[i]) {
        for j in (0..scores.len()).filter(|&j| !positive[j]) {
            pairs += 1;
            wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

fn random_case(n: usize, classes: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y_true: Vec<usize> = (0..n).map(|i| i % classes).collect();
    y_true.shuffle(&mut rng);
    let y_pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    // Scores on a coarse grid so ties occur.
    let scores = (0..n).map(|_| (0..classes).map(|_| rng.random_range(0..5) as f64 / 4.0).collect()).collect();
    (y_true, y_pred, scores)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_match_brute_force(n in 3usize..40, seed in any::<u64>()) {
        let classes = 3;
        let (y_true, y_pred, scores) = random_case(n, classes, seed);
        let report = compute_metrics(&y_true, &y_pred, &scores, classes).unwrap();
        let (mut p, mut r, mut f, mut auc, mut auc_w) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for q in 0..classes {
            let tp = (0..n).filter(|&i| y_true[i] == q && y_pred[i] == q).count() as f64;
            let fp = (0..n).filter(|&i| y_true[i] != q && y_pred[i] == q).count() as f64;
            let fneg = (0..n).filter(|&i| y_true[i] == q && y_pred[i] != q).count() as f64;
            let support = tp + fneg;
            let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rec = if support > 0.0 { tp / support } else { 0.0 };
            let f1 = if 2.0 * tp + fp + fneg > 0.0 { 2.0 * tp / (2.0 * tp + fp + fneg) } else { 0.0 };
            p += support * prec;
            r += support * rec;
            f += support * f1;
            let col: Vec<f64> = scores.iter().map(|s| s[q]).collect();
            let pos: Vec<bool> = y_true.iter().map(|&t| t == q).collect();
            if let Some(a) = pairwise_auc(&col, &pos) {
                auc += support * a;
                auc_w += support;
            }
        }
        let nf = n as f64;
        prop_assert!((report.precision - p / nf).abs() < 1e-12);
        prop_assert!((report.recall - r / nf).abs() < 1e-12);
        prop_assert!((report.f1 - f / nf).abs() < 1e-12);
        prop_assert!((report.auc - auc / auc_w).abs() < 1e-12);
        let correct = (0..n).filter(|&i| y_true[i] == y_pred[i]).count() as f64;
        prop_assert!((report.accuracy - correct / nf).abs() < 1e-15);
        prop_assert_eq!(report.confusion.iter().flatten().sum::<usize>(), n);
    }

    #[test]
    fn auc_invariant_to_monotone_transforms(n in 2usize..50, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        positive[0] = true;
        positive[1] = false;
        let base = binary_auc(&scores, &positive).unwrap();
        prop_assert!((base - pairwise_auc(&scores, &positive).unwrap()).abs() < 1e-12);
        for f in [|x: f64| x.exp(), |x: f64| 3.0 * x - 7.0, |x: f64| x.powi(3), |x: f64| 1.0 / (1.0 + (-x).exp())] {
            let moved: Vec<f64> = scores.iter().map(|&x| f(x)).collect();
            prop_assert_eq!(binary_auc(&moved, &positive).unwrap(), base);
        }
    }

    #[test]
    fn folds_are_disjoint_exhaustive_and_stratified(counts in prop::collection::vec(2usize..12, 2..5), k in 2usize..5, seed in any::<u64>()) {
        prop_assume!(counts.iter().all(|&c| c >= k));
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(q, &c)| std::iter::repeat_n(q, c)).collect();
        let assignment = stratified_kfold(&labels, k, seed).unwrap();
        let mut seen = vec![0usize; labels.len()];
        for fold in 0..k {
            let (train, test) = split(&assignment, fold);
            prop_assert_eq!(train.len() + test.len(), labels.len());
            prop_assert!(train.iter().all(|i| !test.contains(i)));
            for &i in &test {
                seen[i] += 1;
            }
            for (q, &c) in counts.iter().enumerate() {
                let in_test = test.iter().filter(|&&i| labels[i] == q).count();
                prop_assert!(in_test == c / k || in_test == c.div_ceil(k));
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn preprocessing_is_order_independent(n in 3usize..10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mats: Vec<DMatrix<f64>> = (0..n)
            .map(|_| {
                let mut m = random_weights(5, &mut rng);
                m.fill_diagonal(1.0);
                if rng.random_bool(0.3) {
                    m[(0, 2)] = f64::NAN;
                    m[(2, 0)] = f64::NAN;
                }
                m
            })
            .collect();
        prop_assume!(mats.iter().any(|m| !m[(0, 2)].is_nan()));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let permuted: Vec<DMatrix<f64>> = order.iter().map(|&i| mats[i].clone()).collect();
        let a = impute_and_standardize(&mats).unwrap();
        let b = impute_and_standardize(&permuted).unwrap();
        for (k, &i) in order.iter().enumerate() {
            prop_assert!((&b[k] - &a[i]).amax() < 1e-12);
        }
    }
}

/// Mean between-class minus mean within-class LERM distance.
fn separation(logs: &[DMatrix<f64>], labels: &[usize]) -> f64 {
    let (mut between, mut nb, mut within, mut nw) = (0.0, 0, 0.0, 0);
    for i in 0..logs.len() {
        for j in (i + 1)..logs.len() {
            let d = (&logs[i] - &logs[j]).norm_squared();
            if labels[i] == labels[j] {
                within += d;
                nw += 1;
            } else {
                between += d;
                nb += 1;
            }
        }
    }
    between / nb as f64 - within / nw as f64
}

fn matrix_logs(mats: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    mats.iter()
        .map(|m| {
            let e = connectome_gat::nalgebra::SymmetricEigen::new(m.clone());
            &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(f64::ln)) * e.eigenvectors.transpose()
        })
        .collect()
}

#[test]
fn zero_signal_classes_are_indistinguishable() {
    let cohort =
        generate_synthetic(&SynthConfig { d: 12, per_class: vec![8; 3], signal_strength: 0.0, noise: 0.5, seed: 17 })
            .unwrap();
    let logs = matrix_logs(&cohort.matrices);
    let observed = separation(&logs, &cohort.labels);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut labels = cohort.labels.clone();
    let permutations = 999;
    let mut extreme = 0;
    for _ in 0..permutations {
        labels.shuffle(&mut rng);
        if separation(&logs, &labels) >= observed {
            extreme += 1;
        }
    }
    let p = (extreme + 1) as f64 / (permutations + 1) as f64;
    assert!(p > 0.01, "permutation p-value {p}");
}

#[test]
fn noiseless_strong_signal_is_perfectly_separable() {
    let cohort =
        generate_synthetic(&SynthConfig { d: 16, per_class: vec![5; 4], signal_strength: 3.0, noise: 0.0, seed: 3 })
            .unwrap();
    assert_eq!(loo_1nn_lerm(&cohort.matrices, &cohort.labels), 1.0);
}

#[test]
fn synthetic_outputs_are_spd_correlations() {
    let cohort = generate_synthetic(&SynthConfig { d: 10, per_class: vec![3; 2], ..SynthConfig::default() }).unwrap();
    for m in &cohort.matrices {
        assert!((0..10).all(|i| m[(i, i)] == 1.0));
        assert_eq!(m, &m.transpose());
        let min = connectome_gat::nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.min();
        assert!(min > 0.0);
    }
    assert!(cohort.planted_edges.iter().all(|&(i, j)| i < j && cohort.block.contains(&i) && cohort.block.contains(&j)));
}
