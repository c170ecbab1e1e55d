//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use connectome_gat::nalgebra::{DMatrix, SymmetricEigen};
use connectome_gat::spd::{self, SpdMatrix, SymMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_orthogonal<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let qr = gaussian(d, d, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    // Sign fix so the draw is Haar distributed.
    let mut q = q;
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q₁ diag(10^u) Q₂` with `u` uniform on `[-1, 1]`: a general invertible
/// matrix with condition number at most 100.
pub fn random_invertible<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let q1 = random_orthogonal(d, rng);
    let q2 = random_orthogonal(d, rng);
    let s: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(-1.0..=1.0))).collect();
    q1 * DMatrix::from_diagonal(&s.into()) * q2
}

/// `Q diag(10^u) Qᵀ` with `u` uniform on `[lo, hi]`.
pub fn random_spd<R: Rng>(d: usize, lo: f64, hi: f64, rng: &mut R) -> SpdMatrix {
    let q = random_orthogonal(d, rng);
    let eig: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(lo..=hi))).collect();
    let m = &q * DMatrix::from_diagonal(&eig.into()) * q.transpose();
    spd::validate_spd(SymMatrix::symmetrize(&m).unwrap(), f64::MIN_POSITIVE).unwrap()
}

/// Scales a covariance to unit diagonal and forces exact symmetry.
pub fn to_correlation(s: &DMatrix<f64>) -> DMatrix<f64> {
    let d = s.nrows();
    let mut c = DMatrix::from_fn(d, d, |i, j| s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt());
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

/// Symmetric zero-diagonal matrix with entries uniform on `(-1, 1)`.
pub fn random_weights<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..i {
            let v: f64 = rng.random_range(-0.99..0.99);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Zeroes off-diagonal entries whose magnitude falls below the
/// linearly interpolated `q`-quantile of the upper-triangle magnitudes.
pub fn oracle_sparsify(w: &DMatrix<f64>, q: f64) -> DMatrix<f64> {
    let d = w.nrows();
    let mut mags = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            mags.push(w[(i, j)].abs());
        }
    }
    if mags.is_empty() || q <= 0.0 {
        return w.clone();
    }
    mags.sort_by(f64::total_cmp);
    let pos = q * (mags.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let t = mags[lo] + (pos - lo as f64) * (mags[hi] - mags[lo]);
    DMatrix::from_fn(d, d, |i, j| if i != j && w[(i, j)].abs() < t { 0.0 } else { w[(i, j)] })
}

pub fn oracle_degree(w: &DMatrix<f64>) -> Vec<f64> {
    let d = w.nrows();
    (0..d).map(|i| (0..d).filter(|&j| j != i && w[(i, j)] != 0.0).count() as f64).collect()
}

/// Closeness from all-pairs Floyd–Warshall distances on lengths `1/|w|`.
pub fn oracle_closeness(w: &DMatrix<f64>) -> Vec<f64> {
    let d = w.nrows();
    let mut dist = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            0.0
        } else if w[(i, j)] != 0.0 {
            1.0 / w[(i, j)].abs()
        } else {
            f64::INFINITY
        }
    });
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let via = dist[(i, k)] + dist[(k, j)];
                if via < dist[(i, j)] {
                    dist[(i, j)] = via;
                }
            }
        }
    }
    (0..d)
        .map(|i| {
            let reach: Vec<f64> = (0..d).map(|j| dist[(i, j)]).filter(|x| x.is_finite()).collect();
            let r = reach.len();
            let total: f64 = reach.iter().sum();
            if r <= 1 || total <= 0.0 {
                0.0
            } else {
                let rm1 = (r - 1) as f64;
                (rm1 / total) * (rm1 / (d - 1) as f64)
            }
        })
        .collect()
}

/// Principal eigenvector of `|W|` from a full symmetric eigendecomposition,
/// unit norm with nonnegative sign.
pub fn oracle_eigenvector(w: &DMatrix<f64>) -> Vec<f64> {
    let eig = SymmetricEigen::new(w.map(f64::abs));
    let top = (0..w.nrows()).max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])).unwrap();
    let v = eig.eigenvectors.column(top);
    let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
    v.iter().map(|x| x * sign).collect()
}

pub fn is_connected(w: &DMatrix<f64>) -> bool {
    let d = w.nrows();
    let mut seen = vec![false; d];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..d {
            if v != u && w[(u, v)] != 0.0 && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Leave-one-out 1-nearest-neighbour accuracy under the squared
/// log-Euclidean distance, computed from per-matrix eigendecompositions.
pub fn loo_1nn_lerm(matrices: &[DMatrix<f64>], labels: &[usize]) -> f64 {
    let logs: Vec<DMatrix<f64>> = matrices
        .iter()
        .map(|m| {
            let e = SymmetricEigen::new(m.clone());
            let l = e.eigenvalues.map(|x| x.max(1e-10).ln());
            &e.eigenvectors * DMatrix::from_diagonal(&l) * e.eigenvectors.transpose()
        })
        .collect();
    let n = logs.len();
    let mut correct = 0;
    for i in 0..n {
        let nearest = (0..n)
            .filter(|&j| j != i)
            .min_by(|&a, &b| (&logs[i] - &logs[a]).norm_squared().total_cmp(&(&logs[i] - &logs[b]).norm_squared()))
            .unwrap();
        if labels[nearest] == labels[i] {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}
