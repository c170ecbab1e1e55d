//! Missing-value imputation and feature standardization.
//!
//! Statistics are computed per matrix position across subjects. Fitting and
//! applying are separate so that held-out subjects can be transformed with
//! statistics taken from the training subjects only.

use nalgebra::DMatrix;

use super::PipelineError;

/// Per-position means (used for imputation) and population standard
/// deviations of the imputed values.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionStats {
    pub mean: DMatrix<f64>,
    pub std: DMatrix<f64>,
}

impl PositionStats {
    pub fn fit(matrices: &[DMatrix<f64>]) -> Result<Self, PipelineError> {
        let first = matrices.first().ok_or(PipelineError::EmptyDataset)?;
        let (r, c) = first.shape();
        let mut mean = DMatrix::zeros(r, c);
        let mut std = DMatrix::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                let vals: Vec<f64> = matrices.iter().map(|m| m[(i, j)]).filter(|v| v.is_finite()).collect();
                if vals.is_empty() {
                    return Err(PipelineError::AllMissingColumn { i, j });
                }
                let mu = vals.iter().sum::<f64>() / vals.len() as f64;
                // Imputed entries sit at the mean and add nothing to the sum of squares.
                let ss: f64 = vals.iter().map(|v| (v - mu) * (v - mu)).sum();
                mean[(i, j)] = mu;
                std[(i, j)] = (ss / matrices.len() as f64).sqrt();
            }
        }
        Ok(Self { mean, std })
    }

    /// Replaces non-finite entries by the fitted mean and re-symmetrizes.
    pub fn impute(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let filled = m.zip_map(&self.mean, |v, mu| if v.is_finite() { v } else { mu });
        (&filled + filled.transpose()) / 2.0
    }

    /// Z-scores an imputed matrix position-wise. Positions with zero spread
    /// map to 0.
    pub fn standardize(&self, imputed: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(imputed.nrows(), imputed.ncols());
        for i in 0..z.nrows() {
            for j in 0..z.ncols() {
                let sd = self.std[(i, j)];
                z[(i, j)] = if sd > f64::EPSILON * self.mean[(i, j)].abs().max(1.0) {
                    (imputed[(i, j)] - self.mean[(i, j)]) / sd
                } else {
                    0.0
                };
            }
        }
        (&z + z.transpose()) / 2.0
    }
}

/// Imputes and standardizes a cohort with its own statistics.
pub fn impute_and_standardize(matrices: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>, PipelineError> {
    let stats = PositionStats::fit(matrices)?;
    Ok(matrices.iter().map(|m| stats.standardize(&stats.impute(m))).collect())
}

/// Fisher z-transform of a correlation matrix; entries are clipped just
/// inside ±1 and the diagonal is set to 0.
pub fn fisher_z(m: &DMatrix<f64>) -> DMatrix<f64> {
    let lim = 1.0 - 1e-7;
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if i == j { 0.0 } else { m[(i, j)].clamp(-lim, lim).atanh() })
}
