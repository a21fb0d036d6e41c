//! Data-parallel sweeps over thresholds and coder pairs.
//!
//! With the `parallel` feature these run on rayon's global pool; without it,
//! or with [`Exec::Sequential`], they run on the calling thread. Both paths
//! produce identical output.

use serde::{Deserialize, Serialize};

use super::report::{na, AgreementReport, Coding};
use super::{binarize, same_dims, AnalysisError, Contingency};
use crate::matrix::{BinaryMatrix, ScoreMatrix, Threshold};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Maps `f` over `items` preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: Threshold,
    pub percent_agreement: f64,
    #[serde(with = "na")]
    pub phi: Option<f64>,
    #[serde(with = "na")]
    pub kappa: Option<f64>,
    /// Cells present in the binarized scores at this threshold.
    pub assigned: usize,
}

/// Binarizes `scores` at each grid threshold and compares with `reference`.
pub fn threshold_sweep(
    scores: &ScoreMatrix,
    reference: &BinaryMatrix,
    grid: &[Threshold],
) -> Result<Vec<SweepPoint>, AnalysisError> {
    threshold_sweep_with(Exec::default(), scores, reference, grid)
}

pub fn threshold_sweep_with(
    exec: Exec,
    scores: &ScoreMatrix,
    reference: &BinaryMatrix,
    grid: &[Threshold],
) -> Result<Vec<SweepPoint>, AnalysisError> {
    if grid.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(AnalysisError::UnsortedGrid);
    }
    same_dims(scores.dims(), reference.dims())?;
    Ok(exec.map(grid, |&tau| {
        let b = binarize(scores, tau);
        let t = Contingency::from_matrices(&b, reference).expect("dimensions checked");
        SweepPoint {
            tau,
            percent_agreement: t.percent_agreement(),
            phi: t.phi(),
            kappa: t.kappa(),
            assigned: b.assigned(),
        }
    }))
}

/// Reports for every unordered pair `(i, j)`, `i < j`, in lexicographic order.
pub fn agreement_table(
    exec: Exec,
    codings: &[Coding],
    tau: Threshold,
) -> Result<Vec<AgreementReport>, AnalysisError> {
    let pairs: Vec<(usize, usize)> = (0..codings.len())
        .flat_map(|i| (i + 1..codings.len()).map(move |j| (i, j)))
        .collect();
    exec.map(&pairs, |&(i, j)| AgreementReport::compute(&codings[i], &codings[j], tau))
        .into_iter()
        .collect()
}
