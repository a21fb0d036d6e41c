//! Thresholding, agreement and correlation statistics.
//!
//! Every function here is pure. Undefined coefficients (a constant input
//! vector, or chance agreement of exactly 1 for kappa) come back as `None`
//! and are rendered `"n/a"` in reports.

mod agreement;
pub mod batch;
mod report;
mod stats;

use thiserror::Error;

use crate::corpus::Dims;
use crate::matrix::{BinaryMatrix, ScoreMatrix, Threshold};

pub use agreement::{cohen_kappa, percent_agreement, phi_correlation, Contingency};
pub use batch::{agreement_table, threshold_sweep, threshold_sweep_with, Exec, SweepPoint};
pub use report::{long_form_csv, AgreementReport, Coding, LongFormRow};
pub use stats::{correlation_p_value, pearson, standardize, Standardized};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: Dims, b: Dims },
    #[error("vector lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least 3 observations, got {0}")]
    TooFewObservations(usize),
    #[error("correlation {0} must lie strictly inside (-1, 1)")]
    CorrelationOutOfRange(f64),
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("threshold grid must be sorted ascending")]
    UnsortedGrid,
}

/// Present iff `score >= tau`; the boundary value counts as present.
pub fn binarize(scores: &ScoreMatrix, tau: Threshold) -> BinaryMatrix {
    let bits = scores.scores().iter().map(|&s| s >= tau.value()).collect();
    BinaryMatrix::new(scores.coder_id(), scores.dims(), bits)
        .expect("dimensions come from a valid score matrix")
        .with_threshold(tau)
}

/// Number of statements assigned each theme, indexed by theme id - 1.
pub fn theme_counts(m: &BinaryMatrix) -> Vec<usize> {
    let k = m.dims().themes;
    let mut counts = vec![0; k];
    for row in m.bits().chunks(k) {
        for (t, &b) in row.iter().enumerate() {
            counts[t] += b as usize;
        }
    }
    counts
}

pub(crate) fn same_dims(a: Dims, b: Dims) -> Result<(), AnalysisError> {
    if a == b {
        Ok(())
    } else {
        Err(AnalysisError::DimensionMismatch { a, b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Cell;

    fn tau(v: i64) -> Threshold {
        Threshold::new(v).unwrap()
    }

    #[test]
    fn boundary_score_is_present() {
        let m = ScoreMatrix::new("m", 1, Dims::new(1, 3), vec![69, 70, 71]).unwrap();
        let b = binarize(&m, tau(70));
        assert_eq!(b.bits(), &[false, true, true]);
        assert_eq!(b.threshold_used(), Some(tau(70)));
        assert_eq!(b.coder_id(), "m");
    }

    #[test]
    fn all_zero_scores_are_absent_above_zero() {
        let m = ScoreMatrix::new("m", 1, Dims::new(17, 11), vec![0; 187]).unwrap();
        for t in [1, 50, 100] {
            assert_eq!(binarize(&m, tau(t)).assigned(), 0);
        }
        assert_eq!(binarize(&m, tau(0)).assigned(), 187);
    }

    #[test]
    fn diagonal_counts() {
        let m = BinaryMatrix::from_fn("h", Dims::new(3, 3), |c| c.statement == c.theme).unwrap();
        assert_eq!(theme_counts(&m), vec![1, 1, 1]);
        let ones = BinaryMatrix::from_fn("h", Dims::new(17, 11), |_| true).unwrap();
        assert_eq!(theme_counts(&ones), vec![17; 11]);
        assert_eq!(ones.get(Cell::new(17, 11)), Some(true));
    }
}
