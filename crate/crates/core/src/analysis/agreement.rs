use serde::{Deserialize, Serialize};

use super::{same_dims, AnalysisError};
use crate::matrix::BinaryMatrix;

/// 2x2 table over paired cells: `n10` counts cells present in `a` only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl Contingency {
    pub fn from_matrices(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<Self, AnalysisError> {
        same_dims(a.dims(), b.dims())?;
        Ok(Self::from_pairs(a.bits().iter().copied().zip(b.bits().iter().copied())))
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut t = Self::default();
        for pair in pairs {
            match pair {
                (true, true) => t.n11 += 1,
                (true, false) => t.n10 += 1,
                (false, true) => t.n01 += 1,
                (false, false) => t.n00 += 1,
            }
        }
        t
    }

    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    pub fn agreements(&self) -> u64 {
        self.n11 + self.n00
    }

    pub fn percent_agreement(&self) -> f64 {
        self.agreements() as f64 / self.total() as f64
    }

    /// `(n11 n00 - n10 n01) / sqrt(r1 r0 c1 c0)`; `None` when a margin is zero.
    pub fn phi(&self) -> Option<f64> {
        let (r1, r0) = (self.n11 + self.n10, self.n01 + self.n00);
        let (c1, c0) = (self.n11 + self.n01, self.n10 + self.n00);
        let margins = r1 as u128 * r0 as u128 * c1 as u128 * c0 as u128;
        if margins == 0 {
            return None;
        }
        let det = self.n11 as i128 * self.n00 as i128 - self.n10 as i128 * self.n01 as i128;
        Some((det as f64 / (margins as f64).sqrt()).clamp(-1.0, 1.0))
    }

    /// Cohen's kappa, evaluated as one integer ratio
    /// `(n·agree − Σ r c) / (n² − Σ r c)`; `None` when chance agreement is 1.
    pub fn kappa(&self) -> Option<f64> {
        let n = self.total() as i128;
        let (r1, r0) = ((self.n11 + self.n10) as i128, (self.n01 + self.n00) as i128);
        let (c1, c0) = ((self.n11 + self.n01) as i128, (self.n10 + self.n00) as i128);
        let chance = r1 * c1 + r0 * c0;
        let denom = n * n - chance;
        if denom == 0 {
            return None;
        }
        Some((n * self.agreements() as i128 - chance) as f64 / denom as f64)
    }
}

/// Fraction of cells on which both coders agree.
pub fn percent_agreement(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<f64, AnalysisError> {
    Ok(Contingency::from_matrices(a, b)?.percent_agreement())
}

/// Phi coefficient of the flattened matrices.
pub fn phi_correlation(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<Option<f64>, AnalysisError> {
    Ok(Contingency::from_matrices(a, b)?.phi())
}

pub fn cohen_kappa(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<Option<f64>, AnalysisError> {
    Ok(Contingency::from_matrices(a, b)?.kappa())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Dims;

    fn flat(values: &[i64]) -> BinaryMatrix {
        BinaryMatrix::from_values("x", Dims::new(1, values.len()), values).unwrap()
    }

    #[test]
    fn hand_counted_agreement() {
        let a = BinaryMatrix::from_values("a", Dims::new(2, 2), &[1, 0, 1, 1]).unwrap();
        let b = BinaryMatrix::from_values("b", Dims::new(2, 2), &[1, 1, 0, 1]).unwrap();
        assert_eq!(percent_agreement(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn identical_and_complementary() {
        let a = flat(&[1, 0, 1, 1, 0]);
        let c = flat(&[0, 1, 0, 0, 1]);
        assert_eq!(percent_agreement(&a, &a).unwrap(), 1.0);
        assert_eq!(percent_agreement(&a, &c).unwrap(), 0.0);
        assert_eq!(phi_correlation(&a, &a).unwrap(), Some(1.0));
        assert_eq!(phi_correlation(&a, &c).unwrap(), Some(-1.0));
        assert_eq!(cohen_kappa(&a, &a).unwrap(), Some(1.0));
    }

    #[test]
    fn contingency_2_1_1_2() {
        // n11=2, n10=1, n01=1, n00=2 over six cells.
        let a = flat(&[1, 1, 1, 0, 0, 0]);
        let b = flat(&[1, 1, 0, 1, 0, 0]);
        let t = Contingency::from_matrices(&a, &b).unwrap();
        assert_eq!(t, Contingency { n11: 2, n10: 1, n01: 1, n00: 2 });
        assert!((t.phi().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((t.kappa().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn undefined_cases() {
        let ones = flat(&[1, 1, 1]);
        let mixed = flat(&[1, 0, 1]);
        assert_eq!(phi_correlation(&ones, &mixed).unwrap(), None);
        assert_eq!(cohen_kappa(&ones, &ones).unwrap(), None);
        // One constant coder still has chance agreement below 1.
        assert_eq!(cohen_kappa(&ones, &mixed).unwrap(), Some(0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let a = flat(&[1, 0]);
        let b = flat(&[1, 0, 1]);
        assert!(matches!(percent_agreement(&a, &b), Err(AnalysisError::DimensionMismatch { .. })));
        assert!(phi_correlation(&a, &b).is_err());
        assert!(cohen_kappa(&a, &b).is_err());
    }
}
