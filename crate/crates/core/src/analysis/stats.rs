use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::AnalysisError;
use crate::corpus::Dims;
use crate::matrix::ScoreMatrix;

/// Sample Pearson correlation; `None` if either vector is constant.
///
/// Binary inputs give phi; one binary and one continuous input give the
/// point-biserial coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 3 {
        return Err(AnalysisError::TooFewObservations(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Two-tailed p-value for a sample correlation `r` over `n` pairs.
///
/// With `t = r·sqrt(n−2)/sqrt(1−r²)` and `ν = n − 2`, the two-tailed tail
/// mass of Student's t is the regularized incomplete beta `I_x(ν/2, 1/2)`
/// at `x = ν/(ν+t²) = 1 − r²`.
pub fn correlation_p_value(r: f64, n: usize) -> Result<f64, AnalysisError> {
    if n < 3 {
        return Err(AnalysisError::TooFewObservations(n));
    }
    if r.is_nan() || r.abs() >= 1.0 {
        return Err(AnalysisError::CorrelationOutOfRange(r));
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    let dof = (n - 2) as f64;
    let x = (1.0 - r) * (1.0 + r);
    Ok(beta_reg(dof / 2.0, 0.5, x).clamp(f64::MIN_POSITIVE, 1.0))
}

/// Z-scored matrix (population of all cells, sample standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardized {
    pub coder_id: String,
    pub dims: Dims,
    pub values: Vec<f64>,
}

/// `None` for a constant matrix or a single cell.
pub fn standardize(scores: &ScoreMatrix) -> Option<Standardized> {
    let values = scores.values();
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss == 0.0 {
        return None;
    }
    let sd = (ss / (n - 1) as f64).sqrt();
    Some(Standardized {
        coder_id: scores.coder_id().to_string(),
        dims: scores.dims(),
        values: values.iter().map(|v| (v - mean) / sd).collect(),
    })
}
