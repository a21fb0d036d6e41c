use serde::{Deserialize, Serialize};

use super::{binarize, pearson, same_dims, theme_counts, AnalysisError, Contingency};
use crate::corpus::{Codebook, Dims};
use crate::matrix::{BinaryMatrix, ScoreMatrix, Threshold};

/// Serializes `None` as the string `"n/a"`.
pub(crate) mod na {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_str("n/a"),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Some(x)),
            Raw::Text(t) if t == "n/a" => Ok(None),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected number or \"n/a\", got {t:?}"))),
        }
    }
}

/// Either a scored (machine) or a natively binary (human) coding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "matrix", rename_all = "snake_case")]
pub enum Coding {
    Scores(ScoreMatrix),
    Binary(BinaryMatrix),
}

impl Coding {
    pub fn coder_id(&self) -> &str {
        match self {
            Coding::Scores(m) => m.coder_id(),
            Coding::Binary(m) => m.coder_id(),
        }
    }

    pub fn dims(&self) -> Dims {
        match self {
            Coding::Scores(m) => m.dims(),
            Coding::Binary(m) => m.dims(),
        }
    }

    /// Binary view; scores are cut at `tau`, binary codings pass through.
    pub fn binary_at(&self, tau: Threshold) -> BinaryMatrix {
        match self {
            Coding::Scores(m) => binarize(m, tau),
            Coding::Binary(m) => m.clone(),
        }
    }

    /// Raw cell values: scores in `[0, 100]`, or 0/1.
    pub fn values(&self) -> Vec<f64> {
        match self {
            Coding::Scores(m) => m.values(),
            Coding::Binary(m) => m.values(),
        }
    }

    pub fn is_scored(&self) -> bool {
        matches!(self, Coding::Scores(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub pair: (String, String),
    /// Cut-off applied to scored codings; absent when both are binary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<Threshold>,
    pub percent_agreement: f64,
    #[serde(with = "na")]
    pub phi: Option<f64>,
    #[serde(with = "na")]
    pub kappa: Option<f64>,
    /// Pearson over raw cell values (point-biserial for score vs binary).
    #[serde(with = "na")]
    pub pearson_r: Option<f64>,
    #[serde(with = "na")]
    pub p_value: Option<f64>,
    pub n_cells: usize,
    pub per_theme_counts: [Vec<usize>; 2],
    pub contingency: Contingency,
}

impl AgreementReport {
    pub fn compute(a: &Coding, b: &Coding, tau: Threshold) -> Result<Self, AnalysisError> {
        same_dims(a.dims(), b.dims())?;
        let (ba, bb) = (a.binary_at(tau), b.binary_at(tau));
        let table = Contingency::from_matrices(&ba, &bb)?;
        let n_cells = a.dims().cells();
        let pearson_r = if n_cells >= 3 { pearson(&a.values(), &b.values())? } else { None };
        let p_value = pearson_r
            .filter(|r| r.abs() < 1.0)
            .map(|r| super::correlation_p_value(r, n_cells))
            .transpose()?;
        Ok(Self {
            pair: (a.coder_id().to_string(), b.coder_id().to_string()),
            threshold: (a.is_scored() || b.is_scored()).then_some(tau),
            percent_agreement: table.percent_agreement(),
            phi: table.phi(),
            kappa: table.kappa(),
            pearson_r,
            p_value,
            n_cells,
            per_theme_counts: [theme_counts(&ba), theme_counts(&bb)],
            contingency: table,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongFormRow {
    pub statement: u32,
    pub theme: String,
    pub coder: String,
    pub value: f64,
}

/// Heatmap-ready `statement,theme,coder,value` CSV, one row per cell per coder.
pub fn long_form_csv(codings: &[Coding], codebook: &Codebook) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for coding in codings {
        let values = coding.values();
        let k = coding.dims().themes;
        for (i, v) in values.iter().enumerate() {
            let theme_id = (i % k) as u32 + 1;
            let theme = codebook.theme(theme_id).map_or_else(|| theme_id.to_string(), |t| t.name.clone());
            w.serialize(LongFormRow {
                statement: (i / k) as u32 + 1,
                theme,
                coder: coding.coder_id().to_string(),
                value: *v,
            })?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Theme;

    #[test]
    fn report_renders_undefined_as_na() {
        let dims = Dims::new(2, 2);
        let a = Coding::Binary(BinaryMatrix::from_values("a", dims, &[1, 1, 1, 1]).unwrap());
        let b = Coding::Binary(BinaryMatrix::from_values("b", dims, &[1, 0, 1, 0]).unwrap());
        let r = AgreementReport::compute(&a, &b, Threshold::new(50).unwrap()).unwrap();
        assert_eq!(r.phi, None);
        assert_eq!(r.threshold, None);
        let json = r.to_json();
        assert!(json.contains(r#""phi": "n/a""#));
        let back: AgreementReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn score_vs_binary_uses_point_biserial() {
        let dims = Dims::new(1, 4);
        let s = Coding::Scores(ScoreMatrix::new("m", 1, dims, vec![10, 80, 30, 90]).unwrap());
        let h = Coding::Binary(BinaryMatrix::from_values("h", dims, &[0, 1, 0, 1]).unwrap());
        let r = AgreementReport::compute(&s, &h, Threshold::new(50).unwrap()).unwrap();
        assert_eq!(r.percent_agreement, 1.0);
        assert_eq!(r.phi, Some(1.0));
        let direct = pearson(&[10.0, 80.0, 30.0, 90.0], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.pearson_r, direct);
        assert!(r.p_value.unwrap() > 0.0);
        assert_eq!(r.per_theme_counts, [vec![0, 1, 0, 1], vec![0, 1, 0, 1]]);
    }

    #[test]
    fn long_form_has_one_row_per_cell() {
        let cb = Codebook::new(
            1,
            vec![
                Theme { id: 1, name: "A".into(), description: None },
                Theme { id: 2, name: "B".into(), description: None },
            ],
        )
        .unwrap();
        let m = Coding::Scores(ScoreMatrix::new("m", 1, Dims::new(1, 2), vec![5, 95]).unwrap());
        let csv = long_form_csv(&[m], &cb).unwrap();
        assert_eq!(csv, "statement,theme,coder,value\n1,A,m,5.0\n1,B,m,95.0\n");
    }
}
