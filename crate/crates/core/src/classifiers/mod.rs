//! The five classifier families behind one train/predict interface.

mod boost;
mod forest;
mod logistic;
mod mlp;
mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use boost::{BoostParams, Booster};
pub use forest::{Forest, ForestParams};
pub use logistic::{objective as logistic_objective, LogisticModel, LogisticParams};
pub use mlp::{Layer, Mlp, MlpParams};
pub use svm::{scale_gamma, SvmModel, SvmParams};
pub use tree::{Node, Tree};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "LG")]
    Lg,
    #[serde(rename = "SV")]
    Sv,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "XG")]
    Xg,
    #[serde(rename = "MLP")]
    Mlp,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::Lg,
        ClassifierKind::Sv,
        ClassifierKind::Rf,
        ClassifierKind::Xg,
        ClassifierKind::Mlp,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ClassifierKind::Lg => "LG",
            ClassifierKind::Sv => "SV",
            ClassifierKind::Rf => "RF",
            ClassifierKind::Xg => "XG",
            ClassifierKind::Mlp => "MLP",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown classifier `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum Hyperparams {
    #[serde(rename = "LG")]
    Lg(LogisticParams),
    #[serde(rename = "SV")]
    Sv(SvmParams),
    #[serde(rename = "RF")]
    Rf(ForestParams),
    #[serde(rename = "XG")]
    Xg(BoostParams),
    #[serde(rename = "MLP")]
    Mlp(MlpParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(flatten)]
    pub params: Hyperparams,
    pub seed: u64,
}

impl ClassifierSpec {
    /// Default hyperparameters for `kind`.
    pub fn new(kind: ClassifierKind, seed: u64) -> Self {
        let params = match kind {
            ClassifierKind::Lg => Hyperparams::Lg(LogisticParams::default()),
            ClassifierKind::Sv => Hyperparams::Sv(SvmParams::default()),
            ClassifierKind::Rf => Hyperparams::Rf(ForestParams::default()),
            ClassifierKind::Xg => Hyperparams::Xg(BoostParams::default()),
            ClassifierKind::Mlp => Hyperparams::Mlp(MlpParams::default()),
        };
        ClassifierSpec { params, seed }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self.params {
            Hyperparams::Lg(_) => ClassifierKind::Lg,
            Hyperparams::Sv(_) => ClassifierKind::Sv,
            Hyperparams::Rf(_) => ClassifierKind::Rf,
            Hyperparams::Xg(_) => ClassifierKind::Xg,
            Hyperparams::Mlp(_) => ClassifierKind::Mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.params {
            Hyperparams::Lg(p) => p.validate(),
            Hyperparams::Sv(p) => p.validate(),
            Hyperparams::Rf(p) => p.validate(),
            Hyperparams::Xg(p) => p.validate(),
            Hyperparams::Mlp(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model")]
pub enum FittedModel {
    #[serde(rename = "LG")]
    Lg(LogisticModel),
    #[serde(rename = "SV")]
    Sv(SvmModel),
    #[serde(rename = "RF")]
    Rf(Forest),
    #[serde(rename = "XG")]
    Xg(Booster),
    #[serde(rename = "MLP")]
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub column: String,
    pub importance: f64,
    /// Wald p-value, logistic regression only.
    pub p_value: Option<f64>,
}

pub const ENVELOPE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub version: u32,
    pub spec: ClassifierSpec,
    pub columns: Vec<String>,
    pub model: FittedModel,
}

/// Reorder `x` from `got` column order into `expected` order.
pub fn align_columns(x: &Matrix, expected: &[String], got: &[String]) -> Result<Matrix> {
    if got.len() != x.ncols() {
        return Err(Error::InvalidInput(format!(
            "{} column names for a matrix with {} columns",
            got.len(),
            x.ncols()
        )));
    }
    if expected == got {
        return Ok(x.clone());
    }
    let missing: Vec<String> = expected.iter().filter(|c| !got.contains(c)).cloned().collect();
    let extra: Vec<String> = got.iter().filter(|c| !expected.contains(c)).cloned().collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::ColumnMismatch { missing, extra });
    }
    let idx: Vec<usize> = expected
        .iter()
        .map(|c| got.iter().position(|g| g == c).unwrap())
        .collect();
    Ok(Matrix::from_fn(x.nrows(), expected.len(), |i, j| x[(i, idx[j])]))
}

pub fn train(spec: &ClassifierSpec, x: &Matrix, y: &[u8], columns: &[String]) -> Result<TrainedClassifier> {
    spec.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if columns.len() != x.ncols() {
        return Err(Error::InvalidInput("column names do not match the matrix".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    if y.is_empty() || y.iter().all(|&v| v == y[0]) {
        return Err(Error::InsufficientData("training labels contain a single class".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    let model = match &spec.params {
        Hyperparams::Lg(p) => FittedModel::Lg(logistic::fit(x, y, p)?),
        Hyperparams::Sv(p) => FittedModel::Sv(svm::fit(x, y, p)?),
        Hyperparams::Rf(p) => FittedModel::Rf(forest::fit(x, y, p, spec.seed)?),
        Hyperparams::Xg(p) => FittedModel::Xg(boost::fit(x, y, p)?),
        Hyperparams::Mlp(p) => FittedModel::Mlp(mlp::fit(x, y, p, spec.seed)?),
    };
    Ok(TrainedClassifier {
        version: ENVELOPE_VERSION,
        spec: spec.clone(),
        columns: columns.to_vec(),
        model,
    })
}

impl TrainedClassifier {
    pub fn kind(&self) -> ClassifierKind {
        self.spec.kind()
    }

    /// Class-1 probabilities; `columns` names the columns of `x`.
    pub fn predict_proba(&self, x: &Matrix, columns: &[String]) -> Result<Vec<f64>> {
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        let x = align_columns(x, &self.columns, columns)?;
        Ok(match &self.model {
            FittedModel::Lg(m) => m.predict_proba(&x),
            FittedModel::Sv(m) => m.predict_proba(&x),
            FittedModel::Rf(m) => m.predict_proba(&x),
            FittedModel::Xg(m) => m.predict_proba(&x),
            FittedModel::Mlp(m) => m.predict_proba(&x),
        })
    }

    pub fn predict(&self, x: &Matrix, columns: &[String]) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(x, columns)?
            .into_iter()
            .map(|p| u8::from(p >= 0.5))
            .collect())
    }

    /// LG: absolute coefficients with Wald p-values. RF/XG: normalized total
    /// split gain.
    pub fn feature_importance(&self) -> Result<Vec<Importance>> {
        let rows = |vals: &[f64], pv: Option<&[f64]>| {
            self.columns
                .iter()
                .enumerate()
                .map(|(j, c)| Importance {
                    column: c.clone(),
                    importance: vals[j],
                    p_value: pv.map(|p| p[j]),
                })
                .collect()
        };
        match &self.model {
            FittedModel::Lg(m) => {
                let abs: Vec<f64> = m.coefficients.iter().map(|c| c.abs()).collect();
                Ok(rows(&abs, Some(&m.p_values)))
            }
            FittedModel::Rf(m) => Ok(rows(&m.importances, None)),
            FittedModel::Xg(m) => Ok(rows(&m.importances, None)),
            _ => Err(Error::Unsupported(format!(
                "feature importance for {}",
                self.kind()
            ))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TrainedClassifier = serde_json::from_str(text)?;
        if m.version != ENVELOPE_VERSION {
            return Err(Error::Unsupported(format!("model envelope version {}", m.version)));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn kinds_parse() {
        for k in ClassifierKind::ALL {
            assert_eq!(k.code().to_lowercase().parse::<ClassifierKind>().unwrap(), k);
            assert_eq!(ClassifierSpec::new(k, 0).kind(), k);
        }
        assert!("knn".parse::<ClassifierKind>().is_err());
    }

    #[test]
    fn constant_labels_rejected() {
        let x = Matrix::zeros(4, 1);
        let err = train(&ClassifierSpec::new(ClassifierKind::Lg, 0), &x, &[1, 1, 1, 1], &names(1));
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn column_checks() {
        let x = Matrix::from_row_slice(4, 2, &[0., 1., 1., 0., 0., 2., 2., 0.]);
        let y = [0, 1, 0, 1];
        let m = train(&ClassifierSpec::new(ClassifierKind::Lg, 0), &x, &y, &names(2)).unwrap();
        let swapped = Matrix::from_fn(4, 2, |i, j| x[(i, 1 - j)]);
        let a = m.predict_proba(&x, &names(2)).unwrap();
        let b = m
            .predict_proba(&swapped, &["x1".to_string(), "x0".to_string()])
            .unwrap();
        assert_eq!(a, b);
        match m.predict_proba(&x, &["x0".to_string(), "z".to_string()]) {
            Err(Error::ColumnMismatch { missing, extra }) => {
                assert_eq!(missing, vec!["x1"]);
                assert_eq!(extra, vec!["z"]);
            }
            other => panic!("{other:?}"),
        }
        assert!(m.predict(&Matrix::zeros(0, 2), &names(2)).unwrap().is_empty());
    }

    #[test]
    fn envelope_round_trip() {
        let x = Matrix::from_fn(20, 2, |i, j| ((i * 3 + j) % 7) as f64);
        let y: Vec<u8> = (0..20).map(|i| u8::from(i % 2 == 0)).collect();
        for k in ClassifierKind::ALL {
            let mut spec = ClassifierSpec::new(k, 5);
            if let Hyperparams::Mlp(p) = &mut spec.params {
                p.epochs = 3;
            }
            let m = train(&spec, &x, &y, &names(2)).unwrap();
            let back = TrainedClassifier::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(
                back.predict_proba(&x, &names(2)).unwrap(),
                m.predict_proba(&x, &names(2)).unwrap()
            );
        }
    }

    #[test]
    fn importance_unsupported_for_sv() {
        let x = Matrix::from_fn(10, 1, |i, _| i as f64);
        let y: Vec<u8> = (0..10).map(|i| u8::from(i >= 5)).collect();
        let m = train(&ClassifierSpec::new(ClassifierKind::Sv, 0), &x, &y, &names(1)).unwrap();
        assert!(matches!(m.feature_importance(), Err(Error::Unsupported(_))));
    }
}
