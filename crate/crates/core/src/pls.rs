//! Market-only logistic baseline and SIMPLS on its residuals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifiers::{
    align_columns, train, ClassifierSpec, FittedModel, Hyperparams, LogisticParams, TrainedClassifier,
};
use crate::error::{Error, Result};
use crate::linalg::{pearson, Matrix};
use crate::taxonomy::{Category, ThemeTaxonomy};

pub const DEFAULT_COMPONENTS: usize = 5;
pub const BASELINE_MIN_OBS: usize = 100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualKind {
    /// `y - p`
    #[default]
    Response,
    /// `(y - p) / sqrt(p (1 - p))`
    Pearson,
    /// Signed square root of the unit deviance.
    Deviance,
}

#[derive(Debug, Clone)]
pub struct Baseline {
    pub model: TrainedClassifier,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Fit the logistic market-only baseline and return its residuals.
pub fn fit_baseline(
    market: &Matrix,
    columns: &[String],
    labels: &[u8],
    kind: ResidualKind,
) -> Result<Baseline> {
    if market.nrows() < BASELINE_MIN_OBS {
        return Err(Error::InsufficientData(format!(
            "baseline needs at least {BASELINE_MIN_OBS} observations, got {}",
            market.nrows()
        )));
    }
    let spec = ClassifierSpec {
        params: Hyperparams::Lg(LogisticParams::default()),
        seed: 0,
    };
    let model = train(&spec, market, labels, columns)?;
    let fitted = model.predict_proba(market, columns)?;
    let residuals = fitted
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let y = f64::from(y);
            match kind {
                ResidualKind::Response => y - p,
                ResidualKind::Pearson => (y - p) / (p * (1.0 - p)).sqrt().max(1e-12),
                ResidualKind::Deviance => {
                    let ll = if y == 1.0 { p.ln() } else { (1.0 - p).ln() };
                    (y - p).signum() * (-2.0 * ll).sqrt()
                }
            }
        })
        .collect();
    Ok(Baseline {
        model,
        fitted,
        residuals,
    })
}

impl Baseline {
    pub fn coefficients(&self) -> &[f64] {
        match &self.model.model {
            FittedModel::Lg(m) => &m.coefficients,
            _ => unreachable!("baseline is always logistic"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsModel {
    pub columns: Vec<String>,
    pub x_means: Vec<f64>,
    pub y_mean: f64,
    /// `p × A`; scores are `(X - mean) R` and have unit norm on training data.
    pub weights: Matrix,
    /// `p × A`, `P = X'T`.
    pub x_loadings: Matrix,
    /// `q_a = y't_a`.
    pub y_loadings: Vec<f64>,
    /// Training scores, `n × A`.
    pub scores: Matrix,
    /// Fraction of centered target variance captured by each component.
    pub explained: Vec<f64>,
    /// Covariance of the unit-weight score with the target, per component.
    pub covariances: Vec<f64>,
    /// Components asked for; `weights.ncols()` may be smaller.
    pub requested: usize,
    #[serde(default)]
    pub taxonomy_hash: Option<String>,
}

/// SIMPLS for a single target. `x` is centered internally.
pub fn fit_pls(x: &Matrix, columns: &[String], y: &[f64], components: usize) -> Result<PlsModel> {
    let (n, p) = x.shape();
    if columns.len() != p {
        return Err(Error::InvalidInput("column names do not match the matrix".into()));
    }
    if y.len() != n {
        return Err(Error::InvalidInput(format!("{n} rows but {} targets", y.len())));
    }
    if components == 0 {
        return Err(Error::InvalidInput("need at least one component".into()));
    }
    if n <= components {
        return Err(Error::InsufficientData(format!(
            "{n} observations cannot support {components} components"
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in PLS input".into()));
    }
    let x_means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = Matrix::from_fn(n, p, |i, j| x[(i, j)] - x_means[j]);
    let yc = nalgebra::DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let yss = yc.norm_squared();

    let mut s = xc.tr_mul(&yc);
    let s0_norm = s.norm();
    let mut r_cols = Vec::new();
    let mut p_cols = Vec::new();
    let mut t_cols = Vec::new();
    let mut v_cols: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut q = Vec::new();
    let mut covariances = Vec::new();

    for a in 0..components {
        let s_norm = s.norm();
        if !(s_norm > 1e-12 * s0_norm.max(f64::MIN_POSITIVE)) || s0_norm == 0.0 {
            log::warn!("PLS: cross-covariance vanished after {a} of {components} components");
            break;
        }
        let mut r = s.clone();
        let mut t = &xc * &r;
        let t_norm = t.norm();
        if !(t_norm > 1e-12) {
            log::warn!("PLS: degenerate score after {a} of {components} components");
            break;
        }
        covariances.push(s_norm / n as f64);
        t /= t_norm;
        r /= t_norm;
        let pl = xc.tr_mul(&t);
        let qa = yc.dot(&t);
        let mut v = pl.clone();
        // two passes of Gram-Schmidt keep V orthonormal to working precision
        for _ in 0..2 {
            for vb in &v_cols {
                let c = vb.dot(&v);
                v -= vb * c;
            }
        }
        let v_norm = v.norm();
        if v_norm > 0.0 {
            v /= v_norm;
        }
        let vs = v.dot(&s);
        s -= &v * vs;
        for vb in &v_cols {
            let c = vb.dot(&s);
            s -= vb * c;
        }
        r_cols.push(r);
        p_cols.push(pl);
        t_cols.push(t);
        v_cols.push(v);
        q.push(qa);
    }
    if r_cols.is_empty() {
        return Err(Error::Numerical("no PLS component could be extracted".into()));
    }
    let explained = q
        .iter()
        .map(|qa| if yss > 0.0 { qa * qa / yss } else { 0.0 })
        .collect();
    Ok(PlsModel {
        columns: columns.to_vec(),
        x_means,
        y_mean,
        weights: Matrix::from_columns(&r_cols),
        x_loadings: Matrix::from_columns(&p_cols),
        y_loadings: q,
        scores: Matrix::from_columns(&t_cols),
        explained,
        covariances,
        requested: components,
        taxonomy_hash: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedVariance {
    pub fractions: Vec<f64>,
    pub cumulative: f64,
    pub threshold: f64,
    pub passes: bool,
}

impl PlsModel {
    pub fn n_components(&self) -> usize {
        self.weights.ncols()
    }

    pub fn component_names(&self, prefix: &str) -> Vec<String> {
        (1..=self.n_components()).map(|a| format!("{prefix}{a}")).collect()
    }

    /// Scores `(X - mean) R` for new rows whose columns are named `columns`.
    pub fn transform(&self, x: &Matrix, columns: &[String]) -> Result<Matrix> {
        let x = align_columns(x, &self.columns, columns)?;
        let centered = Matrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - self.x_means[j]);
        Ok(centered * &self.weights)
    }

    pub fn explained_variance_check(&self, threshold: f64) -> ExplainedVariance {
        let cumulative = self.explained.iter().take(DEFAULT_COMPONENTS).sum::<f64>();
        ExplainedVariance {
            fractions: self.explained.clone(),
            cumulative,
            threshold,
            passes: cumulative >= threshold,
        }
    }

    /// Share of absolute x-loading mass per retained category for component
    /// `component` (zero-based).
    pub fn category_profile(&self, tax: &ThemeTaxonomy, component: usize) -> Result<CategoryLoadingProfile> {
        if component >= self.n_components() {
            return Err(Error::InvalidInput(format!(
                "component {component} out of range (model has {})",
                self.n_components()
            )));
        }
        let mut shares: BTreeMap<Category, f64> = Category::retained().map(|c| (c, 0.0)).collect();
        let mut total = 0.0;
        for (j, col) in self.columns.iter().enumerate() {
            let Some(cat) = tax.reporting_category(col).filter(|c| !c.is_descriptive()) else {
                continue;
            };
            let l = self.x_loadings[(j, component)].abs();
            *shares.get_mut(&cat).expect("retained category") += l;
            total += l;
        }
        if total > 0.0 {
            for v in shares.values_mut() {
                *v /= total;
            }
        }
        Ok(CategoryLoadingProfile { component, shares })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryLoadingProfile {
    pub component: usize,
    pub shares: BTreeMap<Category, f64>,
}

impl CategoryLoadingProfile {
    /// Rows `component,category,share` for all profiles.
    pub fn write_csv<W: std::io::Write>(profiles: &[CategoryLoadingProfile], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["component", "category", "share"])?;
        for p in profiles {
            for (c, s) in &p.shares {
                w.write_record([(p.component + 1).to_string(), c.label().to_string(), s.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<profile csv>", e))?;
        Ok(())
    }
}

/// Largest absolute correlation between any score column and any market
/// column. Logistic residuals are not exactly orthogonal to the market
/// features, so this is reported rather than asserted.
pub fn market_correlation_diagnostic(scores: &Matrix, market: &Matrix) -> f64 {
    let mut worst = 0.0_f64;
    for a in 0..scores.ncols() {
        let s: Vec<f64> = scores.column(a).iter().copied().collect();
        for j in 0..market.ncols() {
            let m: Vec<f64> = market.column(j).iter().copied().collect();
            worst = worst.max(pearson(&s, &m).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("c{j}")).collect()
    }

    fn random(seed: u64, n: usize, p: usize) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn first_weight_is_normalized_cross_product() {
        let (x, y) = random(1, 20, 10);
        let m = fit_pls(&x, &names(10), &y, 5).unwrap();
        let xc = Matrix::from_fn(20, 10, |i, j| x[(i, j)] - m.x_means[j]);
        let yc = nalgebra::DVector::from_iterator(20, y.iter().map(|v| v - m.y_mean));
        let xty = xc.tr_mul(&yc).normalize();
        let r1 = m.weights.column(0).normalize();
        assert!((r1 - xty).amax() < 1e-8);
    }

    #[test]
    fn scores_are_orthonormal_and_transform_reproduces_them() {
        let (x, y) = random(2, 40, 8);
        let m = fit_pls(&x, &names(8), &y, 5).unwrap();
        let gram = m.scores.tr_mul(&m.scores);
        assert!((gram - Matrix::identity(5, 5)).amax() < 1e-10);
        let t = m.transform(&x, &names(8)).unwrap();
        assert!((t - &m.scores).amax() < 1e-10);
        for w in m.covariances.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }

    #[test]
    fn single_column_gives_one_component() {
        let x = Matrix::from_column_slice(6, 1, &[1., 2., 4., 3., 0., 5.]);
        let y = [0.1, 0.3, 0.2, 0.5, -0.1, 0.4];
        let m = fit_pls(&x, &names(1), &y, 5).unwrap();
        assert_eq!(m.n_components(), 1);
        let centered: Vec<f64> = (0..6).map(|i| x[(i, 0)] - 2.5).collect();
        let ratio = m.scores[(0, 0)] / centered[0];
        for i in 0..6 {
            assert!((m.scores[(i, 0)] - ratio * centered[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_row_after_centering_scores_zero() {
        let (x, y) = random(3, 30, 4);
        let m = fit_pls(&x, &names(4), &y, 3).unwrap();
        let row = Matrix::from_row_slice(1, 4, &m.x_means);
        let t = m.transform(&row, &names(4)).unwrap();
        assert!(t.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn two_component_signal_is_captured() {
        // orthogonal columns make the Krylov space of X'y contain the truth
        let (raw, _) = random(4, 50, 10);
        let centered = Matrix::from_fn(50, 10, |i, j| raw[(i, j)] - raw.column(j).mean());
        let q = centered.qr().q();
        let x = Matrix::from_fn(50, 10, |i, j| q[(i, j)] * (1.0 + j as f64));
        let y: Vec<f64> = (0..50).map(|i| 2.0 * x[(i, 0)] - x[(i, 1)]).collect();
        let m = fit_pls(&x, &names(10), &y, 5).unwrap();
        assert!(m.explained[0] + m.explained[1] > 0.999);
        assert!(m.explained_variance_check(0.8).passes);
        assert!(m.explained_variance_check(0.0).passes);
    }

    #[test]
    fn noise_target_explains_little() {
        let (x, y) = random(5, 400, 30);
        let m = fit_pls(&x, &names(30), &y, 5).unwrap();
        assert!(!m.explained_variance_check(0.8).passes);
    }

    #[test]
    fn column_mismatch_is_reported() {
        let (x, y) = random(6, 20, 3);
        let m = fit_pls(&x, &names(3), &y, 2).unwrap();
        let err = m.transform(&x, &["c0".into(), "c1".into(), "zz".into()]);
        assert!(matches!(err, Err(Error::ColumnMismatch { .. })));
    }

    #[test]
    fn profile_sums_to_one() {
        let tax = ThemeTaxonomy::default_rules();
        let cols: Vec<String> = ["ECON_INFLATION", "ECON_DEBT", "KILL", "TAX_FNCACT_PRESIDENT"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Matrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..30).map(|i| x[(i, 0)] + x[(i, 1)]).collect();
        let m = fit_pls(&x, &cols, &y, 2).unwrap();
        let prof = m.category_profile(&tax, 0).unwrap();
        assert_eq!(prof.shares.len(), 25);
        assert!((prof.shares.values().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(prof.shares.values().all(|&s| s >= 0.0));
        let top = prof.shares.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(*top.0, Category::Ecofin);
        assert!(m.category_profile(&tax, 2).is_err());
    }

    #[test]
    fn baseline_residuals_match_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Matrix::from_fn(150, 2, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<u8> = (0..150)
            .map(|i| u8::from(x[(i, 0)] + rng.random_range(-1.0..1.0) > 0.0))
            .collect();
        let b = fit_baseline(&x, &names(2), &y, ResidualKind::Response).unwrap();
        let direct: f64 = y.iter().zip(&b.fitted).map(|(&yi, p)| f64::from(yi) - p).sum::<f64>() / 150.0;
        let mean = b.residuals.iter().sum::<f64>() / 150.0;
        assert!((mean - direct).abs() < 1e-12);
        assert!(mean.abs() < 1e-6);
        assert!(b.residuals.iter().all(|r| r.abs() < 1.0));
        assert!(fit_baseline(&row_head(&x, 50), &names(2), &y[..50], ResidualKind::Response).is_err());
    }

    fn row_head(m: &Matrix, n: usize) -> Matrix {
        m.rows(0, n).into_owned()
    }
}
