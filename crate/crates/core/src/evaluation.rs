//! Walk-forward comparison of narrative-augmented models against market-only
//! benchmarks, and the result tables built from it.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::classifiers::{train, ClassifierKind, ClassifierSpec};
use crate::error::{Error, Result};
use crate::linalg::{hstack, Matrix};
use crate::panel::{CountryDataset, Scaler};
use crate::pls::{fit_baseline, fit_pls, market_correlation_diagnostic, ResidualKind, BASELINE_MIN_OBS};
use crate::seed;
use crate::stats::{mcnemar, precision_recall_f1, Prf, TestResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Range<usize>,
    pub test: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub k: usize,
    pub folds: Vec<Fold>,
}

/// Split `0..n` into `k + 1` contiguous blocks, the first `n % (k + 1)`
/// blocks one longer; split `i` trains on blocks `1..=i` and tests on block
/// `i + 1`.
pub fn walk_forward_splits(n: usize, k: usize) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::InvalidInput("need at least one split".into()));
    }
    if n < k + 1 {
        return Err(Error::InsufficientData(format!(
            "{n} observations cannot make {} blocks",
            k + 1
        )));
    }
    let base = n / (k + 1);
    let extra = n % (k + 1);
    let mut bounds = vec![0];
    for b in 0..=k {
        let len = base + usize::from(b < extra);
        bounds.push(bounds[b] + len);
    }
    let folds = (1..=k)
        .map(|i| Fold {
            train: 0..bounds[i],
            test: bounds[i]..bounds[i + 1],
        })
        .collect();
    Ok(FoldPlan { n, k, folds })
}

/// Where preprocessing scalers are fitted. `FullSample` leaks test data and
/// exists only to show that the harness can tell the difference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalerScope {
    #[default]
    TrainOnly,
    FullSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub components: usize,
    pub folds: usize,
    pub residual: ResidualKind,
    pub scaler_scope: ScalerScope,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            components: crate::pls::DEFAULT_COMPONENTS,
            folds: 5,
            residual: ResidualKind::Response,
            scaler_scope: ScalerScope::TrainOnly,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<Prf> for Metrics {
    fn from(p: Prf) -> Self {
        Metrics {
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train: Range<usize>,
    pub test: Range<usize>,
    /// Reason the fold was not scored.
    pub skipped: Option<String>,
    pub model: Option<Metrics>,
    pub benchmark: Option<Metrics>,
    /// Cumulative target variance explained by the fold's PLS components.
    pub pls_explained: Option<f64>,
    /// Largest |corr| between fold PLS scores and market features.
    pub pls_market_corr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub country: String,
    pub kind: ClassifierKind,
    pub folds: Vec<FoldResult>,
    pub model: Metrics,
    pub benchmark: Metrics,
    pub delta_f1: f64,
    /// Model right / benchmark wrong, and the reverse, on pooled test rows.
    pub discordant: (u64, u64),
    pub mcnemar: TestResult,
    pub n_test: usize,
}

pub fn delta_f1(model_f1: f64, benchmark_f1: f64) -> f64 {
    model_f1 - benchmark_f1
}

fn mean_metrics(ms: &[Metrics]) -> Metrics {
    let n = ms.len() as f64;
    Metrics {
        precision: ms.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: ms.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: ms.iter().map(|m| m.f1).sum::<f64>() / n,
    }
}

impl CvReport {
    /// Recompute the summary from the per-fold fields.
    pub fn recomputed_delta(&self) -> f64 {
        let scored: Vec<&FoldResult> = self.folds.iter().filter(|f| f.skipped.is_none()).collect();
        let m: Vec<Metrics> = scored.iter().map(|f| f.model.unwrap()).collect();
        let b: Vec<Metrics> = scored.iter().map(|f| f.benchmark.unwrap()).collect();
        delta_f1(mean_metrics(&m).f1, mean_metrics(&b).f1)
    }
}

/// Fit on `fit_rows`, apply to all rows.
fn scale(m: &Matrix, fit_rows: Range<usize>, names: &[String]) -> Result<Matrix> {
    Scaler::fit(m, fit_rows, names)?.apply(m)
}

/// Out-of-fold predictions of one fold.
struct FoldPredictions {
    model: Vec<u8>,
    benchmark: Vec<u8>,
    pls_explained: f64,
    pls_market_corr: f64,
}

fn run_fold(
    data: &CountryDataset,
    fold: &Fold,
    fold_index: usize,
    kind: ClassifierKind,
    cfg: &ExperimentConfig,
) -> Result<FoldPredictions> {
    let n = data.len();
    let tr = fold.train.clone();
    let te = fold.test.clone();
    let y = &data.labels.values;
    let fit_rows = match cfg.scaler_scope {
        ScalerScope::TrainOnly => tr.clone(),
        ScalerScope::FullSample => 0..n,
    };
    let market_names = data.market.names();
    let market = scale(&data.market.values, fit_rows.clone(), &market_names)?;

    // theme columns flat over the fit window carry nothing and cannot be scaled
    let theme_all = &data.themes.values;
    let keep: Vec<usize> = (0..theme_all.ncols())
        .filter(|&j| {
            let first = theme_all[(fit_rows.start, j)];
            fit_rows.clone().any(|i| theme_all[(i, j)] != first)
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::InsufficientData("no theme column varies in the training window".into()));
    }
    let theme_names: Vec<String> = keep.iter().map(|&j| data.themes.columns[j].name.clone()).collect();
    let themes_raw = Matrix::from_fn(n, keep.len(), |i, j| theme_all[(i, keep[j])]);
    let themes = scale(&themes_raw, fit_rows.clone(), &theme_names)?;

    let m_tr = market.rows(tr.start, tr.len()).into_owned();
    let m_te = market.rows(te.start, te.len()).into_owned();
    let y_tr = &y[tr.clone()];

    let baseline = fit_baseline(&m_tr, &market_names, y_tr, cfg.residual)?;
    let th_tr = themes.rows(tr.start, tr.len()).into_owned();
    let th_te = themes.rows(te.start, te.len()).into_owned();
    let pls = fit_pls(&th_tr, &theme_names, &baseline.residuals, cfg.components)?;
    let pls_names = pls.component_names(&format!("{}_PLS", data.country));
    let s_tr = pls.transform(&th_tr, &theme_names)?;
    let s_te = pls.transform(&th_te, &theme_names)?;
    let score_scaler = Scaler::fit(&s_tr, 0..s_tr.nrows(), &pls_names)?;
    let s_tr = score_scaler.apply(&s_tr)?;
    let s_te = score_scaler.apply(&s_te)?;

    let seed = seed::derive(cfg.seed, &["evaluate", &data.country, kind.code(), &fold_index.to_string()]);
    let spec = ClassifierSpec::new(kind, seed);

    let bench = train(&spec, &m_tr, y_tr, &market_names)?;
    let bench_pred = bench.predict(&m_te, &market_names)?;

    let mut full_names = market_names.clone();
    full_names.extend(pls_names);
    let model = train(&spec, &hstack(&m_tr, &s_tr), y_tr, &full_names)?;
    let model_pred = model.predict(&hstack(&m_te, &s_te), &full_names)?;

    Ok(FoldPredictions {
        model: model_pred,
        benchmark: bench_pred,
        pls_explained: pls.explained.iter().sum(),
        pls_market_corr: market_correlation_diagnostic(&s_tr, &m_tr),
    })
}

/// Narrative-augmented `kind` against its market-only benchmark on shared
/// walk-forward folds.
pub fn run_comparison(data: &CountryDataset, kind: ClassifierKind, cfg: &ExperimentConfig) -> Result<CvReport> {
    let plan = walk_forward_splits(data.len(), cfg.folds)?;
    run_with_plan(data, kind, cfg, &plan)
}

pub fn run_with_plan(
    data: &CountryDataset,
    kind: ClassifierKind,
    cfg: &ExperimentConfig,
    plan: &FoldPlan,
) -> Result<CvReport> {
    if plan.n != data.len() {
        return Err(Error::InvalidInput(format!(
            "fold plan covers {} rows, dataset has {}",
            plan.n,
            data.len()
        )));
    }
    let y = &data.labels.values;
    let mut folds = Vec::new();
    let mut pooled_model = Vec::new();
    let mut pooled_bench = Vec::new();
    let mut pooled_truth = Vec::new();
    for (i, fold) in plan.folds.iter().enumerate() {
        let y_tr = &y[fold.train.clone()];
        let skip = if fold.train.len() < BASELINE_MIN_OBS {
            Some(format!(
                "{} training rows, baseline needs {BASELINE_MIN_OBS}",
                fold.train.len()
            ))
        } else if y_tr.iter().all(|&v| v == y_tr[0]) {
            Some("single-class training labels".to_string())
        } else {
            None
        };
        if let Some(reason) = skip {
            log::warn!("{} {kind} fold {}: skipped, {reason}", data.country, i + 1);
            folds.push(FoldResult {
                fold: i + 1,
                train: fold.train.clone(),
                test: fold.test.clone(),
                skipped: Some(reason),
                model: None,
                benchmark: None,
                pls_explained: None,
                pls_market_corr: None,
            });
            continue;
        }
        let p = run_fold(data, fold, i + 1, kind, cfg)?;
        let truth = &y[fold.test.clone()];
        folds.push(FoldResult {
            fold: i + 1,
            train: fold.train.clone(),
            test: fold.test.clone(),
            skipped: None,
            model: Some(precision_recall_f1(&p.model, truth, 1).into()),
            benchmark: Some(precision_recall_f1(&p.benchmark, truth, 1).into()),
            pls_explained: Some(p.pls_explained),
            pls_market_corr: Some(p.pls_market_corr),
        });
        pooled_model.extend(p.model);
        pooled_bench.extend(p.benchmark);
        pooled_truth.extend_from_slice(truth);
    }
    let scored: Vec<&FoldResult> = folds.iter().filter(|f| f.skipped.is_none()).collect();
    if scored.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} {kind}: only {} usable folds",
            data.country,
            scored.len()
        )));
    }
    let model = mean_metrics(&scored.iter().map(|f| f.model.unwrap()).collect::<Vec<_>>());
    let benchmark = mean_metrics(&scored.iter().map(|f| f.benchmark.unwrap()).collect::<Vec<_>>());
    let mut b = 0;
    let mut c = 0;
    for ((m, bm), t) in pooled_model.iter().zip(&pooled_bench).zip(&pooled_truth) {
        match (m == t, bm == t) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(CvReport {
        country: data.country.clone(),
        kind,
        folds,
        delta_f1: delta_f1(model.f1, benchmark.f1),
        model,
        benchmark,
        discordant: (b, c),
        mcnemar: mcnemar(&pooled_model, &pooled_bench, &pooled_truth)?,
        n_test: pooled_truth.len(),
    })
}

/// Country × classifier grid of values; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub title: String,
    pub countries: Vec<String>,
    pub kinds: Vec<ClassifierKind>,
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableKind {
    DeltaF1,
    F1,
    Recall,
    Precision,
    BenchmarkF1,
    BenchmarkRecall,
    BenchmarkPrecision,
    McNemarStatistic,
    McNemarP,
}

impl TableKind {
    pub const ALL: [TableKind; 9] = [
        TableKind::DeltaF1,
        TableKind::F1,
        TableKind::Recall,
        TableKind::Precision,
        TableKind::BenchmarkF1,
        TableKind::BenchmarkRecall,
        TableKind::BenchmarkPrecision,
        TableKind::McNemarStatistic,
        TableKind::McNemarP,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TableKind::DeltaF1 => "table1_delta_f1.csv",
            TableKind::F1 => "table2_f1.csv",
            TableKind::Recall => "table3_recall.csv",
            TableKind::Precision => "table4_precision.csv",
            TableKind::BenchmarkF1 => "table5_benchmark_f1.csv",
            TableKind::BenchmarkRecall => "table6_benchmark_recall.csv",
            TableKind::BenchmarkPrecision => "table7_benchmark_precision.csv",
            TableKind::McNemarStatistic => "table8_mcnemar_statistic.csv",
            TableKind::McNemarP => "table8_mcnemar_p.csv",
        }
    }

    fn extract(self, r: &CvReport) -> f64 {
        match self {
            TableKind::DeltaF1 => r.delta_f1,
            TableKind::F1 => r.model.f1,
            TableKind::Recall => r.model.recall,
            TableKind::Precision => r.model.precision,
            TableKind::BenchmarkF1 => r.benchmark.f1,
            TableKind::BenchmarkRecall => r.benchmark.recall,
            TableKind::BenchmarkPrecision => r.benchmark.precision,
            TableKind::McNemarStatistic => r.mcnemar.statistic,
            TableKind::McNemarP => r.mcnemar.p_value,
        }
    }
}

impl ResultTable {
    pub fn from_reports(kind: TableKind, countries: &[String], kinds: &[ClassifierKind], reports: &[CvReport]) -> Self {
        let lookup: BTreeMap<(&str, ClassifierKind), &CvReport> =
            reports.iter().map(|r| ((r.country.as_str(), r.kind), r)).collect();
        ResultTable {
            title: format!("{kind:?}"),
            countries: countries.to_vec(),
            kinds: kinds.to_vec(),
            values: countries
                .iter()
                .map(|c| {
                    kinds
                        .iter()
                        .map(|k| lookup.get(&(c.as_str(), *k)).map(|r| kind.extract(r)))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn get(&self, country: &str, kind: ClassifierKind) -> Option<f64> {
        let i = self.countries.iter().position(|c| c == country)?;
        let j = self.kinds.iter().position(|k| *k == kind)?;
        self.values[i][j]
    }

    /// Cellwise `model - benchmark` over matching labels.
    pub fn difference(title: &str, model: &ResultTable, benchmark: &ResultTable) -> Result<ResultTable> {
        if model.countries != benchmark.countries || model.kinds != benchmark.kinds {
            return Err(Error::InvalidInput("tables have different row or column labels".into()));
        }
        let values = model
            .values
            .iter()
            .zip(&benchmark.values)
            .map(|(mr, br)| {
                mr.iter()
                    .zip(br)
                    .map(|(m, b)| Some(delta_f1((*m)?, (*b)?)))
                    .collect()
            })
            .collect();
        Ok(ResultTable {
            title: title.to_owned(),
            countries: model.countries.clone(),
            kinds: model.kinds.clone(),
            values,
        })
    }

    /// `country,LG,SV,...` with four decimals; empty cells for missing.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["country".to_string()];
        header.extend(self.kinds.iter().map(|k| k.code().to_string()));
        w.write_record(&header)?;
        for (c, row) in self.countries.iter().zip(&self.values) {
            let mut rec = vec![c.clone()];
            rec.extend(row.iter().map(|v| v.map_or(String::new(), |x| format!("{x:.4}"))));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<table csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, title: &str) -> Result<ResultTable> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("country") {
            return Err(Error::Parse {
                context: title.to_owned(),
                line: 1,
                message: "first column must be `country`".into(),
            });
        }
        let kinds: Vec<ClassifierKind> = header.iter().skip(1).map(str::parse).collect::<Result<_>>()?;
        let mut countries = Vec::new();
        let mut values = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            countries.push(row[0].to_string());
            let vals = row
                .iter()
                .skip(1)
                .map(|f| {
                    if f.trim().is_empty() {
                        Ok(None)
                    } else {
                        f.trim().parse::<f64>().map(Some).map_err(|_| Error::Parse {
                            context: title.to_owned(),
                            line: i + 2,
                            message: format!("bad value `{f}`"),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != kinds.len() {
                return Err(Error::Parse {
                    context: title.to_owned(),
                    line: i + 2,
                    message: "wrong number of cells".into(),
                });
            }
            values.push(vals);
        }
        Ok(ResultTable {
            title: title.to_owned(),
            countries,
            kinds,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_rows_five_splits() {
        let p = walk_forward_splits(12, 5).unwrap();
        let expect: Vec<(Range<usize>, Range<usize>)> = (1..=5).map(|i| (0..2 * i, 2 * i..2 * i + 2)).collect();
        let got: Vec<(Range<usize>, Range<usize>)> = p.folds.iter().map(|f| (f.train.clone(), f.test.clone())).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn singleton_blocks_and_too_short() {
        let p = walk_forward_splits(6, 5).unwrap();
        assert!(p.folds.iter().all(|f| f.test.len() == 1));
        assert!(walk_forward_splits(5, 5).is_err());
    }

    #[test]
    fn remainder_goes_to_early_blocks() {
        let p = walk_forward_splits(14, 5).unwrap();
        assert_eq!(p.folds[0].train, 0..3);
        assert_eq!(p.folds[0].test, 3..6);
        assert_eq!(p.folds[1].test, 6..8);
        assert_eq!(p.folds[4].test, 12..14);
    }

    #[test]
    fn delta_examples() {
        assert!((delta_f1(0.8124, 0.7177) - 0.0947).abs() < 1e-12);
        assert!((delta_f1(0.3835, 0.6087) + 0.2252).abs() < 1e-12);
        assert_eq!(delta_f1(0.5, 0.5), 0.0);
    }

    #[test]
    fn table_csv_round_trip() {
        let t = ResultTable {
            title: "t".into(),
            countries: vec!["US".into(), "UK".into()],
            kinds: vec![ClassifierKind::Lg, ClassifierKind::Xg],
            values: vec![vec![Some(0.8124), None], vec![Some(-0.25), Some(0.5)]],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "country,LG,XG\nUS,0.8124,\nUK,-0.2500,0.5000\n"
        );
        let back = ResultTable::read_csv(buf.as_slice(), "t").unwrap();
        assert_eq!(back, t);
        let d = ResultTable::difference("d", &t, &t).unwrap();
        assert_eq!(d.get("UK", ClassifierKind::Xg), Some(0.0));
        assert_eq!(d.get("US", ClassifierKind::Xg), None);
    }
}
