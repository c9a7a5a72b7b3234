//! Daily theme-tone panels, differencing, the ADF gate, standardization and
//! direction labels.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gkg::GkgRecord;
use crate::linalg::{mean, Matrix};
use crate::market::AlignedMatrix;
use crate::stats::{adf_test, AdfLags, AdfResult};
use crate::taxonomy::ThemeTaxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThemeCell {
    pub mean: f64,
    pub count: u32,
}

/// Mean daily tone per retained theme. Cells that were never observed are
/// not stored and read as neutral tone 0.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyThemePanel {
    pub country: String,
    pub cells: BTreeMap<NaiveDate, BTreeMap<String, ThemeCell>>,
    pub record_count: u64,
}

impl DailyThemePanel {
    pub fn dates(&self) -> Vec<NaiveDate> {
        self.cells.keys().copied().collect()
    }

    /// Sorted union of theme labels seen on any day.
    pub fn columns(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.cells.values().flat_map(|m| m.keys()).collect();
        set.into_iter().cloned().collect()
    }

    pub fn value(&self, date: NaiveDate, theme: &str) -> f64 {
        self.cells
            .get(&date)
            .and_then(|m| m.get(theme))
            .map_or(0.0, |c| c.mean)
    }

    /// Dense `calendar × columns` matrix with neutral fill.
    pub fn to_dense(&self, calendar: &[NaiveDate], columns: &[String]) -> Matrix {
        Matrix::from_fn(calendar.len(), columns.len(), |i, j| {
            self.value(calendar[i], &columns[j])
        })
    }

    /// Columnar CSV: `date` then one column per theme, absent cells empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let columns = self.columns();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(columns.iter().cloned());
        w.write_record(&header)?;
        for (date, cells) in &self.cells {
            let mut row = vec![date.format("%Y-%m-%d").to_string()];
            row.extend(
                columns
                    .iter()
                    .map(|c| cells.get(c).map_or(String::new(), |v| v.mean.to_string())),
            );
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<panel csv>", e))?;
        Ok(())
    }

    /// Read a panel written by [`write_csv`](Self::write_csv). Counts are not
    /// stored in the CSV and come back as 1.
    pub fn read_csv<R: Read>(reader: R, country: &str, record_count: u64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let columns: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut cells = BTreeMap::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let err = |m: String| Error::Parse {
                context: "panel csv".into(),
                line: i + 2,
                message: m,
            };
            let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
                .map_err(|_| err(format!("bad date `{}`", &row[0])))?;
            let mut day = BTreeMap::new();
            for (j, field) in row.iter().skip(1).enumerate() {
                if field.is_empty() {
                    continue;
                }
                let v: f64 = field.parse().map_err(|_| err(format!("bad value `{field}`")))?;
                day.insert(columns[j].clone(), ThemeCell { mean: v, count: 1 });
            }
            cells.insert(date, day);
        }
        Ok(DailyThemePanel {
            country: country.to_owned(),
            cells,
            record_count,
        })
    }
}

/// Sidecar metadata persisted next to a panel CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelMeta {
    pub country: String,
    pub taxonomy_hash: String,
    pub record_count: u64,
    pub n_dates: usize,
    pub n_themes: usize,
}

/// Mean document tone per (day, retained theme). Each record's tone counts
/// once for every distinct retained theme it carries.
pub fn aggregate_daily(country: &str, records: &[GkgRecord], tax: &ThemeTaxonomy) -> DailyThemePanel {
    let mut by_day: BTreeMap<NaiveDate, Vec<&GkgRecord>> = BTreeMap::new();
    for r in records {
        by_day.entry(r.date).or_default().push(r);
    }
    let days: Vec<(NaiveDate, Vec<&GkgRecord>)> = by_day.into_iter().collect();
    // each day is reduced independently and in record order, so the result
    // does not depend on scheduling
    let cells: BTreeMap<NaiveDate, BTreeMap<String, ThemeCell>> = days
        .par_iter()
        .map(|(date, recs)| {
            let mut acc: BTreeMap<String, (f64, u32)> = BTreeMap::new();
            for r in recs {
                let mut seen = HashSet::new();
                for t in &r.themes {
                    if seen.insert(t.as_str()) && tax.is_retained(t) {
                        let e = acc.entry(t.clone()).or_default();
                        e.0 += r.avg_tone;
                        e.1 += 1;
                    }
                }
            }
            let day = acc
                .into_iter()
                .map(|(k, (s, c))| (k, ThemeCell { mean: s / f64::from(c), count: c }))
                .collect();
            (*date, day)
        })
        .collect();
    DailyThemePanel {
        country: country.to_owned(),
        cells,
        record_count: records.len() as u64,
    }
}

/// `out[t - k] = x[t] - x[t - k]` over index positions.
pub fn diff_k(series: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidInput("difference order must be positive".into()));
    }
    if series.len() <= k {
        return Err(Error::InsufficientData(format!(
            "series of length {} too short for a {k}-step difference",
            series.len()
        )));
    }
    Ok(series.windows(k + 1).map(|w| w[k] - w[0]).collect())
}

/// Column-wise [`diff_k`] of a matrix.
pub fn diff_k_matrix(m: &Matrix, k: usize) -> Result<Matrix> {
    if m.nrows() <= k {
        return Err(Error::InsufficientData(format!(
            "{} rows too few for a {k}-step difference",
            m.nrows()
        )));
    }
    Ok(Matrix::from_fn(m.nrows() - k, m.ncols(), |i, j| m[(i + k, j)] - m[(i, j)]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Market,
    Theme,
    PlsComponent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub kind: ColumnKind,
    pub name: String,
}

impl ColumnMeta {
    pub fn new(kind: ColumnKind, name: impl Into<String>) -> Self {
        ColumnMeta {
            kind,
            name: name.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfColumnReport {
    pub name: String,
    pub levels: Option<AdfResult>,
    pub differenced: Option<AdfResult>,
    /// Levels reject the unit root at alpha.
    pub levels_stationary: bool,
    /// Differences reject the unit root at alpha.
    pub stationary_after_differencing: bool,
    /// Constant column; excluded from modelling.
    pub degenerate: bool,
}

/// ADF on levels and `k`-differences of every column.
pub fn adf_gate(
    names: &[String],
    levels: &Matrix,
    k: usize,
    alpha: f64,
) -> Result<Vec<AdfColumnReport>> {
    if names.len() != levels.ncols() {
        return Err(Error::InvalidInput("names do not match matrix columns".into()));
    }
    let diffed = diff_k_matrix(levels, k)?;
    names
        .par_iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = levels.column(j).iter().copied().collect();
            let dcol: Vec<f64> = diffed.column(j).iter().copied().collect();
            let constant = col.iter().all(|&v| v == col[0]);
            let dconstant = dcol.iter().all(|&v| v == dcol[0]);
            if constant || dconstant {
                return Ok(AdfColumnReport {
                    name: name.clone(),
                    levels: None,
                    differenced: None,
                    levels_stationary: false,
                    stationary_after_differencing: false,
                    degenerate: true,
                });
            }
            let lv = adf_test(&col, AdfLags::Auto)?;
            let dv = adf_test(&dcol, AdfLags::Auto)?;
            Ok(AdfColumnReport {
                name: name.clone(),
                levels_stationary: lv.rejects_unit_root(alpha),
                stationary_after_differencing: dv.rejects_unit_root(alpha),
                levels: Some(lv),
                differenced: Some(dv),
                degenerate: false,
            })
        })
        .collect()
}

/// Per-column mean and population standard deviation from a fit window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    /// Fit on rows `window` of `m`. `names` label columns in errors.
    pub fn fit(m: &Matrix, window: std::ops::Range<usize>, names: &[String]) -> Result<Scaler> {
        if window.len() < 2 || window.end > m.nrows() {
            return Err(Error::InsufficientData(format!(
                "scaler window {window:?} invalid for {} rows",
                m.nrows()
            )));
        }
        let mut means = Vec::with_capacity(m.ncols());
        let mut stds = Vec::with_capacity(m.ncols());
        for j in 0..m.ncols() {
            let col: Vec<f64> = window.clone().map(|i| m[(i, j)]).collect();
            let mu = mean(&col);
            let var = col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / col.len() as f64;
            if !(var > 0.0) {
                let name = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
                return Err(Error::ZeroVariance(name));
            }
            means.push(mu);
            stds.push(var.sqrt());
        }
        Ok(Scaler { means, stds })
    }

    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        if m.ncols() != self.means.len() {
            return Err(Error::InvalidInput(format!(
                "scaler fitted on {} columns, got {}",
                self.means.len(),
                m.ncols()
            )));
        }
        Ok(Matrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            (m[(i, j)] - self.means[j]) / self.stds[j]
        }))
    }
}

/// Dated design matrix with column metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<ColumnMeta>,
    /// `k`-differenced values; standardized once passed through a [`Scaler`].
    pub values: Matrix,
}

impl FeatureMatrix {
    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn select_rows(&self, rows: std::ops::Range<usize>) -> FeatureMatrix {
        FeatureMatrix {
            dates: self.dates[rows.clone()].to_vec(),
            columns: self.columns.clone(),
            values: self.values.rows(rows.start, rows.len()).into_owned(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for (i, d) in self.dates.iter().enumerate() {
            let mut row = vec![d.format("%Y-%m-%d").to_string()];
            row.extend((0..self.values.ncols()).map(|j| self.values[(i, j)].to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<feature csv>", e))?;
        Ok(())
    }

    /// Read values written by [`write_csv`](Self::write_csv); every column
    /// gets `kind`.
    pub fn read_csv<R: Read>(reader: R, kind: ColumnKind) -> Result<FeatureMatrix> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let columns: Vec<ColumnMeta> = header
            .iter()
            .skip(1)
            .map(|n| ColumnMeta::new(kind, n))
            .collect();
        let mut dates = Vec::new();
        let mut data = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let err = |m: String| Error::Parse {
                context: "feature csv".into(),
                line: i + 2,
                message: m,
            };
            dates.push(
                NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
                    .map_err(|_| err(format!("bad date `{}`", &row[0])))?,
            );
            for f in row.iter().skip(1) {
                data.push(f.parse::<f64>().map_err(|_| err(format!("bad value `{f}`")))?);
            }
        }
        let values = Matrix::from_row_slice(dates.len(), columns.len(), &data);
        Ok(FeatureMatrix {
            dates,
            columns,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryLabels {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<u8>,
    /// Feature dates dropped because the target change was exactly zero.
    pub excluded_zero_change: usize,
}

/// Direction labels for feature dates.
///
/// The label at feature position `t` is 1 when
/// `beir[t + horizon] - beir[t + horizon - k] > 0` and 0 when negative; exact
/// zeros are dropped. Feature positions run over `k..=n - 1 - horizon` so
/// every feature date also has a `k`-difference.
pub fn make_labels(
    dates: &[NaiveDate],
    beir: &[f64],
    k: usize,
    horizon: usize,
) -> Result<BinaryLabels> {
    if dates.len() != beir.len() {
        return Err(Error::InvalidInput("dates and BEIR values differ in length".into()));
    }
    if k == 0 || horizon == 0 || horizon > k {
        return Err(Error::InvalidInput(format!(
            "need 0 < horizon <= k, got k={k}, horizon={horizon}"
        )));
    }
    let n = beir.len();
    if n <= k + horizon {
        return Err(Error::InsufficientData(format!(
            "BEIR series of length {n} too short for k={k}, horizon={horizon}"
        )));
    }
    let mut out = BinaryLabels {
        dates: Vec::new(),
        values: Vec::new(),
        excluded_zero_change: 0,
    };
    for t in k..n - horizon {
        let change = beir[t + horizon] - beir[t + horizon - k];
        if change == 0.0 {
            out.excluded_zero_change += 1;
            continue;
        }
        out.dates.push(dates[t]);
        out.values.push(u8::from(change > 0.0));
    }
    Ok(out)
}

/// Everything the models need for one country, before per-fold scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryDataset {
    pub country: String,
    pub market: FeatureMatrix,
    pub themes: FeatureMatrix,
    pub labels: BinaryLabels,
}

impl CountryDataset {
    pub fn len(&self) -> usize {
        self.labels.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.values.is_empty()
    }
}

/// Build the differenced market/theme design and labels on the aligned
/// calendar. Theme columns that never vary are dropped.
pub fn build_dataset(
    country: &str,
    aligned: &AlignedMatrix,
    beir_name: &str,
    market_names: &[String],
    panel: &DailyThemePanel,
    k: usize,
    horizon: usize,
) -> Result<CountryDataset> {
    let beir = aligned
        .column(beir_name)
        .ok_or_else(|| Error::InvalidInput(format!("aligned data lacks `{beir_name}`")))?;
    let labels = make_labels(&aligned.dates, &beir, k, horizon)?;
    let market_levels = aligned.select(market_names)?;
    let market_diff = diff_k_matrix(&market_levels.values, k)?;

    let theme_cols: Vec<String> = panel.columns();
    let theme_levels = panel.to_dense(&aligned.dates, &theme_cols);
    let theme_diff = diff_k_matrix(&theme_levels, k)?;
    let varying: Vec<usize> = (0..theme_cols.len())
        .filter(|&j| {
            let c = theme_diff.column(j);
            c.iter().any(|&v| v != c[0])
        })
        .collect();

    // diff row r corresponds to calendar position r + k
    let pos: std::collections::HashMap<NaiveDate, usize> = aligned
        .dates
        .iter()
        .enumerate()
        .map(|(i, d)| (*d, i))
        .collect();
    let rows: Vec<usize> = labels.dates.iter().map(|d| pos[d] - k).collect();

    let market = FeatureMatrix {
        dates: labels.dates.clone(),
        columns: market_names
            .iter()
            .map(|n| ColumnMeta::new(ColumnKind::Market, n))
            .collect(),
        values: Matrix::from_fn(rows.len(), market_names.len(), |i, j| market_diff[(rows[i], j)]),
    };
    let themes = FeatureMatrix {
        dates: labels.dates.clone(),
        columns: varying
            .iter()
            .map(|&j| ColumnMeta::new(ColumnKind::Theme, &theme_cols[j]))
            .collect(),
        values: Matrix::from_fn(rows.len(), varying.len(), |i, j| theme_diff[(rows[i], varying[j])]),
    };
    Ok(CountryDataset {
        country: country.to_owned(),
        market,
        themes,
        labels,
    })
}
