//! Market series loading and business-day alignment.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Minimum series length for any modelling use.
pub const MIN_MODEL_OBS: usize = 30;
/// Default forward-fill limit in business days.
pub const DEFAULT_FILL_LIMIT: usize = 5;

pub const COMMODITIES: [&str; 3] = ["GOLD", "OIL", "BCOM"];

/// A modelled country: roster code plus the FIPS code GDELT uses in
/// location fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Country {
    pub code: &'static str,
    pub fips: &'static str,
    pub name: &'static str,
}

pub const COUNTRIES: [Country; 8] = [
    Country { code: "US", fips: "US", name: "United States" },
    Country { code: "UK", fips: "UK", name: "United Kingdom" },
    Country { code: "DE", fips: "GM", name: "Germany" },
    Country { code: "JP", fips: "JA", name: "Japan" },
    Country { code: "ZA", fips: "SF", name: "South Africa" },
    Country { code: "AU", fips: "AS", name: "Australia" },
    Country { code: "BR", fips: "BR", name: "Brazil" },
    Country { code: "MX", fips: "MX", name: "Mexico" },
];

pub fn country(code: &str) -> Result<Country> {
    COUNTRIES
        .iter()
        .find(|c| c.code.eq_ignore_ascii_case(code))
        .copied()
        .ok_or_else(|| Error::InvalidInput(format!("unknown country `{code}`")))
}

/// Series names used for one country.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountrySpec {
    pub country: String,
    pub beir: String,
    pub stock: String,
    pub fx: Option<String>,
    pub steepener: String,
}

impl CountrySpec {
    /// Conventional names `{CC}_BEIR`, `{CC}_STOCK`, `{CC}_FX`, `{CC}_STEEP`.
    /// The US dollar is the numeraire, so the US has no FX series.
    pub fn standard(code: &str) -> Self {
        CountrySpec {
            country: code.to_owned(),
            beir: format!("{code}_BEIR"),
            stock: format!("{code}_STOCK"),
            fx: (code != "US").then(|| format!("{code}_FX")),
            steepener: format!("{code}_STEEP"),
        }
    }

    /// Explanatory market series for this country's model: own stock index,
    /// FX and steepener plus the shared commodities.
    pub fn explanatory(&self) -> Vec<String> {
        let mut v = vec![self.stock.clone()];
        v.extend(self.fx.clone());
        v.push(self.steepener.clone());
        v.extend(COMMODITIES.iter().map(|s| s.to_string()));
        v
    }

    pub fn validate(&self, available: &BTreeSet<String>) -> Result<()> {
        for name in [&self.beir, &self.stock, &self.steepener]
            .into_iter()
            .chain(self.fx.as_ref())
        {
            if !available.contains(name) {
                return Err(Error::InvalidInput(format!(
                    "country {} needs series `{name}`",
                    self.country
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSeries {
    pub name: String,
    pub country: Option<String>,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl MarketSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    date: String,
    name: String,
    country: String,
    value: String,
}

pub fn load_series(path: impl AsRef<Path>) -> Result<Vec<MarketSeries>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_series(file, &path.display().to_string())
}

/// Parse `date,name,country,value` rows into one series per name, sorted by
/// date; series are returned in name order.
pub fn read_series<R: Read>(reader: R, context: &str) -> Result<Vec<MarketSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["date", "name", "country", "value"] {
        return Err(Error::Parse {
            context: context.into(),
            line: 1,
            message: "header must be `date,name,country,value`".into(),
        });
    }
    let mut by_name: BTreeMap<String, (Option<String>, BTreeMap<NaiveDate, f64>)> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let err = |message: String| Error::Parse {
            context: context.into(),
            line,
            message,
        };
        let row = row.map_err(|e| err(e.to_string()))?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
            .map_err(|_| err(format!("bad ISO date `{}`", row.date)))?;
        let value: f64 = row
            .value
            .parse()
            .map_err(|_| err(format!("bad value `{}`", row.value)))?;
        if !value.is_finite() {
            return Err(err(format!("non-finite value `{}`", row.value)));
        }
        let country = (!row.country.is_empty()).then_some(row.country);
        let entry = by_name
            .entry(row.name.clone())
            .or_insert_with(|| (country.clone(), BTreeMap::new()));
        if entry.1.insert(date, value).is_some() {
            return Err(err(format!("duplicate observation for ({}, {date})", row.name)));
        }
    }
    Ok(by_name
        .into_iter()
        .map(|(name, (country, obs))| MarketSeries {
            name,
            country,
            dates: obs.keys().copied().collect(),
            values: obs.values().copied().collect(),
        })
        .collect())
}

/// Write series in the input CSV schema, ordered by (name, date).
pub fn write_series<W: Write>(series: &[MarketSeries], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut sorted: Vec<&MarketSeries> = series.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    for s in sorted {
        for (d, v) in s.dates.iter().zip(&s.values) {
            w.serialize(Row {
                date: d.format("%Y-%m-%d").to_string(),
                name: s.name.clone(),
                country: s.country.clone().unwrap_or_default(),
                value: v.to_string(),
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("<market csv>", e))?;
    Ok(())
}

/// Series values on a shared calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedMatrix {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    /// Rows are dates, columns follow `names`.
    pub values: Matrix,
    /// Forward-filled cells per series among the kept dates.
    pub fill_counts: Vec<usize>,
    /// Calendar dates dropped because some series had no usable value.
    pub excluded_dates: Vec<NaiveDate>,
}

impl AlignedMatrix {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.values.column(j).iter().copied().collect())
    }

    pub fn select(&self, names: &[String]) -> Result<AlignedMatrix> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::InvalidInput(format!("no aligned series `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(AlignedMatrix {
            dates: self.dates.clone(),
            names: names.to_vec(),
            values: Matrix::from_fn(self.dates.len(), idx.len(), |i, j| self.values[(i, idx[j])]),
            fill_counts: idx.iter().map(|&j| self.fill_counts[j]).collect(),
            excluded_dates: self.excluded_dates.clone(),
        })
    }
}

/// Business-day calendar for a country: the BEIR observation dates.
pub fn beir_calendar(beir: &MarketSeries) -> Vec<NaiveDate> {
    beir.dates.clone()
}

/// Align `series` on `calendar`.
///
/// Interior gaps of at most `fill_limit` calendar positions are forward
/// filled; longer gaps and leading gaps drop the date. A series that stops
/// more than `fill_limit` positions before the end of the calendar is an
/// error (no trailing extrapolation); shorter trailing gaps drop the dates.
pub fn align_calendar(
    series: &[MarketSeries],
    calendar: &[NaiveDate],
    fill_limit: usize,
) -> Result<AlignedMatrix> {
    if calendar.is_empty() {
        return Err(Error::InvalidInput("calendar is empty".into()));
    }
    let mut cal: Vec<NaiveDate> = calendar.to_vec();
    cal.sort();
    cal.dedup();
    let n = cal.len();

    // per series: Option<(value, filled)> per calendar position
    let mut columns: Vec<Vec<Option<(f64, bool)>>> = Vec::with_capacity(series.len());
    for s in series {
        let overlaps = s.dates.iter().any(|d| cal.binary_search(d).is_ok());
        if !overlaps {
            return Err(Error::InvalidInput(format!(
                "series `{}` has no observation on the calendar",
                s.name
            )));
        }
        let last_obs = *s.dates.last().expect("overlapping series is nonempty");
        let trailing = cal.iter().filter(|d| **d > last_obs).count();
        if trailing > fill_limit {
            return Err(Error::InsufficientData(format!(
                "series `{}` ends {trailing} business days before the calendar end",
                s.name
            )));
        }
        let mut col = Vec::with_capacity(n);
        let mut k = 0usize; // next observation index
        let mut last: Option<(f64, usize)> = None; // value, calendar index of staleness origin
        for (i, d) in cal.iter().enumerate() {
            while k < s.dates.len() && s.dates[k] < *d {
                // off-calendar observation: counts as fresh as of the
                // previous calendar position
                last = Some((s.values[k], i.saturating_sub(1)));
                k += 1;
            }
            if k < s.dates.len() && s.dates[k] == *d {
                col.push(Some((s.values[k], false)));
                last = Some((s.values[k], i));
                k += 1;
            } else if *d > last_obs {
                col.push(None);
            } else {
                match last {
                    Some((v, origin)) if i - origin <= fill_limit => col.push(Some((v, true))),
                    _ => col.push(None),
                }
            }
        }
        columns.push(col);
    }

    let keep: Vec<usize> = (0..n)
        .filter(|&i| columns.iter().all(|c| c[i].is_some()))
        .collect();
    let excluded_dates = (0..n)
        .filter(|i| keep.binary_search(i).is_err())
        .map(|i| cal[i])
        .collect();
    let values = Matrix::from_fn(keep.len(), series.len(), |r, j| {
        columns[j][keep[r]].expect("kept rows are complete").0
    });
    let fill_counts = columns
        .iter()
        .map(|c| keep.iter().filter(|&&i| c[i].is_some_and(|(_, f)| f)).count())
        .collect();
    Ok(AlignedMatrix {
        dates: keep.iter().map(|&i| cal[i]).collect(),
        names: series.iter().map(|s| s.name.clone()).collect(),
        values,
        fill_counts,
        excluded_dates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 1, 3).unwrap() + chrono::Duration::days(i)
    }

    fn series(name: &str, days: &[i64]) -> MarketSeries {
        MarketSeries {
            name: name.into(),
            country: None,
            dates: days.iter().map(|&d| day(d)).collect(),
            values: days.iter().map(|&d| d as f64 * 1.5).collect(),
        }
    }

    #[test]
    fn two_row_file() {
        let csv = "date,name,country,value\n2022-01-03,US_BEIR,US,2.1\n2022-01-04,US_BEIR,US,2.2\n";
        let s = read_series(csv.as_bytes(), "t").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 2);
        assert_eq!(s[0].country.as_deref(), Some("US"));
    }

    #[test]
    fn rejects_bad_rows() {
        let dup = "date,name,country,value\n2022-01-03,A,,1\n2022-01-03,A,,2\n";
        assert!(matches!(read_series(dup.as_bytes(), "t"), Err(Error::Parse { line: 3, .. })));
        let bad_date = "date,name,country,value\n03/01/2022,A,,1\n";
        assert!(matches!(read_series(bad_date.as_bytes(), "t"), Err(Error::Parse { line: 2, .. })));
        let nan = "date,name,country,value\n2022-01-03,A,,NaN\n";
        assert!(read_series(nan.as_bytes(), "t").is_err());
    }

    #[test]
    fn unsorted_rows_come_back_sorted() {
        let csv = "date,name,country,value\n2022-01-05,A,,3\n2022-01-03,A,,1\n2022-01-04,A,,2\n";
        let s = read_series(csv.as_bytes(), "t").unwrap();
        assert_eq!(s[0].values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn identical_dates_need_no_fill() {
        let days: Vec<i64> = (0..10).collect();
        let a = series("A", &days);
        let b = series("B", &days);
        let m = align_calendar(&[a.clone(), b], &a.dates, DEFAULT_FILL_LIMIT).unwrap();
        assert_eq!(m.dates.len(), 10);
        assert_eq!(m.fill_counts, vec![0, 0]);
    }

    #[test]
    fn interior_gap_is_forward_filled() {
        let cal: Vec<i64> = (0..10).collect();
        let a = series("A", &cal);
        let b = series("B", &[0, 1, 2, 3, 5, 6, 7, 8, 9]);
        let m = align_calendar(&[a.clone(), b], &a.dates, DEFAULT_FILL_LIMIT).unwrap();
        assert_eq!(m.fill_counts, vec![0, 1]);
        assert_eq!(m.values[(4, 1)], 3.0 * 1.5);
        assert_eq!(m.dates.len(), 10);
    }

    #[test]
    fn long_gap_and_leading_gap_drop_dates() {
        let cal: Vec<i64> = (0..20).collect();
        let a = series("A", &cal);
        let b = series("B", &[2, 3, 4, 12, 13, 14, 15, 16, 17, 18, 19]);
        let m = align_calendar(&[a.clone(), b], &a.dates, 5).unwrap();
        // 0,1 leading; 5..=9 filled (stale 1..5); 10, 11 stale 6, 7
        let excluded: Vec<NaiveDate> = [0, 1, 10, 11].iter().map(|&d| day(d)).collect();
        assert_eq!(m.excluded_dates, excluded);
        assert_eq!(m.fill_counts[1], 5);
    }

    #[test]
    fn truncated_series_is_fatal() {
        let cal: Vec<i64> = (0..40).collect();
        let a = series("A", &cal);
        let b = series("B", &(0..30).collect::<Vec<_>>());
        assert!(align_calendar(&[a.clone(), b], &a.dates, 5).is_err());
        let c = series("C", &(0..37).collect::<Vec<_>>());
        let m = align_calendar(&[a.clone(), c], &a.dates, 5).unwrap();
        assert_eq!(m.dates.len(), 37);
    }

    #[test]
    fn no_overlap_is_fatal() {
        let a = series("A", &[0, 1, 2]);
        let b = series("B", &[10, 11]);
        assert!(align_calendar(&[a.clone(), b], &a.dates, 5).is_err());
        assert!(align_calendar(&[a], &[], 5).is_err());
    }

    #[test]
    fn country_specs() {
        let us = CountrySpec::standard("US");
        assert!(us.fx.is_none());
        assert_eq!(us.explanatory().len(), 5);
        let de = CountrySpec::standard("DE");
        assert_eq!(de.explanatory().len(), 6);
        assert_eq!(country("de").unwrap().fips, "GM");
        assert!(country("FR").is_err());
    }
}
