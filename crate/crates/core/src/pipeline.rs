//! Glue from parsed inputs to per-country model datasets.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gkg::{filter_records, GkgRecord, IngestFilter};
use crate::granger::VariablePanel;
use crate::linalg::Matrix;
use crate::market::{align_calendar, beir_calendar, country, AlignedMatrix, CountrySpec, MarketSeries, COMMODITIES};
use crate::panel::{aggregate_daily, build_dataset, diff_k_matrix, CountryDataset, DailyThemePanel, Scaler};
use crate::pls::{fit_baseline, fit_pls, PlsModel, ResidualKind};
use crate::taxonomy::ThemeTaxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepParams {
    pub k: usize,
    pub horizon: usize,
    pub fill_limit: usize,
    pub min_ecofin_themes: usize,
}

impl Default for PrepParams {
    fn default() -> Self {
        PrepParams {
            k: 5,
            horizon: 1,
            fill_limit: crate::market::DEFAULT_FILL_LIMIT,
            min_ecofin_themes: 3,
        }
    }
}

/// Daily theme panel from the records that pass `code`'s filter.
pub fn country_panel(code: &str, records: &[GkgRecord], tax: &ThemeTaxonomy, min_ecofin: usize) -> Result<DailyThemePanel> {
    let filter = IngestFilter::new(country(code)?.fips, min_ecofin)?;
    let kept = filter_records(records, &filter, tax);
    Ok(aggregate_daily(code, &kept, tax))
}

/// Market data for `code` aligned on its BEIR calendar.
pub fn country_market(code: &str, series: &[MarketSeries], fill_limit: usize) -> Result<(CountrySpec, AlignedMatrix)> {
    let spec = CountrySpec::standard(code);
    let available = series.iter().map(|s| s.name.clone()).collect();
    spec.validate(&available)?;
    let beir = series
        .iter()
        .find(|s| s.name == spec.beir)
        .ok_or_else(|| Error::InvalidInput(format!("missing `{}`", spec.beir)))?;
    let mut wanted = vec![spec.beir.clone()];
    wanted.extend(spec.explanatory());
    let chosen: Vec<MarketSeries> = wanted
        .iter()
        .map(|w| {
            series
                .iter()
                .find(|s| &s.name == w)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("missing series `{w}`")))
        })
        .collect::<Result<_>>()?;
    let aligned = align_calendar(&chosen, &beir_calendar(beir), fill_limit)?;
    Ok((spec, aligned))
}

pub fn country_dataset(
    code: &str,
    records: &[GkgRecord],
    series: &[MarketSeries],
    tax: &ThemeTaxonomy,
    params: &PrepParams,
) -> Result<CountryDataset> {
    let panel = country_panel(code, records, tax, params.min_ecofin_themes)?;
    let (spec, aligned) = country_market(code, series, params.fill_limit)?;
    build_dataset(code, &aligned, &spec.beir, &spec.explanatory(), &panel, params.k, params.horizon)
}

/// Residual PLS fitted on a country's whole sample, as used by the Granger
/// network and the loading profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeFeatures {
    pub country: String,
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    pub baseline_coefficients: Vec<f64>,
    pub pls: PlsModel,
    /// Standardized component scores, one row per date.
    pub scores: Matrix,
}

fn varying_columns(m: &Matrix) -> Vec<usize> {
    (0..m.ncols())
        .filter(|&j| {
            let c = m.column(j);
            c.iter().any(|&v| v != c[0])
        })
        .collect()
}

pub fn full_sample_features(
    data: &CountryDataset,
    components: usize,
    residual: ResidualKind,
    tax: Option<&ThemeTaxonomy>,
) -> Result<NarrativeFeatures> {
    let n = data.len();
    let market_names = data.market.names();
    let market = Scaler::fit(&data.market.values, 0..n, &market_names)?.apply(&data.market.values)?;
    let keep = varying_columns(&data.themes.values);
    if keep.is_empty() {
        return Err(Error::InsufficientData(format!("{}: no varying theme column", data.country)));
    }
    let theme_names: Vec<String> = keep.iter().map(|&j| data.themes.columns[j].name.clone()).collect();
    let raw = Matrix::from_fn(n, keep.len(), |i, j| data.themes.values[(i, keep[j])]);
    let themes = Scaler::fit(&raw, 0..n, &theme_names)?.apply(&raw)?;
    let baseline = fit_baseline(&market, &market_names, &data.labels.values, residual)?;
    let mut pls = fit_pls(&themes, &theme_names, &baseline.residuals, components)?;
    pls.taxonomy_hash = tax.map(|t| t.hash().to_owned());
    let names = pls.component_names(&format!("{}_PLS", data.country));
    let scores = pls.transform(&themes, &theme_names)?;
    let scores = Scaler::fit(&scores, 0..n, &names)?.apply(&scores)?;
    Ok(NarrativeFeatures {
        country: data.country.clone(),
        dates: data.labels.dates.clone(),
        names,
        baseline_coefficients: baseline.coefficients().to_vec(),
        pls,
        scores,
    })
}

/// Market roster for `countries`: BEIR, stock, FX and steepener per country
/// followed by the shared commodities.
pub fn market_roster(countries: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for c in countries {
        let spec = CountrySpec::standard(c);
        out.push(spec.beir.clone());
        out.push(spec.stock.clone());
        out.extend(spec.fx.clone());
        out.push(spec.steepener.clone());
    }
    out.extend(COMMODITIES.iter().map(|s| s.to_string()));
    out
}

/// `k`-differenced market roster plus narrative scores on shared dates.
///
/// Market series are aligned on the dates every BEIR shares. Narrative
/// scores are already built from differenced themes and enter as they are.
pub fn granger_panel(
    countries: &[String],
    series: &[MarketSeries],
    narratives: &[NarrativeFeatures],
    k: usize,
    fill_limit: usize,
) -> Result<VariablePanel> {
    let roster = market_roster(countries);
    let chosen: Vec<MarketSeries> = roster
        .iter()
        .map(|w| {
            series
                .iter()
                .find(|s| &s.name == w)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("missing series `{w}`")))
        })
        .collect::<Result<_>>()?;
    let mut calendar: Option<BTreeSet<NaiveDate>> = None;
    for s in chosen.iter().filter(|s| s.name.ends_with("_BEIR")) {
        let d: BTreeSet<NaiveDate> = s.dates.iter().copied().collect();
        calendar = Some(match calendar {
            None => d,
            Some(c) => c.intersection(&d).copied().collect(),
        });
    }
    let calendar: Vec<NaiveDate> = calendar.unwrap_or_default().into_iter().collect();
    let aligned = align_calendar(&chosen, &calendar, fill_limit)?;
    let diffs = diff_k_matrix(&aligned.values, k)?;
    let diff_dates = aligned.dates[k..].to_vec();

    let mut columns = Vec::new();
    for (j, name) in aligned.names.iter().enumerate() {
        columns.push((name.clone(), diff_dates.clone(), diffs.column(j).iter().copied().collect()));
    }
    for nf in narratives {
        for (j, name) in nf.names.iter().enumerate() {
            columns.push((name.clone(), nf.dates.clone(), nf.scores.column(j).iter().copied().collect()));
        }
    }
    VariablePanel::intersect(columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    #[test]
    fn eight_country_roster_has_34_market_series() {
        let all: Vec<String> = crate::market::COUNTRIES.iter().map(|c| c.code.to_string()).collect();
        let r = market_roster(&all);
        assert_eq!(r.len(), 34);
        assert_eq!(r.iter().collect::<BTreeSet<_>>().len(), 34);
    }

    #[test]
    fn two_country_panel() {
        let cfg = SynthConfig {
            countries: vec!["US".into(), "DE".into()],
            days: 300,
            ..SynthConfig::default()
        };
        let d = generate(&cfg).unwrap();
        let tax = ThemeTaxonomy::default_rules();
        let params = PrepParams::default();
        let feats: Vec<NarrativeFeatures> = cfg
            .countries
            .iter()
            .map(|c| {
                let ds = country_dataset(c, &d.records, &d.series, &tax, &params).unwrap();
                full_sample_features(&ds, 3, ResidualKind::Response, Some(&tax)).unwrap()
            })
            .collect();
        assert_eq!(feats[0].names, vec!["US_PLS1", "US_PLS2", "US_PLS3"]);
        let panel = granger_panel(&cfg.countries, &d.series, &feats, 5, 5).unwrap();
        // 2 x {BEIR, STOCK, STEEP} + DE_FX + 3 commodities + 2 x 3 scores
        assert_eq!(panel.roster_size(), 16);
        assert!(panel.dates.len() > 250);
        assert!(panel.values.iter().all(|v| v.is_finite()));
    }
}
