//! Synthetic GKG records and market series with a planted narrative signal.
//!
//! Each country has a latent inflation-narrative tone `T_t`, a stationary
//! AR(1). Inflation-theme articles carry tone `T_t` plus noise; other
//! articles carry pure noise. The country's BEIR is
//! `s * scale * T_{t-1} + sqrt(1 - s^2) * W_t` with `W` a random walk, and
//! `scale` chosen so both parts have equal 5-day-difference variance. With
//! `s = 0` the theme panel carries no information about BEIR.

use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gkg::GkgRecord;
use crate::market::{country, CountrySpec, MarketSeries, COMMODITIES};
use crate::seed;

/// Ecofin themes that carry the narrative tone.
pub const NARRATIVE_THEMES: [&str; 6] = [
    "ECON_INFLATION",
    "ECON_PRICECONTROL",
    "ECON_CENTRALBANK",
    "ECON_INTEREST_RATES",
    "ECON_COST_OF_LIVING",
    "ECON_FUELPRICES",
];

/// Ecofin themes used by every other article.
pub const GENERIC_ECOFIN: [&str; 6] = [
    "ECON_STOCKMARKET",
    "ECON_TAXATION",
    "ECON_TRADE",
    "ECON_DEBT",
    "EPU_ECONOMY",
    "WB_1104_MACROECONOMIC_VULNERABILITY_AND_DEBT",
];

/// Non-economic themes sprinkled onto articles.
pub const OTHER_THEMES: [&str; 6] = [
    "KILL",
    "PROTEST",
    "HEALTH_PANDEMIC",
    "ELECTION",
    "GOV_REFORM",
    "TAX_FNCACT_PRESIDENT",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub countries: Vec<String>,
    pub start: NaiveDate,
    /// Business days generated.
    pub days: usize,
    /// Narrative signal strength in [0, 1].
    pub signal: f64,
    pub records_per_day: usize,
    /// Share of articles that are inflation-narrative articles.
    pub narrative_share: f64,
    /// Correlation between market innovations and the BEIR random walk.
    pub market_link: f64,
    /// Weight of the first country's lagged narrative in the others'.
    pub spillover: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            countries: crate::market::COUNTRIES.iter().map(|c| c.code.to_string()).collect(),
            start: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            days: 600,
            signal: 0.8,
            records_per_day: 20,
            narrative_share: 0.5,
            market_link: 0.3,
            spillover: 0.0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.signal) {
            return Err(Error::InvalidInput(format!("signal {} outside [0, 1]", self.signal)));
        }
        if !(0.0..=1.0).contains(&self.narrative_share) || !(-1.0..=1.0).contains(&self.market_link) {
            return Err(Error::InvalidInput("share and link must be proportions".into()));
        }
        if self.days < 50 || self.records_per_day == 0 || self.countries.is_empty() {
            return Err(Error::InvalidInput("need >= 50 days, records and countries".into()));
        }
        for c in &self.countries {
            country(c)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub calendar: Vec<NaiveDate>,
    pub records: Vec<GkgRecord>,
    pub series: Vec<MarketSeries>,
    /// Latent narrative tone per country, for tests.
    pub narrative: Vec<(String, Vec<f64>)>,
}

pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

const PHI: f64 = 0.9;
const TONE_SD: f64 = 1.5;
const ARTICLE_NOISE: f64 = 2.0;
const BEIR_STEP: f64 = 0.02;

fn random_walk(n: usize, start: f64, innovations: &[f64], sd: f64) -> Vec<f64> {
    let mut level = start;
    (0..n)
        .map(|t| {
            level += sd * innovations[t];
            level
        })
        .collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let n = cfg.days;
    let calendar = business_days(cfg.start, n);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let innov_sd = TONE_SD * (1.0 - PHI * PHI).sqrt();

    // latent narratives first, so spillover can read the lead country
    let mut narratives: Vec<(String, Vec<f64>)> = Vec::new();
    for code in &cfg.countries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &["synth", "narrative", code]));
        let lead = narratives.first().map(|(_, t)| t.clone());
        let mut t_prev = TONE_SD * std.sample(&mut rng);
        let path: Vec<f64> = (0..n)
            .map(|t| {
                let spill = lead.as_ref().map_or(0.0, |l| if t > 0 { cfg.spillover * l[t - 1] } else { 0.0 });
                t_prev = PHI * t_prev + innov_sd * std.sample(&mut rng) + spill * (1.0 - PHI);
                t_prev
            })
            .collect();
        narratives.push((code.clone(), path));
    }

    // equal 5-day-difference variance for the narrative and random-walk parts
    let var_t = TONE_SD * TONE_SD;
    let scale = (5.0 * BEIR_STEP * BEIR_STEP / (2.0 * var_t * (1.0 - PHI.powi(5)))).sqrt();
    let s = cfg.signal;

    let mut series = Vec::new();
    let mut common = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &["synth", "commodities"]));
    let mut beir_shocks_sum = vec![0.0; n];
    let mut records = Vec::new();

    for (code, path) in &narratives {
        let spec = CountrySpec::standard(code);
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &["synth", "market", code]));
        let w: Vec<f64> = (0..n).map(|_| std.sample(&mut rng)).collect();
        for (acc, v) in beir_shocks_sum.iter_mut().zip(&w) {
            *acc += v / cfg.countries.len() as f64;
        }
        let rw = random_walk(n, 0.0, &w, BEIR_STEP);
        let beir: Vec<f64> = (0..n)
            .map(|t| {
                let lagged = if t > 0 { path[t - 1] } else { 0.0 };
                2.0 + s * scale * lagged + (1.0 - s * s).sqrt() * rw[t]
            })
            .collect();
        let link = cfg.market_link;
        let linked = |sd: f64, start: f64, rng: &mut ChaCha8Rng| {
            let shocks: Vec<f64> = w
                .iter()
                .map(|wi| link * wi + (1.0 - link * link).sqrt() * std.sample(rng))
                .collect();
            random_walk(n, start, &shocks, sd)
        };
        let stock: Vec<f64> = linked(0.01, 100f64.ln(), &mut rng).into_iter().map(f64::exp).collect();
        let steep = linked(0.03, 1.0, &mut rng);
        let fx = spec.fx.as_ref().map(|_| linked(0.005, 1.0, &mut rng));
        let mk = |name: &str, vals: Vec<f64>| MarketSeries {
            name: name.to_owned(),
            country: Some(code.clone()),
            dates: calendar.clone(),
            values: vals,
        };
        series.push(mk(&spec.beir, beir));
        series.push(mk(&spec.stock, stock));
        series.push(mk(&spec.steepener, steep));
        if let (Some(name), Some(v)) = (&spec.fx, fx) {
            series.push(mk(name, v));
        }

        let fips = country(code)?.fips.to_string();
        let mut rrng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &["synth", "gkg", code]));
        let tone_noise = Normal::new(0.0, ARTICLE_NOISE).expect("positive sd");
        for (t, date) in calendar.iter().enumerate() {
            for r in 0..cfg.records_per_day {
                let narrative = rrng.random_bool(cfg.narrative_share);
                let mut themes: Vec<&str> = if narrative {
                    NARRATIVE_THEMES.choose_multiple(&mut rrng, 3).copied().collect()
                } else {
                    GENERIC_ECOFIN.choose_multiple(&mut rrng, 3).copied().collect()
                };
                let extra = rrng.random_range(0..=2);
                themes.extend(OTHER_THEMES.choose_multiple(&mut rrng, extra).copied());
                let base = if narrative { path[t] } else { 0.0 };
                let tone = (base + tone_noise.sample(&mut rrng)).clamp(-10.0, 10.0);
                records.push(GkgRecord {
                    record_id: format!("{}-{code}-{r}", date.format("%Y%m%d")),
                    date: *date,
                    themes: themes.into_iter().map(str::to_owned).collect(),
                    avg_tone: (tone * 1e4).round() / 1e4,
                    country_codes: BTreeSet::from([fips.clone()]),
                });
            }
        }
    }

    for (i, name) in COMMODITIES.iter().enumerate() {
        let link = if i == 0 { 0.0 } else { cfg.market_link };
        let shocks: Vec<f64> = beir_shocks_sum
            .iter()
            .map(|wi| link * wi + (1.0 - link * link).sqrt() * std.sample(&mut common))
            .collect();
        let vals = random_walk(n, 100.0, &shocks, 1.0);
        series.push(MarketSeries {
            name: name.to_string(),
            country: None,
            dates: calendar.clone(),
            values: vals,
        });
    }
    series.sort_by(|a, b| a.name.cmp(&b.name));
    records.sort_by_key(|a| a.date);
    for s in &mut series {
        for v in &mut s.values {
            *v = (*v * 1e8).round() / 1e8;
        }
    }
    Ok(SynthData {
        calendar,
        records,
        series,
        narrative: narratives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gkg::{passes_filter, IngestFilter};
    use crate::taxonomy::ThemeTaxonomy;

    fn small(signal: f64) -> SynthConfig {
        SynthConfig {
            countries: vec!["US".into(), "DE".into()],
            days: 80,
            records_per_day: 5,
            signal,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn roster_and_calendar() {
        let d = generate(&small(0.5)).unwrap();
        assert_eq!(d.calendar.len(), 80);
        assert!(d.calendar.iter().all(|x| x.weekday().num_days_from_monday() < 5));
        let names: Vec<&str> = d.series.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            ["BCOM", "DE_BEIR", "DE_FX", "DE_STEEP", "DE_STOCK", "GOLD", "OIL", "US_BEIR", "US_STEEP", "US_STOCK"]
        );
        assert_eq!(d.records.len(), 2 * 80 * 5);
    }

    #[test]
    fn every_record_passes_its_country_filter() {
        let tax = ThemeTaxonomy::default_rules();
        let d = generate(&small(0.5)).unwrap();
        let us = IngestFilter::for_country("US");
        let de = IngestFilter::for_country("GM");
        assert!(d.records.iter().all(|r| passes_filter(r, &us, &tax) || passes_filter(r, &de, &tax)));
        for t in NARRATIVE_THEMES.iter().chain(&GENERIC_ECOFIN) {
            assert!(tax.is_ecofin(t), "{t}");
        }
        for t in OTHER_THEMES {
            assert!(!tax.is_ecofin(t), "{t}");
        }
    }

    #[test]
    fn same_seed_same_output() {
        let a = generate(&small(0.8)).unwrap();
        let b = generate(&small(0.8)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn zero_signal_beir_ignores_narrative() {
        let mut cfg = small(0.0);
        let a = generate(&cfg).unwrap();
        cfg.narrative_share = 0.9;
        let b = generate(&cfg).unwrap();
        let beir = |d: &SynthData| d.series.iter().find(|s| s.name == "US_BEIR").unwrap().values.clone();
        assert_eq!(beir(&a), beir(&b));
    }

    #[test]
    fn signal_out_of_range_rejected() {
        assert!(generate(&small(1.5)).is_err());
    }
}
