//! Run configuration: TOML with sections, validated at load.

use std::path::{Path, PathBuf};

use beirnet::classifiers::ClassifierKind;
use beirnet::evaluation::ScalerScope;
use beirnet::market::{country, COUNTRIES};
use beirnet::pls::ResidualKind;
use beirnet::taxonomy::UnmappedPolicy;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub countries: Vec<String>,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub classifiers: Vec<ClassifierKind>,
    pub paths: Paths,
    pub taxonomy: TaxonomyConfig,
    pub ingest: IngestConfig,
    pub preprocess: PreprocessConfig,
    pub features: FeaturesConfig,
    pub evaluate: EvaluateConfig,
    pub granger: GrangerConfig,
    pub synth: SynthSection,
}

/// Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// GKG files or directories. Empty means the `synth` stage output.
    pub gkg: Vec<PathBuf>,
    /// Long-format market CSV. Unset means the `synth` stage output.
    pub market: Option<PathBuf>,
    /// Theme rules CSV; the bundled rules when unset.
    pub taxonomy: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaxonomyConfig {
    pub unmapped: UnmappedPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub min_ecofin_themes: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { min_ecofin_themes: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub k: usize,
    pub horizon: usize,
    pub fill_limit: usize,
    pub adf_alpha: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            k: 5,
            horizon: 1,
            fill_limit: beirnet::market::DEFAULT_FILL_LIMIT,
            adf_alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    pub components: usize,
    pub residual: ResidualKind,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            components: beirnet::pls::DEFAULT_COMPONENTS,
            residual: ResidualKind::Response,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub folds: usize,
    pub scaler_scope: ScalerScope,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            folds: 5,
            scaler_scope: ScalerScope::TrainOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrangerConfig {
    pub alpha: f64,
    pub lag: usize,
}

impl Default for GrangerConfig {
    fn default() -> Self {
        GrangerConfig { alpha: 0.05, lag: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub start: NaiveDate,
    pub days: usize,
    pub signal: f64,
    pub records_per_day: usize,
    pub narrative_share: f64,
    pub market_link: f64,
    pub spillover: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = beirnet::synth::SynthConfig::default();
        SynthSection {
            start: d.start,
            days: d.days,
            signal: d.signal,
            records_per_day: d.records_per_day,
            narrative_share: d.narrative_share,
            market_link: d.market_link,
            spillover: d.spillover,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            countries: COUNTRIES.iter().map(|c| c.code.to_string()).collect(),
            seed: 1,
            jobs: 0,
            classifiers: ClassifierKind::ALL.to_vec(),
            paths: Paths::default(),
            taxonomy: TaxonomyConfig::default(),
            ingest: IngestConfig::default(),
            preprocess: PreprocessConfig::default(),
            features: FeaturesConfig::default(),
            evaluate: EvaluateConfig::default(),
            granger: GrangerConfig::default(),
            synth: SynthSection::default(),
        }
    }
}

fn bound<T: PartialOrd + std::fmt::Display>(name: &str, v: T, lo: T, hi: T) -> Result<(), CliError> {
    if v < lo || v > hi {
        return Err(CliError::Usage(format!("{name} = {v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<RunConfig, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.countries.is_empty() {
            return Err(CliError::Usage("no countries configured".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.countries {
            country(c).map_err(|e| CliError::Usage(e.to_string()))?;
            if !seen.insert(c) {
                return Err(CliError::Usage(format!("country `{c}` listed twice")));
            }
        }
        if self.classifiers.is_empty() {
            return Err(CliError::Usage("no classifiers configured".into()));
        }
        bound("jobs", self.jobs, 0, 1024)?;
        bound("ingest.min_ecofin_themes", self.ingest.min_ecofin_themes, 1, 50)?;
        bound("preprocess.k", self.preprocess.k, 1, 60)?;
        bound("preprocess.horizon", self.preprocess.horizon, 1, self.preprocess.k)?;
        bound("preprocess.fill_limit", self.preprocess.fill_limit, 0, 30)?;
        bound("preprocess.adf_alpha", self.preprocess.adf_alpha, 1e-6, 0.5)?;
        bound("features.components", self.features.components, 1, 50)?;
        bound("evaluate.folds", self.evaluate.folds, 3, 50)?;
        bound("granger.alpha", self.granger.alpha, 1e-12, 0.5)?;
        bound("granger.lag", self.granger.lag, 1, 20)?;
        bound("synth.days", self.synth.days, 50, 100_000)?;
        bound("synth.signal", self.synth.signal, 0.0, 1.0)?;
        bound("synth.records_per_day", self.synth.records_per_day, 1, 100_000)?;
        bound("synth.narrative_share", self.synth.narrative_share, 0.0, 1.0)?;
        bound("synth.market_link", self.synth.market_link, -1.0, 1.0)?;
        bound("synth.spillover", self.synth.spillover, -1.0, 1.0)?;
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("beirnet-out"))
    }

    pub fn synth_config(&self) -> beirnet::synth::SynthConfig {
        let s = &self.synth;
        beirnet::synth::SynthConfig {
            countries: self.countries.clone(),
            start: s.start,
            days: s.days,
            signal: s.signal,
            records_per_day: s.records_per_day,
            narrative_share: s.narrative_share,
            market_link: s.market_link,
            spillover: s.spillover,
            seed: beirnet::seed::derive(self.seed, &["synth"]),
        }
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.gkg.iter_mut().for_each(fix);
        self.market.iter_mut().for_each(fix);
        self.taxonomy.iter_mut().for_each(fix);
        self.out.iter_mut().for_each(fix);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.countries.len(), 8);
        assert_eq!(c.classifiers.len(), 5);
    }

    #[test]
    fn sections_parse_and_paths_resolve() {
        let text = r#"
countries = ["US", "DE"]
seed = 9
classifiers = ["LG", "XG"]

[paths]
gkg = ["gkg/a.tsv", "/abs/b.tsv"]
out = "run"

[evaluate]
folds = 4
scaler_scope = "train-only"

[taxonomy]
unmapped = "drop"
"#;
        let c = RunConfig::from_toml(text, Path::new("/cfg")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.paths.gkg, vec![PathBuf::from("/cfg/gkg/a.tsv"), PathBuf::from("/abs/b.tsv")]);
        assert_eq!(c.out_dir(), PathBuf::from("/cfg/run"));
        assert_eq!(c.evaluate.folds, 4);
        assert_eq!(c.preprocess.k, 5);
        assert_eq!(c.taxonomy.unmapped, UnmappedPolicy::Drop);
        assert_eq!(c.classifiers, vec![ClassifierKind::Lg, ClassifierKind::Xg]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("sede = 3", Path::new(".")).is_err());
        assert!(RunConfig::from_toml("[granger]\nlags = 2", Path::new(".")).is_err());
    }

    #[test]
    fn out_of_bounds_values_are_rejected() {
        let mut c = RunConfig::default();
        c.preprocess.horizon = 6;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.countries = vec!["US".into(), "US".into()];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.countries = vec!["FR".into()];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.granger.alpha = 0.0;
        assert!(c.validate().is_err());
    }
}
