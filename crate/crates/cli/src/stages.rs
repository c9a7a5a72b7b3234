//! One method per subcommand. Each stage checks its upstream stages in the
//! manifest, writes its artifacts atomically and records their hashes.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use beirnet::classifiers::ClassifierKind;
use beirnet::evaluation::{run_comparison, CvReport, ExperimentConfig, ResultTable, TableKind};
use beirnet::gkg::{ingest_files, read_ndjson, to_gkg_line, write_ndjson, GkgRecord, GkgSchema, IngestFilter};
use beirnet::granger::{beir_predecessors, build_graph, density, pairwise_granger, write_predecessors_csv, GrangerGraph};
use beirnet::market::{country, load_series, write_series, MarketSeries};
use beirnet::panel::{adf_gate, build_dataset, CountryDataset, DailyThemePanel, PanelMeta};
use beirnet::pipeline::{country_market, country_panel, full_sample_features, granger_panel, NarrativeFeatures};
use beirnet::pls::CategoryLoadingProfile;
use beirnet::taxonomy::ThemeTaxonomy;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::manifest::{sha256_bytes, Manifest, Stage, StageWriter};
use crate::CliError;

const EXPLAINED_THRESHOLD: f64 = 0.80;

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub manifest: Manifest,
    config_hash: String,
    pool: rayon::ThreadPool,
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Data(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> beirnet::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self, CliError> {
        let out = cfg.out_dir();
        std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        let manifest = Manifest::load(&out)?;
        let config_hash = sha256_bytes(&to_json(&cfg)?);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
        Ok(Context {
            cfg,
            out,
            manifest,
            config_hash,
            pool,
        })
    }

    fn finish(&mut self, w: StageWriter, params: serde_json::Value) -> Result<(), CliError> {
        let stage = w.stage;
        let n = w.outputs.len();
        w.finish(&mut self.manifest, &self.config_hash, self.cfg.seed, params);
        self.manifest.save(&self.out)?;
        log::info!("{}: wrote {n} artifacts to {}", stage.name(), self.out.join(stage.name()).display());
        Ok(())
    }

    fn require(&self, w: &mut StageWriter, needed: Stage) -> Result<(), CliError> {
        let rec = self.manifest.require(&self.out, w.stage, needed)?;
        w.inputs_from(rec);
        Ok(())
    }

    fn taxonomy(&self, w: &mut StageWriter) -> Result<ThemeTaxonomy, CliError> {
        let tax = match &self.cfg.paths.taxonomy {
            Some(p) => {
                w.input(p)?;
                ThemeTaxonomy::load_rules(p)?
            }
            None => ThemeTaxonomy::default_rules(),
        };
        Ok(tax.with_policy(self.cfg.taxonomy.unmapped))
    }

    fn stage_file(&self, stage: Stage, name: &str) -> PathBuf {
        self.out.join(stage.name()).join(name)
    }

    fn gkg_inputs(&self, w: &mut StageWriter) -> Result<Vec<PathBuf>, CliError> {
        if self.cfg.paths.gkg.is_empty() {
            self.require(w, Stage::Synth)?;
            return Ok(vec![self.stage_file(Stage::Synth, "gkg.tsv")]);
        }
        let mut files = Vec::new();
        for p in &self.cfg.paths.gkg {
            if p.is_dir() {
                let mut inner: Vec<PathBuf> = std::fs::read_dir(p)
                    .map_err(|e| CliError::io(p, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.is_file())
                    .collect();
                inner.sort();
                files.extend(inner);
            } else {
                files.push(p.clone());
            }
        }
        if files.is_empty() {
            return Err(CliError::Data("no GKG input files".into()));
        }
        for f in &files {
            if f.exists() {
                w.input(f)?;
            }
        }
        Ok(files)
    }

    fn market_input(&self, w: &mut StageWriter) -> Result<Vec<MarketSeries>, CliError> {
        let path = match &self.cfg.paths.market {
            Some(p) => p.clone(),
            None => {
                self.require(w, Stage::Synth)?;
                self.stage_file(Stage::Synth, "market.csv")
            }
        };
        w.input(&path)?;
        Ok(load_series(&path)?)
    }

    pub fn synth(&mut self) -> Result<(), CliError> {
        let mut w = StageWriter::new(&self.out, Stage::Synth);
        let sc = self.cfg.synth_config();
        let data = beirnet::synth::generate(&sc)?;
        let mut gkg = String::new();
        for r in &data.records {
            gkg.push_str(&to_gkg_line(r));
            gkg.push('\n');
        }
        w.write("gkg.tsv", gkg.as_bytes())?;
        w.write("market.csv", &csv_bytes(|b| write_series(&data.series, b))?)?;
        log::info!("synth: {} records, {} series, {} days", data.records.len(), data.series.len(), data.calendar.len());
        self.finish(w, serde_json::to_value(&sc).map_err(|e| CliError::Data(e.to_string()))?)
    }

    pub fn ingest(&mut self) -> Result<(), CliError> {
        let mut w = StageWriter::new(&self.out, Stage::Ingest);
        let tax = self.taxonomy(&mut w)?;
        let files = self.gkg_inputs(&mut w)?;
        let fips: Vec<&str> = self
            .cfg
            .countries
            .iter()
            .map(|c| country(c).map(|c| c.fips))
            .collect::<beirnet::Result<_>>()?;
        let filter = IngestFilter::any_of(fips, self.cfg.ingest.min_ecofin_themes)?;
        let schema = GkgSchema::default();
        let out = self.pool.install(|| ingest_files(&files, &schema, &filter, &tax));
        for fe in &out.stats.file_errors {
            log::warn!("ingest: skipped unreadable file {}: {}", fe.path.display(), fe.message);
        }
        if out.stats.file_errors.len() == files.len() {
            return Err(CliError::Data("no GKG file could be read".into()));
        }
        log::info!(
            "ingest: {} lines, {} parsed, {} kept, {} skipped",
            out.stats.lines_read,
            out.stats.parsed,
            out.stats.filtered_in,
            out.stats.skipped_total()
        );
        w.write("records.ndjson", &csv_bytes(|b| write_ndjson(&out.records, b))?)?;
        let mut stats = out.stats.clone();
        stats.file_errors.iter_mut().for_each(|fe| fe.path = PathBuf::from(crate::manifest::key_for(&self.out, &fe.path)));
        w.write("stats.json", &to_json(&stats)?)?;
        self.finish(w, json!({ "min_ecofin_themes": self.cfg.ingest.min_ecofin_themes, "countries": self.cfg.countries }))
    }

    fn records(&self) -> Result<Vec<GkgRecord>, CliError> {
        let path = self.stage_file(Stage::Ingest, "records.ndjson");
        let f = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(read_ndjson(BufReader::new(f))?)
    }

    pub fn aggregate(&mut self) -> Result<(), CliError> {
        let mut w = StageWriter::new(&self.out, Stage::Aggregate);
        self.require(&mut w, Stage::Ingest)?;
        let tax = self.taxonomy(&mut w)?;
        let records = self.records()?;
        let min = self.cfg.ingest.min_ecofin_themes;
        let panels: Vec<DailyThemePanel> = self.pool.install(|| {
            self.cfg
                .countries
                .par_iter()
                .map(|c| country_panel(c, &records, &tax, min))
                .collect::<beirnet::Result<_>>()
        })?;
        for p in &panels {
            let meta = PanelMeta {
                country: p.country.clone(),
                taxonomy_hash: tax.hash().to_owned(),
                record_count: p.record_count,
                n_dates: p.dates().len(),
                n_themes: p.columns().len(),
            };
            log::info!("aggregate: {} {} records, {} days, {} themes", meta.country, meta.record_count, meta.n_dates, meta.n_themes);
            w.write(&format!("{}_themes.csv", p.country), &csv_bytes(|b| p.write_csv(b))?)?;
            w.write(&format!("{}_meta.json", p.country), &to_json(&meta)?)?;
        }
        self.finish(w, json!({ "taxonomy_hash": tax.hash(), "unmapped": self.cfg.taxonomy.unmapped }))
    }

    pub fn preprocess(&mut self) -> Result<(), CliError> {
        let mut w = StageWriter::new(&self.out, Stage::Preprocess);
        self.require(&mut w, Stage::Aggregate)?;
        let series = self.market_input(&mut w)?;
        let p = self.cfg.preprocess.clone();
        let results: Vec<(CountryDataset, Vec<beirnet::panel::AdfColumnReport>)> = self.pool.install(|| {
            self.cfg
                .countries
                .par_iter()
                .map(|c| -> Result<_, CliError> {
                    let meta: PanelMeta = read_json(&self.stage_file(Stage::Aggregate, &format!("{c}_meta.json")))?;
                    let path = self.stage_file(Stage::Aggregate, &format!("{c}_themes.csv"));
                    let f = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
                    let panel = DailyThemePanel::read_csv(f, c, meta.record_count)?;
                    let (spec, aligned) = country_market(c, &series, p.fill_limit)?;
                    let adf = adf_gate(&aligned.names, &aligned.values, p.k, p.adf_alpha)?;
                    let ds = build_dataset(c, &aligned, &spec.beir, &spec.explanatory(), &panel, p.k, p.horizon)?;
                    Ok((ds, adf))
                })
                .collect::<Result<_, CliError>>()
        })?;
        for (ds, adf) in &results {
            for r in adf.iter().filter(|r| !r.degenerate && !r.stationary_after_differencing) {
                log::warn!("preprocess: {} still has a unit root after {}-day differencing", r.name, p.k);
            }
            log::info!(
                "preprocess: {} {} rows, {} market, {} theme columns",
                ds.country,
                ds.len(),
                ds.market.columns.len(),
                ds.themes.columns.len()
            );
            w.write(&format!("{}_dataset.json", ds.country), &to_json(ds)?)?;
            w.write(&format!("{}_adf.json", ds.country), &to_json(adf)?)?;
        }
        self.finish(w, serde_json::to_value(&p).map_err(|e| CliError::Data(e.to_string()))?)
    }

    fn dataset(&self, c: &str) -> Result<CountryDataset, CliError> {
        read_json(&self.stage_file(Stage::Preprocess, &format!("{c}_dataset.json")))
    }

    pub fn features(&mut self) -> Result<(), CliError> {
        let mut w = StageWriter::new(&self.out, Stage::Features);
        self.require(&mut w, Stage::Preprocess)?;
        let tax = self.taxonomy(&mut w)?;
        let fc = self.cfg.features.clone();
        let feats: Vec<NarrativeFeatures> = self.pool.install(|| {
            self.cfg
                .countries
                .par_iter()
                .map(|c| -> Result<_, CliError> {
                    let ds = self.dataset(c)?;
                    Ok(full_sample_features(&ds, fc.components, fc.residual, Some(&tax))?)
                })
                .collect::<Result<_, CliError>>()
        })?;
        for nf in &feats {
            let ev = nf.pls.explained_variance_check(EXPLAINED_THRESHOLD);
            if !ev.passes {
                log::warn!(
                    "features: {} components explain {:.3} of the residual variance (threshold {EXPLAINED_THRESHOLD})",
                    nf.country,
                    ev.cumulative
                );
            }
            let profiles: Vec<CategoryLoadingProfile> = (0..nf.pls.n_components())
                .map(|a| nf.pls.category_profile(&tax, a))
                .collect::<beirnet::Result<_>>()?;
            w.write(&format!("{}_features.json", nf.country), &to_json(nf)?)?;
            w.write(&format!("{}_explained.json", nf.country), &to_json(&ev)?)?;
            w.write(
                &format!("{}_categories.csv", nf.country),
                &csv_bytes(|b| CategoryLoadingProfile::write_csv(&profiles, b))?,
            )?;
        }
        self.finish(w, serde_json::to_value(&fc).map_err(|e| CliError::Data(e.to_string()))?)
    }

    pub fn evaluate(&mut self) -> Result<(), CliError> {
        let mut w = StageWriter::new(&self.out, Stage::Evaluate);
        self.require(&mut w, Stage::Features)?;
        self.require(&mut w, Stage::Preprocess)?;
        let exp = ExperimentConfig {
            components: self.cfg.features.components,
            folds: self.cfg.evaluate.folds,
            residual: self.cfg.features.residual,
            scaler_scope: self.cfg.evaluate.scaler_scope,
            seed: self.cfg.seed,
        };
        let datasets: Vec<CountryDataset> =
            self.cfg.countries.iter().map(|c| self.dataset(c)).collect::<Result<_, _>>()?;
        let jobs: Vec<(&CountryDataset, ClassifierKind)> = datasets
            .iter()
            .flat_map(|d| self.cfg.classifiers.iter().map(move |k| (d, *k)))
            .collect();
        let results: Vec<beirnet::Result<CvReport>> =
            self.pool.install(|| jobs.par_iter().map(|(d, k)| run_comparison(d, *k, &exp)).collect());
        let mut failures = Vec::new();
        for ((d, k), r) in jobs.iter().zip(results) {
            match r {
                Ok(rep) => {
                    log::info!(
                        "evaluate: {} {k} dF1 {:+.4} (model {:.4}, benchmark {:.4}), McNemar p {:.4}",
                        d.country,
                        rep.delta_f1,
                        rep.model.f1,
                        rep.benchmark.f1,
                        rep.mcnemar.p_value
                    );
                    w.write(&format!("{}_{}.json", d.country, k.code()), &to_json(&rep)?)?;
                }
                Err(e @ beirnet::Error::InsufficientData(_)) => {
                    log::warn!("evaluate: {} {k} not scored: {e}", d.country);
                    failures.push(json!({ "country": d.country, "kind": k, "error": e.to_string() }));
                }
                Err(e) => return Err(e.into()),
            }
        }
        w.write("failures.json", &to_json(&failures)?)?;
        self.finish(w, serde_json::to_value(&exp).map_err(|e| CliError::Data(e.to_string()))?)
    }

    pub fn granger(&mut self) -> Result<(), CliError> {
        let mut w = StageWriter::new(&self.out, Stage::Granger);
        self.require(&mut w, Stage::Features)?;
        let series = self.market_input(&mut w)?;
        let feats: Vec<NarrativeFeatures> = self
            .cfg
            .countries
            .iter()
            .map(|c| read_json(&self.stage_file(Stage::Features, &format!("{c}_features.json"))))
            .collect::<Result<_, _>>()?;
        let p = &self.cfg.preprocess;
        let panel = granger_panel(&self.cfg.countries, &series, &feats, p.k, p.fill_limit)?;
        let lag = self.cfg.granger.lag;
        let pairs = self.pool.install(|| pairwise_granger(&panel, lag))?;
        let graph = build_graph(&pairs, self.cfg.granger.alpha)?;
        let (d, (num, den)) = density(graph.nodes.len(), graph.edges.len());
        log::info!(
            "granger: {} nodes, {} edges, density {d:.4}, {} dates",
            graph.nodes.len(),
            graph.edges.len(),
            panel.dates.len()
        );
        let preds = beir_predecessors(&graph);
        w.write("graph.graphml", graph.to_graphml().as_bytes())?;
        w.write("graph.dot", graph.to_dot().as_bytes())?;
        w.write("graph.json", &to_json(&graph)?)?;
        w.write("predecessors.json", &to_json(&preds)?)?;
        w.write("predecessors.csv", &csv_bytes(|b| write_predecessors_csv(&preds, b))?)?;
        w.write("betweenness.csv", &betweenness_csv(&graph)?)?;
        let summary = json!({
            "nodes": graph.nodes.len(),
            "edges": graph.edges.len(),
            "density": d,
            "density_fraction": [num, den],
            "tests": graph.tests,
            "alpha": graph.alpha,
            "lag": lag,
            "dates": panel.dates.len(),
            "first_date": panel.dates.first(),
            "last_date": panel.dates.last(),
            "betweenness_normalization": graph.betweenness.normalization,
            "foreign_narrative_inflows": preds.iter().filter(|p| p.has_foreign_narrative()).map(|p| &p.country).collect::<Vec<_>>(),
        });
        w.write("summary.json", &to_json(&summary)?)?;
        self.finish(w, serde_json::to_value(&self.cfg.granger).map_err(|e| CliError::Data(e.to_string()))?)
    }

    pub fn report(&mut self) -> Result<(), CliError> {
        let mut w = StageWriter::new(&self.out, Stage::Report);
        self.require(&mut w, Stage::Evaluate)?;
        let mut reports = Vec::new();
        for c in &self.cfg.countries {
            for k in &self.cfg.classifiers {
                let path = self.stage_file(Stage::Evaluate, &format!("{c}_{}.json", k.code()));
                if path.exists() {
                    reports.push(read_json::<CvReport>(&path)?);
                }
            }
        }
        if reports.is_empty() {
            return Err(CliError::Data("no evaluation results to report".into()));
        }
        let tables: Vec<(TableKind, ResultTable)> = TableKind::ALL
            .iter()
            .map(|&t| (t, ResultTable::from_reports(t, &self.cfg.countries, &self.cfg.classifiers, &reports)))
            .collect();
        for (t, table) in &tables {
            w.write(t.file_name(), &csv_bytes(|b| table.write_csv(b))?)?;
        }
        // the narrative summary includes the graph when it has been built
        let graph: Option<serde_json::Value> = match self.manifest.require(&self.out, Stage::Report, Stage::Granger) {
            Ok(rec) => {
                w.inputs_from(rec);
                Some(read_json(&self.stage_file(Stage::Granger, "summary.json"))?)
            }
            Err(CliError::MissingStage { .. }) => None,
            Err(e) => return Err(e),
        };
        w.write("summary.md", summary_markdown(&tables, graph.as_ref()).as_bytes())?;
        self.finish(w, json!({ "tables": TableKind::ALL.len() }))
    }
}

fn betweenness_csv(g: &GrangerGraph) -> Result<Vec<u8>, CliError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Data(e.to_string());
    wtr.write_record(["node", "role", "country", "betweenness", "normalized", "quintile"]).map_err(err)?;
    for (i, n) in g.nodes.iter().enumerate() {
        wtr.write_record([
            n.name.clone(),
            n.role.as_str().to_string(),
            n.country.clone().unwrap_or_default(),
            g.betweenness.raw[i].to_string(),
            g.betweenness.normalized[i].to_string(),
            g.quintiles[i].to_string(),
        ])
        .map_err(err)?;
    }
    wtr.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

fn summary_markdown(tables: &[(TableKind, ResultTable)], graph: Option<&serde_json::Value>) -> String {
    let mut s = String::from("# Results\n");
    for (t, table) in tables {
        if !matches!(t, TableKind::DeltaF1 | TableKind::McNemarP) {
            continue;
        }
        s.push_str(&format!("\n## {}\n\n| country |", t.file_name().trim_end_matches(".csv")));
        for k in &table.kinds {
            s.push_str(&format!(" {k} |"));
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(table.kinds.len()));
        s.push('\n');
        for (c, row) in table.countries.iter().zip(&table.values) {
            s.push_str(&format!("| {c} |"));
            for v in row {
                match v {
                    Some(x) => s.push_str(&format!(" {x:.4} |")),
                    None => s.push_str(" |"),
                }
            }
            s.push('\n');
        }
    }
    if let Some(g) = graph {
        s.push_str(&format!(
            "\n## Granger network\n\n{} nodes, {} edges, density {:.4}.\n",
            g["nodes"], g["edges"], g["density"].as_f64().unwrap_or(f64::NAN)
        ));
    }
    s
}
