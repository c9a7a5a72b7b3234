//! GDELT GKG v2 record parsing, theme/country filtering and file ingestion.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::ThemeTaxonomy;

/// Number of tab-separated columns in a GKG 2.1 export line.
pub const GKG_V21_COLUMNS: usize = 27;

/// One news item reduced to the fields the pipeline uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GkgRecord {
    pub record_id: String,
    pub date: NaiveDate,
    pub themes: Vec<String>,
    pub avg_tone: f64,
    pub country_codes: BTreeSet<String>,
}

/// Column indices of the fields we read. Defaults follow the public
/// GKG 2.1 layout with the enhanced theme and location fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GkgSchema {
    pub record_id: usize,
    pub date: usize,
    pub themes: usize,
    pub locations: usize,
    pub tone: usize,
}

impl Default for GkgSchema {
    fn default() -> Self {
        GkgSchema {
            record_id: 0,
            date: 1,
            themes: 8,
            locations: 10,
            tone: 15,
        }
    }
}

impl GkgSchema {
    /// V1 theme (7) and V1 location (9) columns.
    pub fn v1_fields() -> Self {
        GkgSchema {
            themes: 7,
            locations: 9,
            ..Self::default()
        }
    }

    fn min_columns(&self) -> usize {
        [self.record_id, self.date, self.themes, self.locations, self.tone]
            .into_iter()
            .max()
            .unwrap_or(0)
            + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    BadColumnCount,
    BadTone,
    BadDate,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::BadColumnCount => "bad-column-count",
            SkipReason::BadTone => "bad-tone",
            SkipReason::BadDate => "bad-date",
        })
    }
}

/// Parse one tab-delimited GKG line. Malformed lines come back as a skip
/// reason rather than an error.
pub fn parse_gkg_line(line: &str, schema: &GkgSchema) -> std::result::Result<GkgRecord, SkipReason> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let wanted = schema.min_columns();
    let mut fields: [&str; 5] = [""; 5];
    let targets = [schema.record_id, schema.date, schema.themes, schema.locations, schema.tone];
    let mut count = 0;
    for (i, field) in line.split('\t').enumerate() {
        count = i + 1;
        for (slot, &t) in targets.iter().enumerate() {
            if t == i {
                fields[slot] = field;
            }
        }
        if count >= wanted {
            break;
        }
    }
    if count < wanted {
        return Err(SkipReason::BadColumnCount);
    }
    let [record_id, date, themes, locations, tone] = fields;

    let date = parse_gkg_date(date).ok_or(SkipReason::BadDate)?;
    let avg_tone = tone
        .split(',')
        .next()
        .and_then(|t| t.trim().parse::<f64>().ok())
        .filter(|t| t.is_finite() && (-10.0..=10.0).contains(t))
        .ok_or(SkipReason::BadTone)?;

    Ok(GkgRecord {
        record_id: record_id.to_owned(),
        date,
        themes: split_themes(themes),
        avg_tone,
        country_codes: location_countries(locations),
    })
}

/// `YYYYMMDD` optionally followed by `HHMMSS`.
fn parse_gkg_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if s.len() < 8 || !s.as_bytes()[..8].iter().all(u8::is_ascii_digit) {
        return None;
    }
    let y: i32 = s[0..4].parse().ok()?;
    let m: u32 = s[4..6].parse().ok()?;
    let d: u32 = s[6..8].parse().ok()?;
    NaiveDate::from_ymd_opt(y, m, d)
}

/// Theme labels in first-seen order, offsets stripped, duplicates dropped.
fn split_themes(field: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for entry in field.split(';') {
        let label = entry.split(',').next().unwrap_or("").trim();
        if !label.is_empty() && seen.insert(label) {
            out.push(label.to_owned());
        }
    }
    out
}

/// FIPS country codes from a V1 or V2 locations field
/// (`type#name#country#...` entries separated by `;`).
fn location_countries(field: &str) -> BTreeSet<String> {
    field
        .split(';')
        .filter_map(|loc| loc.split('#').nth(2))
        .map(str::trim)
        .filter(|cc| cc.len() == 2 && cc.bytes().all(|b| b.is_ascii_alphabetic()))
        .map(str::to_ascii_uppercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestFilter {
    /// FIPS codes; a record must mention at least one.
    pub countries: BTreeSet<String>,
    pub min_ecofin_themes: usize,
}

impl IngestFilter {
    pub fn new(target_country: impl Into<String>, min_ecofin_themes: usize) -> Result<Self> {
        Self::any_of([target_country.into()], min_ecofin_themes)
    }

    /// Keep records that mention any of `countries`.
    pub fn any_of<I, S>(countries: I, min_ecofin_themes: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if min_ecofin_themes == 0 {
            return Err(Error::InvalidInput("min_ecofin_themes must be >= 1".into()));
        }
        let countries: BTreeSet<String> = countries.into_iter().map(|c| c.into().to_ascii_uppercase()).collect();
        if countries.is_empty() {
            return Err(Error::InvalidInput("filter needs at least one country".into()));
        }
        Ok(IngestFilter {
            countries,
            min_ecofin_themes,
        })
    }

    /// Country filter with the default three-theme economic threshold.
    pub fn for_country(target_country: impl Into<String>) -> Self {
        Self::new(target_country, 3).expect("3 is a valid threshold")
    }
}

/// True iff the record mentions a target country and carries at least
/// `min_ecofin_themes` distinct Ecofin themes.
pub fn passes_filter(rec: &GkgRecord, filter: &IngestFilter, tax: &ThemeTaxonomy) -> bool {
    if filter.countries.is_disjoint(&rec.country_codes) {
        return false;
    }
    // themes are already deduplicated at parse time, but records may be
    // constructed by hand
    let distinct: HashSet<&str> = rec
        .themes
        .iter()
        .map(String::as_str)
        .filter(|t| tax.is_ecofin(t))
        .collect();
    distinct.len() >= filter.min_ecofin_themes
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines_read: u64,
    pub parsed: u64,
    pub filtered_in: u64,
    pub skipped: BTreeMap<SkipReason, u64>,
    pub bytes_read: u64,
    pub file_errors: Vec<FileError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileError {
    pub path: PathBuf,
    pub message: String,
}

impl IngestStats {
    pub fn skipped_total(&self) -> u64 {
        self.skipped.values().sum()
    }

    fn merge(&mut self, other: IngestStats) {
        self.lines_read += other.lines_read;
        self.parsed += other.parsed;
        self.filtered_in += other.filtered_in;
        self.bytes_read += other.bytes_read;
        for (k, v) in other.skipped {
            *self.skipped.entry(k).or_default() += v;
        }
        self.file_errors.extend(other.file_errors);
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutput {
    pub records: Vec<GkgRecord>,
    pub stats: IngestStats,
}

/// Open a plain or gzip-compressed file, sniffing the gzip magic bytes.
pub fn open_maybe_gzip(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::with_capacity(1 << 20, MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::with_capacity(1 << 20, file)))
    }
}

/// Parse and filter one stream of GKG lines. Output is sorted by date.
pub fn ingest_reader(
    reader: impl BufRead,
    schema: &GkgSchema,
    filter: &IngestFilter,
    tax: &ThemeTaxonomy,
) -> std::io::Result<IngestOutput> {
    let mut out = IngestOutput::default();
    let mut reader = reader;
    let mut buf = Vec::with_capacity(64 * 1024);
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        out.stats.bytes_read += n as u64;
        out.stats.lines_read += 1;
        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        let line = String::from_utf8_lossy(&buf);
        match parse_gkg_line(&line, schema) {
            Ok(rec) => {
                out.stats.parsed += 1;
                if passes_filter(&rec, filter, tax) {
                    out.stats.filtered_in += 1;
                    out.records.push(rec);
                }
            }
            Err(reason) => *out.stats.skipped.entry(reason).or_default() += 1,
        }
    }
    out.records.sort_by_key(|r| r.date);
    Ok(out)
}

/// Ingest several files in parallel. Records keep file order and are
/// date-sorted within each file; unreadable files are recorded in the stats
/// and skipped.
pub fn ingest_files(
    paths: &[PathBuf],
    schema: &GkgSchema,
    filter: &IngestFilter,
    tax: &ThemeTaxonomy,
) -> IngestOutput {
    let per_file: Vec<IngestOutput> = paths
        .par_iter()
        .map(|path| {
            let result = open_maybe_gzip(path).and_then(|r| {
                ingest_reader(r, schema, filter, tax).map_err(|e| Error::io(path, e))
            });
            result.unwrap_or_else(|e| IngestOutput {
                records: Vec::new(),
                stats: IngestStats {
                    file_errors: vec![FileError {
                        path: path.clone(),
                        message: e.to_string(),
                    }],
                    ..IngestStats::default()
                },
            })
        })
        .collect();
    let mut out = IngestOutput::default();
    for part in per_file {
        out.records.extend(part.records);
        out.stats.merge(part.stats);
    }
    out
}

/// Apply the filter to already-parsed records.
pub fn filter_records(
    records: &[GkgRecord],
    filter: &IngestFilter,
    tax: &ThemeTaxonomy,
) -> Vec<GkgRecord> {
    records
        .iter()
        .filter(|r| passes_filter(r, filter, tax))
        .cloned()
        .collect()
}

/// Write records as newline-delimited JSON.
pub fn write_ndjson<W: Write>(records: &[GkgRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<ndjson>", e))?;
    }
    Ok(())
}

pub fn read_ndjson<R: BufRead>(r: R) -> Result<Vec<GkgRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<ndjson>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GkgRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: "record ndjson".into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Render a record as a GKG 2.1 line (enhanced themes with offsets, enhanced
/// locations, tone block). Columns not modelled are left empty.
pub fn to_gkg_line(rec: &GkgRecord) -> String {
    let mut cols = vec![String::new(); GKG_V21_COLUMNS];
    cols[0] = rec.record_id.clone();
    cols[1] = format!("{}000000", rec.date.format("%Y%m%d"));
    cols[2] = "1".into();
    cols[3] = "example.com".into();
    cols[7] = rec.themes.join(";");
    cols[8] = rec
        .themes
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{t},{}", 100 + 37 * i))
        .collect::<Vec<_>>()
        .join(";");
    cols[10] = rec
        .country_codes
        .iter()
        .map(|cc| format!("1#{cc}#{cc}#{cc}##0#0#{cc}#0"))
        .collect::<Vec<_>>()
        .join(";");
    cols[9] = rec
        .country_codes
        .iter()
        .map(|cc| format!("1#{cc}#{cc}#{cc}#0#0#{cc}"))
        .collect::<Vec<_>>()
        .join(";");
    cols[15] = format!("{},1.5,1.2,2.7,20.1,0.0,350", rec.avg_tone);
    cols.join("\t")
}
