//! Run manifest: what each stage read and wrote, by SHA-256.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Ingest,
    Aggregate,
    Preprocess,
    Features,
    Evaluate,
    Granger,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Aggregate => "aggregate",
            Stage::Preprocess => "preprocess",
            Stage::Features => "features",
            Stage::Evaluate => "evaluate",
            Stage::Granger => "granger",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Write via a sibling temp file and rename, so readers never see a
/// partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Manifest key for a path: relative to the output directory when inside it.
pub fn key_for(out: &Path, path: &Path) -> String {
    match path.strip_prefix(out) {
        Ok(rel) => rel.to_string_lossy().replace('\\', "/"),
        Err(_) => path.to_string_lossy().into_owned(),
    }
}

fn path_for(out: &Path, key: &str) -> PathBuf {
    let p = Path::new(key);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out.join(p)
    }
}

impl Manifest {
    pub fn load(out: &Path) -> Result<Manifest, CliError> {
        let path = out.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                ..Manifest::default()
            });
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, out: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        write_atomic(&out.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn stage(&self, s: Stage) -> Option<&StageRecord> {
        self.stages.get(s.name())
    }

    /// Check that `needed` ran and that neither its inputs nor its outputs
    /// changed on disk since.
    pub fn require(&self, out: &Path, running: Stage, needed: Stage) -> Result<&StageRecord, CliError> {
        let rec = self.stage(needed).ok_or_else(|| CliError::MissingStage {
            running: running.name(),
            needed: needed.name(),
        })?;
        for (what, files) in [("output", &rec.outputs), ("input", &rec.inputs)] {
            for (key, hash) in files {
                let path = path_for(out, key);
                let current = if path.exists() { Some(sha256_file(&path)?) } else { None };
                if current.as_deref() != Some(hash.as_str()) {
                    return Err(CliError::Stale {
                        stage: needed.name(),
                        detail: format!("{what} `{key}` changed or is missing"),
                    });
                }
            }
        }
        Ok(rec)
    }
}

/// Collects a stage's input and output hashes while it runs.
#[derive(Debug)]
pub struct StageWriter {
    pub out: PathBuf,
    pub stage: Stage,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl StageWriter {
    pub fn new(out: &Path, stage: Stage) -> Self {
        StageWriter {
            out: out.to_path_buf(),
            stage,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn dir(&self) -> PathBuf {
        self.out.join(self.stage.name())
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let h = sha256_file(path)?;
        self.inputs.insert(key_for(&self.out, path), h);
        Ok(())
    }

    /// Record the outputs of an upstream stage as inputs.
    pub fn inputs_from(&mut self, rec: &StageRecord) {
        self.inputs.extend(rec.outputs.iter().map(|(k, v)| (k.clone(), v.clone())));
    }

    /// Write `bytes` to `<out>/<stage>/<name>`.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir().join(name);
        write_atomic(&path, bytes)?;
        self.outputs.insert(key_for(&self.out, &path), sha256_bytes(bytes));
        Ok(path)
    }

    pub fn finish(self, manifest: &mut Manifest, config_hash: &str, seed: u64, params: serde_json::Value) {
        manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        manifest.stages.insert(
            self.stage.name().to_string(),
            StageRecord {
                config_hash: config_hash.to_string(),
                seed,
                params,
                inputs: self.inputs,
                outputs: self.outputs,
            },
        );
    }
}
