use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{CliError, RunConfig};

/// Conventions every run relies on, named in each manifest.
pub const DECISIONS: [&str; 12] = [
    "window: half-open (t_end - w days, t_end]; grid starts at first event - 1 s + w and advances by step until the last event",
    "proportions: one increment per topic tag",
    "recurrence: per-cluster burstiness over item-level re-engagements, interval-count-weighted mean over clusters",
    "sigma: population standard deviation (burstiness and CV summaries)",
    "minmax: fitted jointly over all non-empty windows of all scored users; a constant range maps to 0.5",
    "recurrence undefined in a window: normalized value imputed as 0.5 and flagged",
    "threshold: score >= tau is fixated; candidates at midpoints between distinct scores, ties to the smallest",
    "cv: stratified folds, repeat r shuffled with seed + r",
    "phrase keys: NFC with outer whitespace trimmed, no case folding; misses use the trigram fallback embedder",
    "kmeans: greedy k-means++ seeding on a uniform subset, per-centre 1/n learning rate, epoch rollback on inertia increase, Lloyd refinement",
    "npmi: epsilon 1e-12; a pair with a zero-frequency word scores -1 and is counted",
    "umass: zero conditioning frequency replaced by 1 and counted",
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: BTreeMap<String, String>,
    pub counters: BTreeMap<String, Value>,
    pub decisions: Vec<String>,
    pub notes: Vec<String>,
}

/// Collects a command's artifacts, then writes them and the manifest.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
    inputs: Vec<InputDigest>,
    counters: BTreeMap<String, Value>,
    notes: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_owned(),
            files: BTreeMap::new(),
            inputs: Vec::new(),
            counters: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputDigest { role: role.to_owned(), path: path.to_owned(), sha256: sha256_hex(bytes) });
    }

    pub fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_owned(), bytes);
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Invariant(e.to_string()))?;
        bytes.push(b'\n');
        self.file(name, bytes);
        Ok(())
    }

    pub fn count<T: Serialize>(&mut self, key: &str, value: T) {
        self.counters.insert(key.to_owned(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn finish(self, command: &str, config: &RunConfig) -> Result<Manifest, CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::Io(format!("{}: {e}", self.dir.display())))?;
        let mut outputs = BTreeMap::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            outputs.insert(name.clone(), sha256_hex(bytes));
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            config: serde_json::to_value(config).map_err(|e| CliError::Invariant(e.to_string()))?,
            inputs: self.inputs,
            outputs,
            counters: self.counters,
            decisions: DECISIONS.iter().map(|d| d.to_string()).collect(),
            notes: self.notes,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Invariant(e.to_string()))?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}
