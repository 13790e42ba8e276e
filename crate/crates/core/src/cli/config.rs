use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::CliError;
use crate::metrics::Weights;

/// Default flagging threshold, taken from a calibration on a different dataset.
pub const DEFAULT_THRESHOLD: f64 = 0.352;

/// Command-line flags. Every flag may also be given in the `--config` file.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct Flags {
    /// Flat `key = value` file; keys are flag names, flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Primary input file (or directory for `report`).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// JSONL phrase embedding table.
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Number of clusters K.
    #[arg(long, global = true)]
    pub clusters: Option<usize>,
    /// A `clusters.json` written by `cluster`.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Gold-label JSONL.
    #[arg(long, global = true)]
    pub gold: Option<PathBuf>,
    /// Topic keyword JSONL for `topic-eval`.
    #[arg(long, global = true)]
    pub topics: Option<PathBuf>,
    /// Clustered events for the `report` frequency tables.
    #[arg(long, global = true)]
    pub clustered: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub window_days: Option<u32>,
    #[arg(long, global = true)]
    pub step_days: Option<u32>,
    /// `alpha,beta,gamma`.
    #[arg(long, global = true)]
    pub weights: Option<WeightList>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Input event format, `jsonl` or `csv`; inferred from the extension otherwise.
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// Comma-separated K values for `sweep-k`.
    #[arg(long, global = true)]
    pub ks: Option<KList>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    /// Fallback embedding dimension.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Probability that a simulated annotator votes the true label.
    #[arg(long, global = true)]
    pub reliability: Option<f64>,
    /// Representative phrases sampled per cluster.
    #[arg(long, global = true)]
    pub per_cluster: Option<usize>,
    /// Keywords per topic and rows per frequency table.
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    /// Histogram bins per panel.
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    /// Synthetic fixated users when no cohort spec is given.
    #[arg(long, global = true)]
    pub fixated: Option<usize>,
    /// Synthetic exploratory users when no cohort spec is given.
    #[arg(long, global = true)]
    pub exploratory: Option<usize>,
    /// Synthetic mean events per day.
    #[arg(long, global = true)]
    pub rate: Option<f64>,
    /// Dominant share of synthetic fixated users.
    #[arg(long, global = true)]
    pub share: Option<f64>,
    /// Worker threads (does not affect results).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightList(pub Weights);

impl FromStr for WeightList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("weight {p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [alpha, beta, gamma] if parts.iter().all(|w| w.is_finite() && *w >= 0.0) => {
                Ok(WeightList(Weights { alpha, beta, gamma }))
            }
            _ => Err(format!("expected three non-negative weights alpha,beta,gamma, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KList(pub Vec<usize>);

impl FromStr for KList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let ks: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("K {p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        if ks.is_empty() {
            return Err("empty K list".into());
        }
        Ok(KList(ks))
    }
}

/// Fully resolved settings of one run, as recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub clusters: Option<usize>,
    pub model: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub clustered: Option<PathBuf>,
    pub seed: u64,
    pub window_days: u32,
    pub step_days: u32,
    pub weights: Weights,
    pub folds: usize,
    pub repeats: usize,
    pub threshold: f64,
    #[serde(skip)]
    pub threshold_is_default: bool,
    pub out: PathBuf,
    pub format: Option<String>,
    pub ks: Vec<usize>,
    pub batch_size: usize,
    pub max_iters: usize,
    pub dim: usize,
    pub reliability: f64,
    pub per_cluster: usize,
    pub top_k: usize,
    pub bins: usize,
    pub fixated: usize,
    pub exploratory: usize,
    pub rate: f64,
    pub share: f64,
    #[serde(skip)]
    pub threads: Option<usize>,
}

/// Parses `key = value` lines; `#` starts a comment, `-` and `_` are interchangeable in keys.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("config line {}: expected key = value", i + 1)))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Validation(format!("config line {}: unknown key {key:?}", i + 1)));
        }
        map.insert(key, value.trim().to_owned());
    }
    Ok(map)
}

const KEYS: [&str; 30] = [
    "input",
    "embeddings",
    "clusters",
    "model",
    "gold",
    "topics",
    "clustered",
    "seed",
    "window_days",
    "step_days",
    "weights",
    "folds",
    "repeats",
    "threshold",
    "out",
    "format",
    "ks",
    "batch_size",
    "max_iters",
    "dim",
    "reliability",
    "per_cluster",
    "top_k",
    "bins",
    "fixated",
    "exploratory",
    "rate",
    "share",
    "threads",
    "config",
];

fn pick<T>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    file.get(key)
        .map(|v| v.parse::<T>().map_err(|e| CliError::Validation(format!("config key {key}: {e}"))))
        .transpose()
}

impl RunConfig {
    pub fn resolve(flags: Flags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => parse_config_file(&read_text(path)?)?,
            None => BTreeMap::new(),
        };
        let f = &file;
        let threshold = pick(flags.threshold, f, "threshold")?;
        let config = RunConfig {
            input: pick(flags.input, f, "input")?,
            embeddings: pick(flags.embeddings, f, "embeddings")?,
            clusters: pick(flags.clusters, f, "clusters")?,
            model: pick(flags.model, f, "model")?,
            gold: pick(flags.gold, f, "gold")?,
            topics: pick(flags.topics, f, "topics")?,
            clustered: pick(flags.clustered, f, "clustered")?,
            seed: pick(flags.seed, f, "seed")?.unwrap_or(0),
            window_days: pick(flags.window_days, f, "window_days")?.unwrap_or(7),
            step_days: pick(flags.step_days, f, "step_days")?.unwrap_or(1),
            weights: pick(flags.weights, f, "weights")?.map_or_else(Weights::default, |w| w.0),
            folds: pick(flags.folds, f, "folds")?.unwrap_or(3),
            repeats: pick(flags.repeats, f, "repeats")?.unwrap_or(10),
            threshold: threshold.unwrap_or(DEFAULT_THRESHOLD),
            threshold_is_default: threshold.is_none(),
            out: pick(flags.out, f, "out")?.unwrap_or_else(|| PathBuf::from("out")),
            format: pick(flags.format, f, "format")?,
            ks: pick(flags.ks, f, "ks")?.map_or_else(|| vec![100, 200, 300, 400], |k| k.0),
            batch_size: pick(flags.batch_size, f, "batch_size")?.unwrap_or(1024),
            max_iters: pick(flags.max_iters, f, "max_iters")?.unwrap_or(100),
            dim: pick(flags.dim, f, "dim")?.unwrap_or(crate::embedder::DEFAULT_DIM),
            reliability: pick(flags.reliability, f, "reliability")?.unwrap_or(0.9),
            per_cluster: pick(flags.per_cluster, f, "per_cluster")?.unwrap_or(10),
            top_k: pick(flags.top_k, f, "top_k")?.unwrap_or(10),
            bins: pick(flags.bins, f, "bins")?.unwrap_or(20),
            fixated: pick(flags.fixated, f, "fixated")?.unwrap_or(50),
            exploratory: pick(flags.exploratory, f, "exploratory")?.unwrap_or(50),
            rate: pick(flags.rate, f, "rate")?.unwrap_or(10.0),
            share: pick(flags.share, f, "share")?.unwrap_or(0.9),
            threads: pick(flags.threads, f, "threads")?,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.window_days == 0 {
            return bad("--window-days must be positive".into());
        }
        if self.step_days == 0 {
            return bad("--step-days must be positive".into());
        }
        if self.folds < 2 || self.repeats == 0 {
            return bad(format!("need --folds >= 2 and --repeats >= 1, got {} and {}", self.folds, self.repeats));
        }
        if !self.threshold.is_finite() {
            return bad("--threshold must be finite".into());
        }
        if self.bins == 0 || self.top_k == 0 || self.batch_size == 0 || self.max_iters == 0 {
            return bad("--bins, --top-k, --batch-size and --max-iters must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.reliability) || !(0.0..=1.0).contains(&self.share) {
            return bad("--reliability and --share must lie in [0, 1]".into());
        }
        if self.dim < crate::embedder::MIN_FALLBACK_DIM {
            return bad(format!("--dim must be at least {}", crate::embedder::MIN_FALLBACK_DIM));
        }
        if self.threads == Some(0) {
            return bad("--threads must be positive".into());
        }
        Ok(())
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        path.as_deref().ok_or_else(|| CliError::MissingInput(format!("--{flag} is required")))
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingInput(format!("{}: not found", path.display())),
        _ => CliError::Io(format!("{}: {e}", path.display())),
    })
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read_bytes(path)?).map_err(|_| CliError::Validation(format!("{}: not UTF-8", path.display())))
}
