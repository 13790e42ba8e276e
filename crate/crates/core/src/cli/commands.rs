use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{read_bytes, RunConfig};
use super::output::Outputs;
use super::{CliError, Command, Manifest};
use crate::calibration::{
    ablate, cross_validate_user_scores, load_gold_labels, write_calibration_csv, write_folds_csv, CalibrationError,
    ComponentScores, CvConfig, GoldLabelSet,
};
use crate::cluster::{
    nearest, representative_samples, sweep_k, write_sweep_csv, ClusterError, ClusterModel, KMeansConfig, Matrix,
};
use crate::embedder::{load_embeddings, phrase_key, EmbeddingTable, PhraseEmbedder};
use crate::event_store::{parse_events, EventLog, EventStoreError, Format};
use crate::metrics::{
    read_user_summaries, score_population, summarize, write_timeline_csv, write_user_summaries, Histogram,
    MetricsError, TimelineConfig, UserSummary,
};
use crate::synth::{archetype_cohort, generate_cohort, synthetic_embeddings, SynthError, UserSpec, INTERVAL_FAMILY};
use crate::topic_quality::{
    load_topics, npmi_coherence, topic_diversity, topics_from_log, umass_coherence, write_topics, CooccurrenceOptions,
    CooccurrenceStats, TopicError, TopicKeywordSet, TopicScores, NPMI_EPSILON,
};

pub(super) fn dispatch(command: Command, config: &RunConfig) -> Result<Manifest, CliError> {
    let mut out = Outputs::new(&config.out);
    match command {
        Command::Ingest => ingest(config, &mut out)?,
        Command::Cluster => cluster(config, &mut out)?,
        Command::SweepK => sweep(config, &mut out)?,
        Command::Score => score(config, &mut out)?,
        Command::Calibrate => calibrate(config, &mut out)?,
        Command::Ablate => run_ablation(config, &mut out)?,
        Command::TopicEval => topic_eval(config, &mut out)?,
        Command::Synth => synth(config, &mut out)?,
        Command::Report => report(config, &mut out)?,
    }
    out.finish(command.name(), config)
}

fn invalid(e: impl Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn broken(e: impl Display) -> CliError {
    CliError::Invariant(e.to_string())
}

impl From<EventStoreError> for CliError {
    fn from(e: EventStoreError) -> Self {
        match e {
            EventStoreError::Io(e) => CliError::Io(e.to_string()),
            other => invalid(other),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::EventStore(e) => e.into(),
            other => invalid(other),
        }
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        invalid(e)
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Io(e) => CliError::Io(e.to_string()),
            other => invalid(other),
        }
    }
}

impl From<TopicError> for CliError {
    fn from(e: TopicError) -> Self {
        invalid(e)
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        invalid(e)
    }
}

fn input_format(config: &RunConfig, path: &Path) -> Result<Format, CliError> {
    match &config.format {
        Some(f) => Ok(f.parse::<Format>()?),
        None => Ok(match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }),
    }
}

fn load_log(config: &RunConfig, out: &mut Outputs) -> Result<EventLog, CliError> {
    let path = config.require(&config.input, "input")?;
    let bytes = read_bytes(path)?;
    out.input("events", path, &bytes);
    let (log, report) = parse_events(&bytes[..], input_format(config, path)?)?;
    out.count("events_rejected", report.rejected);
    if report.accepted == 0 {
        return Err(invalid(format!("{}: no valid events", path.display())));
    }
    Ok(log)
}

fn jsonl_bytes(log: &EventLog) -> Result<Vec<u8>, CliError> {
    let mut bytes = Vec::new();
    log.write_jsonl(&mut bytes).map_err(broken)?;
    Ok(bytes)
}

fn ingest(config: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let path = config.require(&config.input, "input")?;
    let bytes = read_bytes(path)?;
    out.input("events", path, &bytes);
    let (log, report) = parse_events(&bytes[..], input_format(config, path)?)?;
    if report.accepted + report.rejected != report.total {
        return Err(broken("validation tallies do not add up"));
    }
    out.count("users", log.user_count());
    out.count("events", log.event_count());
    out.count("events_rejected", report.rejected);
    out.file("events.jsonl", jsonl_bytes(&log)?);
    out.json("validation.json", &report)?;
    if report.total > 0 && report.accepted == 0 {
        return Err(invalid(format!("{}: every record was rejected", path.display())));
    }
    Ok(())
}

fn load_table(config: &RunConfig, out: &mut Outputs) -> Result<Option<EmbeddingTable>, CliError> {
    let Some(path) = &config.embeddings else { return Ok(None) };
    let bytes = read_bytes(path)?;
    out.input("embeddings", path, &bytes);
    load_embeddings(&bytes[..]).map(Some).map_err(invalid)
}

fn distinct_phrases(log: &EventLog) -> Vec<String> {
    let set: BTreeSet<String> = log.events().flat_map(|e| e.topics.iter().map(|t| phrase_key(t))).collect();
    set.into_iter().collect()
}

fn embed_all(
    phrases: &[String],
    table: Option<&EmbeddingTable>,
    dim: usize,
    seed: u64,
    out: &mut Outputs,
) -> Result<Matrix, CliError> {
    let mut embedder = PhraseEmbedder::new(table, dim, seed);
    let rows: Vec<Vec<f64>> = phrases.iter().map(|p| embedder.embed(p)).collect::<Result<_, _>>().map_err(invalid)?;
    out.count("phrases", phrases.len());
    out.count("embedding_misses", embedder.misses());
    Ok(Matrix::from_rows(&rows)?)
}

fn kmeans_config(config: &RunConfig, k: usize) -> KMeansConfig {
    KMeansConfig {
        k,
        seed: config.seed,
        batch_size: config.batch_size,
        max_iters: config.max_iters,
        ..KMeansConfig::default()
    }
}

#[derive(Serialize)]
struct AssignmentRow<'a> {
    phrase: &'a str,
    cluster: u32,
}

fn cluster(config: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let k = config.clusters.ok_or_else(|| CliError::MissingInput("--clusters is required".into()))?;
    let log = load_log(config, out)?;
    let table = load_table(config, out)?;
    let phrases = distinct_phrases(&log);
    let vectors = embed_all(&phrases, table.as_ref(), config.dim, config.seed, out)?;
    let model = ClusterModel::fit_phrases(&phrases, &vectors, &kmeans_config(config, k))?;
    let (clustered, unresolved) = log.with_clusters(|t| model.cluster_of(t));
    if unresolved > 0 {
        return Err(broken(format!("{unresolved} events left without clusters")));
    }
    let samples = representative_samples(&model, &phrases, config.per_cluster, config.seed);

    let mut csv = csv::Writer::from_writer(Vec::new());
    for (phrase, &cluster) in &model.assignment {
        csv.serialize(AssignmentRow { phrase, cluster }).map_err(broken)?;
    }
    out.file("assignments.csv", csv.into_inner().map_err(broken)?);
    out.count("iterations", model.iterations);
    out.count("inertia", model.inertia);
    out.json("clusters.json", &model)?;
    out.file("clustered_events.jsonl", jsonl_bytes(&clustered)?);
    out.json("samples.json", &samples)?;
    Ok(())
}

fn sweep(config: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let log = load_log(config, out)?;
    let table = load_table(config, out)?;
    let phrases = distinct_phrases(&log);
    let vectors = embed_all(&phrases, table.as_ref(), config.dim, config.seed, out)?;
    let rows = sweep_k(&vectors, &config.ks, &kmeans_config(config, 1))?;
    let mut bytes = Vec::new();
    write_sweep_csv(&rows, &mut bytes).map_err(broken)?;
    out.file("k_sweep.csv", bytes);
    Ok(())
}

fn load_model(config: &RunConfig, out: &mut Outputs) -> Result<Option<ClusterModel>, CliError> {
    let Some(path) = &config.model else { return Ok(None) };
    let bytes = read_bytes(path)?;
    out.input("model", path, &bytes);
    let mut model: ClusterModel =
        serde_json::from_slice(&bytes).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    if model.centroids.len() != model.k || model.centroids.iter().any(|c| c.len() != model.dim) {
        return Err(invalid(format!("{}: centroids do not match K and dim", path.display())));
    }
    model.labels.clear();
    Ok(Some(model))
}

/// Attaches cluster ids through the model's phrase table, embedding unknown
/// phrases and taking the nearest centroid.
fn apply_model(
    log: &EventLog,
    model: &ClusterModel,
    table: Option<&EmbeddingTable>,
    seed: u64,
    out: &mut Outputs,
) -> Result<EventLog, CliError> {
    if let Some(t) = table {
        if t.dim() != model.dim {
            return Err(invalid(format!("embedding dim {} does not match model dim {}", t.dim(), model.dim)));
        }
    }
    let mut embedder = PhraseEmbedder::new(table, model.dim, seed);
    let mut lookup = BTreeMap::new();
    let mut unseen = 0usize;
    for phrase in distinct_phrases(log) {
        let id = match model.assignment.get(&phrase) {
            Some(&id) => id,
            None => {
                unseen += 1;
                nearest(&model.centroids, &embedder.embed(&phrase).map_err(invalid)?).0
            }
        };
        lookup.insert(phrase, id);
    }
    out.count("phrases_outside_model", unseen);
    out.count("embedding_misses", embedder.misses());
    let (clustered, unresolved) = log.with_clusters(|t| lookup.get(&phrase_key(t)).copied());
    if unresolved > 0 {
        return Err(broken(format!("{unresolved} events left without clusters")));
    }
    Ok(clustered)
}

/// The log with cluster ids, and K.
fn clustered_log(config: &RunConfig, out: &mut Outputs) -> Result<(EventLog, usize), CliError> {
    let log = load_log(config, out)?;
    match load_model(config, out)? {
        Some(model) => {
            if let Some(k) = config.clusters.filter(|&k| k != model.k) {
                return Err(invalid(format!("--clusters {k} contradicts the model's K = {}", model.k)));
            }
            let table = load_table(config, out)?;
            let log = apply_model(&log, &model, table.as_ref(), config.seed, out)?;
            Ok((log, model.k))
        }
        None => {
            let k =
                config.clusters.ok_or_else(|| CliError::MissingInput("--clusters or --model is required".into()))?;
            Ok((log, k))
        }
    }
}

fn score(config: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let (log, k) = clustered_log(config, out)?;
    let timeline_config =
        TimelineConfig { k, w_days: config.window_days, step_days: config.step_days, weights: config.weights };
    let timelines = score_population(&log, &timeline_config)?;
    let summaries: Vec<UserSummary> = timelines.iter().filter_map(summarize).collect();
    for s in &summaries {
        if !(0.0..=1.0 + 1e-12).contains(&s.h_mm_mean) || !s.fixation_mean.is_finite() {
            return Err(broken(format!("user {} has out-of-range normalized means", s.user_id)));
        }
    }
    let imputed =
        timelines.iter().flat_map(|t| &t.points).filter(|p| p.normalized.is_some_and(|n| n.recurrence_imputed)).count();
    out.count("users", timelines.len());
    out.count("windows", timelines.iter().map(|t| t.points.len()).sum::<usize>());
    out.count("empty_windows", timelines.iter().flat_map(|t| &t.points).filter(|p| p.values.is_none()).count());
    out.count("recurrence_imputed_windows", imputed);

    let mut bytes = Vec::new();
    write_timeline_csv(&timelines, &mut bytes).map_err(broken)?;
    out.file("timeline.csv", bytes);
    let mut bytes = Vec::new();
    write_user_summaries(&summaries, &mut bytes).map_err(broken)?;
    out.file("user_scores.csv", bytes);
    out.json("histograms.json", &Histogram::panels(&summaries, config.bins))?;
    Ok(())
}

fn load_summaries(config: &RunConfig, out: &mut Outputs) -> Result<Vec<UserSummary>, CliError> {
    let path = config.require(&config.input, "input")?;
    let bytes = read_bytes(path)?;
    out.input("user_scores", path, &bytes);
    read_user_summaries(&bytes[..]).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_gold(config: &RunConfig, out: &mut Outputs) -> Result<GoldLabelSet, CliError> {
    let path = config.require(&config.gold, "gold")?;
    let bytes = read_bytes(path)?;
    out.input("gold", path, &bytes);
    let gold = load_gold_labels(&bytes[..])?;
    out.count("gold_users", gold.len());
    out.count("gold_positives", gold.positives());
    out.count("fleiss_kappa", gold.kappa());
    Ok(gold)
}

fn cv_config(config: &RunConfig) -> CvConfig {
    CvConfig { folds: config.folds, repeats: config.repeats, seed: config.seed }
}

fn calibrate(config: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let summaries = load_summaries(config, out)?;
    let gold = load_gold(config, out)?;
    let scores: BTreeMap<String, f64> = summaries.iter().map(|s| (s.user_id.clone(), s.fixation_mean)).collect();
    let result = cross_validate_user_scores("Fixation", &scores, &gold, &cv_config(config))?;
    out.count("tau_mean", result.summary.threshold.mean);
    let results = [result];
    let mut bytes = Vec::new();
    write_calibration_csv(&results, &mut bytes).map_err(broken)?;
    out.file("calibration.csv", bytes);
    let mut bytes = Vec::new();
    write_folds_csv(&results, &mut bytes).map_err(broken)?;
    out.file("calibration_folds.csv", bytes);
    Ok(())
}

fn run_ablation(config: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let summaries = load_summaries(config, out)?;
    let gold = load_gold(config, out)?;
    let cohort: BTreeMap<String, ComponentScores> =
        summaries.iter().map(|s| (s.user_id.clone(), ComponentScores::from(s))).collect();
    let results = ablate(&cohort, &gold, &cv_config(config))?;
    if results.len() != 7 {
        return Err(broken(format!("ablation produced {} rows", results.len())));
    }
    let mut bytes = Vec::new();
    write_calibration_csv(&results, &mut bytes).map_err(broken)?;
    out.file("ablation.csv", bytes);
    let mut bytes = Vec::new();
    write_folds_csv(&results, &mut bytes).map_err(broken)?;
    out.file("ablation_folds.csv", bytes);
    Ok(())
}

fn topic_eval(config: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let log = load_log(config, out)?;
    let log = match load_model(config, out)? {
        Some(model) => {
            let table = load_table(config, out)?;
            apply_model(&log, &model, table.as_ref(), config.seed, out)?
        }
        None => log,
    };
    let topics = match &config.topics {
        Some(path) => {
            let bytes = read_bytes(path)?;
            out.input("topics", path, &bytes);
            load_topics(&bytes[..])?
        }
        None => {
            let topics = topics_from_log(&log, config.top_k);
            if topics.is_empty() {
                return Err(invalid(format!("no cluster has {} distinct phrases", config.top_k)));
            }
            TopicKeywordSet::new(topics)?
        }
    };
    let stats = CooccurrenceStats::from_event_log(
        &log,
        &CooccurrenceOptions { window: None, vocabulary: Some(topics.vocabulary()) },
    );
    let npmi = npmi_coherence(&topics, &stats, NPMI_EPSILON)?;
    let umass = umass_coherence(&topics, &stats)?;
    out.count("topics", topics.topics().len());
    out.count("documents", stats.documents());
    out.count("npmi_zero_frequency_pairs", npmi.zero_frequency);
    out.count("umass_zero_frequency_terms", umass.zero_frequency);
    out.json(
        "topic_scores.json",
        &TopicScores { diversity: topic_diversity(&topics), npmi: npmi.score, umass: umass.score },
    )?;
    let mut bytes = Vec::new();
    write_topics(topics.topics(), &mut bytes).map_err(broken)?;
    out.file("topics.jsonl", bytes);
    Ok(())
}

fn synth(config: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let specs: Vec<UserSpec> = match &config.input {
        Some(path) => {
            let bytes = read_bytes(path)?;
            out.input("cohort_spec", path, &bytes);
            serde_json::from_slice(&bytes).map_err(|e| invalid(format!("{}: {e}", path.display())))?
        }
        None => archetype_cohort(
            config.fixated,
            config.exploratory,
            config.clusters.unwrap_or(8) as u32,
            config.share,
            config.rate,
            config.seed,
        ),
    };
    let (log, gold) = generate_cohort(&specs, config.reliability, config.seed)?;
    let k = specs.iter().map(|s| s.k_true).max().unwrap_or(1);
    let table = synthetic_embeddings(k, config.dim, 0.1, config.seed);
    out.count("users", log.user_count());
    out.count("events", log.event_count());
    out.count("gold_positives", gold.positives());
    out.count("fleiss_kappa", gold.kappa());
    out.note(format!("inter-event gaps: {INTERVAL_FAMILY}"));
    out.note("gold label: dominant share >= 0.7 on >= 7 consecutive days; cluster_ids are the generating clusters");
    out.file("events.jsonl", jsonl_bytes(&log)?);
    let mut bytes = Vec::new();
    crate::calibration::write_gold_jsonl(&gold, &mut bytes).map_err(broken)?;
    out.file("gold.jsonl", bytes);
    let mut bytes = Vec::new();
    table.write_jsonl(&mut bytes).map_err(broken)?;
    out.file("embeddings.jsonl", bytes);
    Ok(())
}

#[derive(Deserialize)]
struct TimelineRow {
    user_id: String,
    t_end: i64,
    n_events: usize,
    diversity_norm: Option<f64>,
    dominance: Option<f64>,
    recurrence: Option<f64>,
    fixation: Option<f64>,
}

#[derive(Serialize)]
struct TrendRow<'a> {
    user_id: &'a str,
    date: String,
    t_end: i64,
    n_events: usize,
    diversity_norm: Option<f64>,
    dominance: Option<f64>,
    recurrence: Option<f64>,
    fixation: Option<f64>,
}

#[derive(Serialize)]
struct FlaggedRow<'a> {
    user_id: &'a str,
    fixation_mean: f64,
    n_windows: usize,
}

#[derive(Serialize)]
struct ClusterRow<'a> {
    user_id: &'a str,
    rank: usize,
    cluster: u32,
    count: u64,
    share: f64,
}

#[derive(Serialize)]
struct PhraseRow<'a> {
    user_id: &'a str,
    rank: usize,
    phrase: &'a str,
    count: u64,
}

#[derive(Serialize)]
struct ReportSummary {
    threshold: f64,
    threshold_is_default: bool,
    users: usize,
    flagged: usize,
    flagged_share: f64,
    flagged_users: Vec<String>,
}

fn ranked<K: Ord + Clone>(counts: BTreeMap<K, u64>, top: usize) -> Vec<(K, u64)> {
    let mut rows: Vec<(K, u64)> = counts.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows.truncate(top);
    rows
}

fn report(config: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let dir = config.require(&config.input, "input")?;
    let scores_path = dir.join("user_scores.csv");
    let timeline_path = dir.join("timeline.csv");
    let scores_bytes = read_bytes(&scores_path)?;
    let timeline_bytes = read_bytes(&timeline_path)?;
    out.input("user_scores", &scores_path, &scores_bytes);
    out.input("timeline", &timeline_path, &timeline_bytes);
    let summaries =
        read_user_summaries(&scores_bytes[..]).map_err(|e| invalid(format!("{}: {e}", scores_path.display())))?;

    if config.threshold_is_default {
        let warning = format!(
            "threshold {} is a default calibrated on another dataset; recalibrate with `calibrate` for this data",
            config.threshold
        );
        eprintln!("warning: {warning}");
        out.note(warning);
    }
    let flagged: Vec<&UserSummary> = summaries.iter().filter(|s| s.fixation_mean >= config.threshold).collect();
    let mut csv = csv::Writer::from_writer(Vec::new());
    for s in &flagged {
        csv.serialize(FlaggedRow { user_id: &s.user_id, fixation_mean: s.fixation_mean, n_windows: s.n_windows })
            .map_err(broken)?;
    }
    out.file("flagged_users.csv", csv.into_inner().map_err(broken)?);

    let rows: Vec<TimelineRow> = csv::Reader::from_reader(&timeline_bytes[..])
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(format!("{}: {e}", timeline_path.display())))?;
    let mut daily: BTreeMap<(&str, String), &TimelineRow> = BTreeMap::new();
    for row in &rows {
        let date = chrono::DateTime::from_timestamp(row.t_end, 0)
            .ok_or_else(|| invalid(format!("timestamp {} out of range", row.t_end)))?
            .date_naive()
            .to_string();
        daily.insert((row.user_id.as_str(), date), row);
    }
    let mut csv = csv::Writer::from_writer(Vec::new());
    for ((user_id, date), r) in daily {
        csv.serialize(TrendRow {
            user_id,
            date,
            t_end: r.t_end,
            n_events: r.n_events,
            diversity_norm: r.diversity_norm,
            dominance: r.dominance,
            recurrence: r.recurrence,
            fixation: r.fixation,
        })
        .map_err(broken)?;
    }
    out.file("daily_trends.csv", csv.into_inner().map_err(broken)?);

    if let Some(path) = &config.clustered {
        let bytes = read_bytes(path)?;
        out.input("clustered_events", path, &bytes);
        let (log, _) = parse_events(&bytes[..], input_format(config, path)?)?;
        let mut clusters = csv::Writer::from_writer(Vec::new());
        let mut phrases = csv::Writer::from_writer(Vec::new());
        for user in log.users() {
            let mut by_cluster: BTreeMap<u32, u64> = BTreeMap::new();
            let mut by_phrase: BTreeMap<String, u64> = BTreeMap::new();
            let mut tags = 0u64;
            for e in log.history(user)? {
                for t in &e.topics {
                    *by_phrase.entry(phrase_key(t)).or_default() += 1;
                }
                for &c in e.cluster_ids.iter().flatten() {
                    *by_cluster.entry(c).or_default() += 1;
                    tags += 1;
                }
            }
            for (rank, (cluster, count)) in ranked(by_cluster, config.top_k).into_iter().enumerate() {
                let share = count as f64 / tags as f64;
                clusters
                    .serialize(ClusterRow { user_id: user, rank: rank + 1, cluster, count, share })
                    .map_err(broken)?;
            }
            for (rank, (phrase, count)) in ranked(by_phrase, config.top_k).iter().enumerate() {
                phrases
                    .serialize(PhraseRow { user_id: user, rank: rank + 1, phrase, count: *count })
                    .map_err(broken)?;
            }
        }
        out.file("top_clusters.csv", clusters.into_inner().map_err(broken)?);
        out.file("word_frequencies.csv", phrases.into_inner().map_err(broken)?);
    }

    out.count("users", summaries.len());
    out.count("flagged", flagged.len());
    out.json(
        "report.json",
        &ReportSummary {
            threshold: config.threshold,
            threshold_is_default: config.threshold_is_default,
            users: summaries.len(),
            flagged: flagged.len(),
            flagged_share: if summaries.is_empty() { 0.0 } else { flagged.len() as f64 / summaries.len() as f64 },
            flagged_users: flagged.iter().map(|s| s.user_id.clone()).collect(),
        },
    )?;
    Ok(())
}
