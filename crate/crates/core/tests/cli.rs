use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

fn fixation(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fixation")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn ok(args: &[&str]) {
    let (code, err) = fixation(args);
    assert_eq!(code, 0, "{args:?}: {err}");
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

/// synth → cluster → score in `root`, returning the score directory.
fn pipeline(root: &Path, extra: &[&str], synth_args: &[&str]) -> PathBuf {
    let syn = root.join("syn");
    let cl = root.join("cl");
    let sc = root.join("sc");
    let mut args = vec!["synth", "--out", p(&syn), "--dim", "16", "--clusters", "6", "--reliability", "1"];
    args.extend_from_slice(synth_args);
    ok(&args);
    let events = syn.join("events.jsonl");
    let embeddings = syn.join("embeddings.jsonl");
    let mut args =
        vec!["cluster", "--input", p(&events), "--embeddings", p(&embeddings), "--clusters", "6", "--out", p(&cl)];
    args.extend_from_slice(extra);
    ok(&args);
    let clustered = cl.join("clustered_events.jsonl");
    let mut args = vec!["score", "--input", p(&clustered), "--clusters", "6", "--out", p(&sc)];
    args.extend_from_slice(extra);
    ok(&args);
    sc
}

#[test]
fn every_command_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let sc = pipeline(root, &[], &["--fixated", "10", "--exploratory", "10", "--rate", "6"]);
    let gold = root.join("syn/gold.jsonl");
    let scores = sc.join("user_scores.csv");
    let clustered = root.join("cl/clustered_events.jsonl");
    ok(&["ingest", "--input", p(&root.join("syn/events.jsonl")), "--out", p(&root.join("ing"))]);
    ok(&["calibrate", "--input", p(&scores), "--gold", p(&gold), "--out", p(&root.join("cal"))]);
    ok(&["ablate", "--input", p(&scores), "--gold", p(&gold), "--out", p(&root.join("abl"))]);
    ok(&["topic-eval", "--input", p(&clustered), "--top-k", "4", "--out", p(&root.join("te"))]);
    ok(&[
        "sweep-k",
        "--input",
        p(&clustered),
        "--embeddings",
        p(&root.join("syn/embeddings.jsonl")),
        "--ks",
        "2,4,8,16",
        "--out",
        p(&root.join("sw")),
    ]);
    ok(&["report", "--input", p(&sc), "--clustered", p(&clustered), "--out", p(&root.join("rep"))]);

    let expect = [
        ("syn", &["events.jsonl", "gold.jsonl", "embeddings.jsonl"][..]),
        ("ing", &["events.jsonl", "validation.json"]),
        ("cl", &["clusters.json", "clustered_events.jsonl", "samples.json", "assignments.csv"]),
        ("sc", &["timeline.csv", "histograms.json", "user_scores.csv"]),
        ("cal", &["calibration.csv", "calibration_folds.csv"]),
        ("abl", &["ablation.csv", "ablation_folds.csv"]),
        ("te", &["topic_scores.json", "topics.jsonl"]),
        ("sw", &["k_sweep.csv"]),
        ("rep", &["flagged_users.csv", "daily_trends.csv", "top_clusters.csv", "word_frequencies.csv", "report.json"]),
    ];
    for (sub, files) in expect {
        let found = artifacts(&root.join(sub));
        for f in files.iter().chain(&["manifest.json"]) {
            assert!(found.contains_key(*f), "{sub}/{f} missing");
        }
        let manifest: serde_json::Value = serde_json::from_slice(&found["manifest.json"]).unwrap();
        assert!(manifest["decisions"].as_array().unwrap().len() >= 5);
        for f in files {
            assert!(manifest["outputs"][*f].is_string(), "{sub}: {f} not in manifest");
        }
    }

    let sweep = std::fs::read_to_string(root.join("sw/k_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().next(), Some("K,intra,inter,ratio"));
    assert_eq!(sweep.lines().count(), 5);
    let ablation = std::fs::read_to_string(root.join("abl/ablation.csv")).unwrap();
    assert_eq!(
        ablation.lines().next(),
        Some("subset,tau_mean,tau_std,acc_mean,acc_std,prec_mean,prec_std,rec_mean,rec_std,f1_mean,f1_std")
    );
    let subsets: Vec<&str> = ablation.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(subsets, ["Diversity", "Dominance", "Recurrence", "Div.+Dom.", "Div.+Rec.", "Dom.+Rec.", "All"]);
    let hist: serde_json::Value = serde_json::from_slice(&std::fs::read(sc.join("histograms.json")).unwrap()).unwrap();
    let panels: Vec<&str> = hist.as_array().unwrap().iter().map(|h| h["panel"].as_str().unwrap()).collect();
    assert_eq!(panels, ["diversity", "dominance", "recurrence", "combined"]);
    let scores: serde_json::Value =
        serde_json::from_slice(&std::fs::read(root.join("te/topic_scores.json")).unwrap()).unwrap();
    for key in ["diversity", "npmi", "umass"] {
        assert!(scores[key].is_f64());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let missing = dir.path().join("nope.jsonl");
    assert_eq!(fixation(&["ingest", "--input", p(&missing), "--out", p(&out)]).0, 2);
    assert_eq!(fixation(&["score", "--out", p(&out)]).0, 2);
    assert_eq!(fixation(&["report", "--input", p(dir.path()), "--out", p(&out)]).0, 2);

    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "flavour = mint\n").unwrap();
    assert_eq!(fixation(&["ingest", "--config", p(&conf)]).0, 3);

    let events = dir.path().join("e.jsonl");
    std::fs::write(&events, "{\"user_id\":\"a\",\"timestamp\":1,\"content_id\":\"x\",\"topics\":[\"p\"]}\n").unwrap();
    let (code, err) = fixation(&["score", "--input", p(&events), "--clusters", "4", "--out", p(&out)]);
    assert_eq!(code, 3, "{err}");
    assert_eq!(err.lines().count(), 1);
    assert_eq!(fixation(&["ingest", "--input", p(&events), "--format", "xml", "--out", p(&out)]).0, 3);
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("e.csv");
    std::fs::write(
        &events,
        "user_id,timestamp,content_id,topics,cluster_ids\na,1,x,p|q,\nb,2024-01-01T00:00:00Z,y,q,\n",
    )
    .unwrap();
    let conf = dir.path().join("run.conf");
    let out = dir.path().join("o");
    std::fs::write(&conf, format!("input = {}\nout = {}\n", events.display(), dir.path().join("ignored").display()))
        .unwrap();
    ok(&["ingest", "--config", p(&conf), "--out", p(&out)]);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["accepted"], 2);
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("run");
    let mut seen: Option<Vec<BTreeMap<String, Vec<u8>>>> = None;
    for threads in ["1", "4", "3"] {
        let _ = std::fs::remove_dir_all(&root);
        let sc = pipeline(&root, &["--threads", threads], &["--fixated", "6", "--exploratory", "6", "--rate", "5"]);
        let now = vec![artifacts(&root.join("syn")), artifacts(&root.join("cl")), artifacts(&sc)];
        if let Some(prev) = &seen {
            assert!(prev == &now, "artifacts differ with {threads} threads");
        }
        seen = Some(now);
    }
}

#[test]
fn report_flags_exactly_the_fixated_users() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let sc = pipeline(root, &[], &["--fixated", "14", "--exploratory", "149", "--rate", "6", "--share", "0.95"]);
    let rep = root.join("rep");
    let (code, err) = fixation(&["report", "--input", p(&sc), "--out", p(&rep)]);
    assert_eq!(code, 0);
    assert!(err.contains("warning"), "{err}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(rep.join("report.json")).unwrap()).unwrap();
    let flagged: Vec<&str> = report["flagged_users"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let expected: Vec<String> = (0..14).map(|i| format!("fix{i:03}")).collect();
    assert_eq!(flagged, expected);
    assert_eq!(report["users"], 163);
}

#[test]
fn fully_fixated_user_is_flagged_with_high_trend() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let sc = pipeline(root, &[], &["--fixated", "1", "--exploratory", "9", "--rate", "6", "--share", "1"]);
    let rep = root.join("rep");
    ok(&["report", "--input", p(&sc), "--out", p(&rep), "--threshold", "0.352"]);
    let flagged = std::fs::read_to_string(rep.join("flagged_users.csv")).unwrap();
    assert!(flagged.lines().any(|l| l.starts_with("fix000,")));
    let trends = std::fs::read_to_string(rep.join("daily_trends.csv")).unwrap();
    let header: Vec<&str> = trends.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "fixation").unwrap();
    let fix: Vec<f64> = trends
        .lines()
        .filter(|l| l.starts_with("fix000,"))
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect();
    assert!(fix.len() >= 20);
    assert!(fix.iter().all(|&f| f > 0.6), "{fix:?}");
}

#[test]
fn low_scores_flag_nobody() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("sc");
    std::fs::create_dir_all(&sc).unwrap();
    let mut scores = String::from(
        "user_id,n_windows,diversity_mean,dominance_mean,recurrence_mean,h_mm_mean,d_mm_mean,r_mm_mean,fixation_mean\n",
    );
    for i in 0..20 {
        scores.push_str(&format!("u{i},5,0.9,0.2,0.1,0.9,0.1,0.5,{}\n", 0.1 + i as f64 * 0.01));
    }
    std::fs::write(sc.join("user_scores.csv"), scores).unwrap();
    std::fs::write(
        sc.join("timeline.csv"),
        "user_id,t_end,n_events,diversity_raw,diversity_norm,dominance,recurrence,h_norm_mm,d_mm,r_mm,fixation\n",
    )
    .unwrap();
    let rep = dir.path().join("rep");
    ok(&["report", "--input", p(&sc), "--out", p(&rep)]);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(rep.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["flagged"], 0);
}
