use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const RED_LIGHT: &str = include_str!("../../../scenarios/red_light_stop.toml");

fn tripx(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_tripx"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut input = child.stdin.take().unwrap();
    if let Some(bytes) = stdin {
        input.write_all(bytes).unwrap();
    }
    drop(input);
    child.wait_with_output().unwrap()
}

fn ok(args: &[&str], stdin: Option<&[u8]>) -> Vec<u8> {
    let out = tripx(args, stdin);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = tripx(&[], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn infer_requires_codebook() {
    let out = tripx(&["infer"], Some(b""));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--codebook"));
}

#[test]
fn bad_mix_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tripx(
        &["synth", "--corpus", "2", "--out-dir", p(dir.path()), "--mix", "red_light=0.3"],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corrupt_trip_is_a_data_error() {
    let out = tripx(&["features"], Some(b"{\"imu\": [garbage\n"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_input_file_is_a_data_error() {
    let out = tripx(&["ingest", "--trip", "/nonexistent/trip.jsonl"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_features_score_chain_is_deterministic() {
    let chain = || {
        let trip = ok(&["synth"], Some(RED_LIGHT.as_bytes()));
        let feats = ok(&["features"], Some(&trip));
        ok(&["score"], Some(&feats))
    };
    let first = chain();
    assert_eq!(first, chain());
    let text = String::from_utf8(first).unwrap();
    let flagged: Vec<&str> = text
        .lines()
        .filter(|l| l.contains("\"fluctuation\":{"))
        .collect();
    assert_eq!(flagged.len(), 1, "{text}");
    assert!(flagged[0].contains("\"window\":3"), "{}", flagged[0]);
}

#[test]
fn ingest_canonicalizes_idempotently() {
    let trip = ok(&["synth"], Some(RED_LIGHT.as_bytes()));
    let once = ok(&["ingest"], Some(&trip));
    assert_eq!(ok(&["ingest"], Some(&once)), once);
}

/// Corpus → features → train → infer → explain → eval, twice with the same
/// seeds; every artifact must match byte for byte.
#[test]
fn corpus_pipeline_is_reproducible() {
    let run = |root: &Path| -> Vec<Vec<u8>> {
        let corpus = root.join("corpus");
        ok(
            &["synth", "--corpus", "12", "--seed", "3", "--out-dir", p(&corpus)],
            None,
        );
        let feats = root.join("features.jsonl");
        let cb = root.join("codebook.txt");
        let infs = root.join("inferences.jsonl");
        let reports = root.join("reports.jsonl");
        let trips = corpus.join("trips");
        ok(
            &["features", "--trip-dir", p(&trips), "--output", p(&feats)],
            None,
        );
        ok(
            &["train", "--features", p(&feats), "--output", p(&cb), "--seed", "9"],
            None,
        );
        ok(
            &["infer", "--codebook", p(&cb), "--features", p(&feats), "--output", p(&infs)],
            None,
        );
        ok(
            &["explain", "--inferences", p(&infs), "--output", p(&reports)],
            None,
        );
        let card = ok(
            &["eval", "--ballots", p(&corpus.join("ballots.jsonl")), "--reports", p(&reports)],
            None,
        );
        let mut out: Vec<Vec<u8>> = [&feats, &cb, &infs, &reports]
            .iter()
            .map(|f| fs::read(f).unwrap())
            .collect();
        out.push(card);
        out
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run(a.path());
    assert_eq!(first, run(b.path()));
    assert!(!first[3].is_empty(), "no reports produced");
    assert!(String::from_utf8_lossy(&first[4]).contains("mean_dice_top3"));
}
