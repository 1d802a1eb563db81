use std::io::BufReader;

use proptest::prelude::*;

use tripx::causal::kendall_tau;
use tripx::explain::Explainer;
use tripx::features::FeatureId;
use tripx::pipeline::{
    feature_records, features_from_records, read_jsonl, run_pipeline, train_codebook,
    trip_features, write_jsonl, FeatureRecord, RunConfig,
};
use tripx::score::DefaultScorer;
use tripx::synth::{synthesize, synthesize_corpus, CorpusSpec, ScenarioKind, ScenarioScript};
use tripx::trip::{load_trip, save_trip};

const RED_LIGHT: &str = include_str!("../../../scenarios/red_light_stop.toml");

#[test]
fn red_light_stop_is_explained_by_light_and_stop() {
    let run = RunConfig::default();
    let script = ScenarioScript::parse(RED_LIGHT).unwrap();
    let target = synthesize(&script).unwrap();

    let corpus = synthesize_corpus(&CorpusSpec::uniform(60, 11)).unwrap();
    let mut feats: Vec<_> = corpus
        .iter()
        .map(|lt| trip_features(&lt.trip, &run).unwrap())
        .collect();
    feats.push(trip_features(&target.trip, &run).unwrap());
    let cb = train_codebook(&feats, &run).unwrap();

    let reports = run_pipeline(
        &run,
        &target.trip,
        &cb,
        &DefaultScorer::default(),
        &Explainer::default(),
    )
    .unwrap();
    assert_eq!(reports.len(), 1, "{reports:?}");
    let r = &reports[0];
    assert_eq!(r.window_index, 3);
    let top3: Vec<FeatureId> = r.f_gen.ids().into_iter().take(3).collect();
    assert!(top3.contains(&FeatureId::TrafficLight), "{top3:?}");
    assert!(top3.contains(&FeatureId::AbruptStop), "{top3:?}");
    assert!(!r.final_text.is_empty());
}

#[test]
fn trip_file_round_trip() {
    let script = ScenarioScript::parse(RED_LIGHT).unwrap();
    let trip = synthesize(&script).unwrap().trip;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trip.jsonl");
    save_trip(&trip, &path).unwrap();
    assert_eq!(load_trip(&path).unwrap(), trip);
}

#[test]
fn feature_records_round_trip_through_jsonl() {
    let run = RunConfig::default();
    let script = ScenarioScript::parse(RED_LIGHT).unwrap();
    let f = trip_features(&synthesize(&script).unwrap().trip, &run).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&feature_records(&f, &run.spec), &mut buf).unwrap();
    let back: Vec<FeatureRecord> = read_jsonl(BufReader::new(&buf[..])).unwrap();
    let trips = features_from_records(back, &run.spec).unwrap();
    assert_eq!(trips, vec![f]);
}

#[test]
fn mix_controls_scenario_share() {
    let mut spec = CorpusSpec::uniform(200, 5);
    spec.mix.clear();
    spec.mix.insert(ScenarioKind::RedLight, 0.5);
    spec.mix.insert(ScenarioKind::Weave, 0.5);
    spec.max_factors = 1;
    let corpus = synthesize_corpus(&spec).unwrap();
    let with_light = corpus
        .iter()
        .filter(|lt| lt.planted.iter().any(|f| f.contains(&FeatureId::TrafficLight)))
        .count();
    assert!((70..=130).contains(&with_light), "{with_light} of 200");
    for lt in &corpus {
        assert_eq!(lt.event_windows().len(), 1);
    }
}

#[test]
fn corpus_is_reproducible() {
    let spec = CorpusSpec::uniform(8, 99);
    let a = synthesize_corpus(&spec).unwrap();
    let b = synthesize_corpus(&spec).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.trip, y.trip);
        assert_eq!(x.planted, y.planted);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kendall_tau_is_bounded_and_antisymmetric(
        pairs in prop::collection::vec((0u8..5, 0u8..5), 3..40)
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        if let (Ok(t), Ok(tn)) = (kendall_tau(&x, &y), kendall_tau(&x, &neg)) {
            prop_assert!((-1.0..=1.0).contains(&t));
            prop_assert!((t + tn).abs() < 1e-9);
            prop_assert!((t - kendall_tau(&y, &x).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn synthesized_features_stay_normalized(seed in any::<u64>()) {
        let run = RunConfig::default();
        let lt = synthesize_corpus(&CorpusSpec::uniform(1, seed)).unwrap().remove(0);
        let f = trip_features(&lt.trip, &run).unwrap();
        prop_assert_eq!(f.windows.len(), lt.planted.len());
        for w in &f.windows {
            prop_assert!(w.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
