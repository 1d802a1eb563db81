//! End-to-end orchestration: preprocess → features → scores and
//! fluctuations → SOM attribution → explanations. Every stage has a
//! line-delimited record form so intermediate results can be saved and
//! reloaded.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::VariableSeries;
use crate::config::Config;
use crate::eval::{majority_vote, Ballot, EvalError, FactorSet, TripEval};
use crate::explain::{ExplanationReport, Explainer};
use crate::features::{Category, FeatureVectorSpec, FeatureWindow};
use crate::maneuver::extract_maneuvers;
use crate::score::{
    annotated_scores, find_fluctuations, FluctuationEvent, ScoreSeries, ScoreSource, Scorer,
};
use crate::som::{
    extract_f_gen, init_codebook, trip_to_grid, FGenOptions, GenerativeEvents, SomCodebook,
    TrainParams,
};
use crate::spatial::extract_spatial;
use crate::trip::{low_pass_uniform, resample_uniform, window_trip, ImuSample, TripRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Preprocess,
    Features,
    Score,
    Train,
    Infer,
    Explain,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Ingest => "ingest",
            Stage::Preprocess => "preprocess",
            Stage::Features => "features",
            Stage::Score => "score",
            Stage::Train => "train",
            Stage::Infer => "infer",
            Stage::Explain => "explain",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage{}{}: {message}", trip_label(.trip), window_label(.window))]
pub struct PipelineError {
    pub stage: Stage,
    pub trip: Option<String>,
    pub window: Option<usize>,
    pub message: String,
}

fn trip_label(trip: &Option<String>) -> String {
    trip.as_ref().map(|t| format!(" (trip {t})")).unwrap_or_default()
}

fn window_label(window: &Option<usize>) -> String {
    window.map(|u| format!(" at window {u}")).unwrap_or_default()
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            trip: None,
            window: None,
            message: message.to_string(),
        }
    }

    pub fn trip(mut self, trip_id: &str) -> Self {
        self.trip = Some(trip_id.to_string());
        self
    }

    pub fn window(mut self, u: usize) -> Self {
        self.window = Some(u);
        self
    }
}

/// Settings shared by every stage of a run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub config: Config,
    pub spec: FeatureVectorSpec,
    /// Prefer annotator scores over predicted ones when a trip has them.
    pub use_annotations: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::new(Config::default())
    }
}

impl RunConfig {
    pub fn new(config: Config) -> Self {
        Self {
            config,
            spec: FeatureVectorSpec::default(),
            use_annotations: true,
        }
    }

    /// F_GEN selection: top-k explanatory slots with a non-trivial weight.
    pub fn fgen_options(&self) -> FGenOptions {
        FGenOptions {
            k: self.config.topk,
            min_weight: self.config.som.fgen_min_weight,
            explanatory_only: true,
        }
    }

    pub fn train_params(&self) -> TrainParams {
        let s = &self.config.som;
        TrainParams {
            epochs: s.epochs,
            alpha0: s.alpha0,
            radius0: s.radius0,
            ..TrainParams::default()
        }
    }
}

/// Resample the IMU stream to the configured rate and low-pass every axis.
/// GPS and camera streams pass through unchanged.
pub fn preprocess(trip: &TripRecord, cfg: &Config) -> Result<TripRecord, PipelineError> {
    let err = |m: String| PipelineError::new(Stage::Preprocess, m).trip(&trip.trip_id);
    trip.validate().map_err(|e| err(e.to_string()))?;
    if trip.imu.len() < 2 {
        return Err(err(format!("need at least 2 IMU samples, got {}", trip.imu.len())));
    }
    let imu = resample_uniform(&trip.imu, cfg.imu_rate_hz);
    let dt = 1.0 / cfg.imu_rate_hz;
    let axis = |f: fn(&ImuSample) -> f64| {
        let v: Vec<f64> = imu.iter().map(f).collect();
        low_pass_uniform(&v, dt, cfg.lowpass_cutoff_hz).map_err(|e| err(e.to_string()))
    };
    let ax = axis(|s| s.ax)?;
    let ay = axis(|s| s.ay)?;
    let az = axis(|s| s.az)?;
    let mut out = trip.clone();
    out.imu = imu
        .iter()
        .enumerate()
        .map(|(i, s)| ImuSample {
            t: s.t,
            ax: ax[i],
            ay: ay[i],
            az: az[i],
        })
        .collect();
    Ok(out)
}

/// Feature windows of one trip plus any annotated instant scores.
#[derive(Debug, Clone, PartialEq)]
pub struct TripFeatures {
    pub trip_id: String,
    pub windows: Vec<FeatureWindow>,
    /// Ceil-mean annotator score per window, where annotated.
    pub annotated: Vec<Option<u8>>,
}

/// Preprocess, window, and encode a raw trip.
pub fn trip_features(trip: &TripRecord, run: &RunConfig) -> Result<TripFeatures, PipelineError> {
    let cfg = &run.config;
    let pre = preprocess(trip, cfg)?;
    let id = trip.trip_id.as_str();
    let windows = window_trip(&pre, cfg.delta_seconds)
        .map_err(|e| PipelineError::new(Stage::Features, e).trip(id))?;
    let mut out = Vec::with_capacity(windows.len());
    let mut annotated = Vec::with_capacity(windows.len());
    for w in &windows {
        let u = w.window_index;
        let m = extract_maneuvers(w, &cfg.maneuver)
            .map_err(|e| PipelineError::new(Stage::Features, e).trip(id).window(u))?;
        let s = extract_spatial(w, &cfg.spatial);
        out.push(run.spec.encode(u, &m, &s, &pre.meta));
        annotated.push(annotated_scores(std::slice::from_ref(w)).map(|v| v[0]));
    }
    Ok(TripFeatures {
        trip_id: trip.trip_id.clone(),
        windows: out,
        annotated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripScores {
    pub trip_id: String,
    pub series: ScoreSeries,
    pub fluctuations: Vec<FluctuationEvent>,
}

/// Annotated scores when every window has them (and the run allows it),
/// otherwise the scorer's predictions; then the fluctuation scan.
pub fn score_trip(
    features: &TripFeatures,
    run: &RunConfig,
    scorer: &dyn Scorer,
) -> Result<TripScores, PipelineError> {
    let annotated: Option<Vec<u8>> = features.annotated.iter().copied().collect();
    let series = match annotated {
        Some(scores) if run.use_annotations && !scores.is_empty() => ScoreSeries {
            scores,
            source: ScoreSource::Annotated,
        },
        _ => {
            let scores = features
                .windows
                .iter()
                .map(|w| {
                    scorer.score(&run.spec, w).map_err(|e| {
                        PipelineError::new(Stage::Score, e)
                            .trip(&features.trip_id)
                            .window(w.window_index)
                    })
                })
                .collect::<Result<Vec<u8>, _>>()?;
            ScoreSeries {
                scores,
                source: ScoreSource::Predicted,
            }
        }
    };
    let fluctuations = find_fluctuations(&series.scores, run.config.epsilon);
    Ok(TripScores {
        trip_id: features.trip_id.clone(),
        series,
        fluctuations,
    })
}

/// Training rows: each trip contributes its windows stacked to the
/// configured grid height.
pub fn training_samples(
    corpus: &[TripFeatures],
    run: &RunConfig,
) -> Result<Vec<Vec<f64>>, PipelineError> {
    let som = &run.config.som;
    let mut rows = Vec::new();
    for t in corpus {
        let grid = trip_to_grid(&t.windows, som.grid_windows, som.grid_policy)
            .map_err(|e| PipelineError::new(Stage::Train, e).trip(&t.trip_id))?;
        rows.extend(grid);
    }
    if rows.is_empty() {
        return Err(PipelineError::new(Stage::Train, "empty training corpus"));
    }
    Ok(rows)
}

pub fn train_codebook(corpus: &[TripFeatures], run: &RunConfig) -> Result<SomCodebook, PipelineError> {
    let som = &run.config.som;
    let rows = training_samples(corpus, run)?;
    let mut cb = init_codebook(&run.spec, som.rows, som.cols, som.seed)
        .map_err(|e| PipelineError::new(Stage::Train, e))?;
    cb.train(&rows, &run.train_params())
        .map_err(|e| PipelineError::new(Stage::Train, e))?;
    Ok(cb)
}

/// Attribution for one fluctuation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub trip_id: String,
    pub window: usize,
    pub fluctuation: Option<FluctuationEvent>,
    pub f_gen: GenerativeEvents,
}

/// F_GEN for every fluctuation of a trip, in window order.
pub fn infer_trip(
    features: &TripFeatures,
    scores: &TripScores,
    codebook: &SomCodebook,
    run: &RunConfig,
) -> Result<Vec<Inference>, PipelineError> {
    if !codebook.is_trained() {
        return Err(PipelineError::new(Stage::Infer, "codebook is untrained"));
    }
    let opts = run.fgen_options();
    scores
        .fluctuations
        .iter()
        .map(|ev| {
            let u = ev.window_index;
            let wrap = |m: String| {
                PipelineError::new(Stage::Infer, m)
                    .trip(&features.trip_id)
                    .window(u)
            };
            let w = features
                .windows
                .get(u)
                .ok_or_else(|| wrap("fluctuation beyond the feature windows".into()))?;
            let f_gen = extract_f_gen(codebook, w, &opts).map_err(|e| wrap(e.to_string()))?;
            Ok(Inference {
                trip_id: features.trip_id.clone(),
                window: u,
                fluctuation: Some(*ev),
                f_gen,
            })
        })
        .collect()
}

pub fn explain_inference(
    inf: &Inference,
    explainer: &Explainer,
) -> Result<ExplanationReport, PipelineError> {
    explainer
        .explain(&inf.trip_id, inf.window, inf.fluctuation, inf.f_gen.clone())
        .map_err(|e| {
            PipelineError::new(Stage::Explain, e)
                .trip(&inf.trip_id)
                .window(inf.window)
        })
}

/// One report per detected fluctuation window, ordered by window.
pub fn run_pipeline(
    run: &RunConfig,
    trip: &TripRecord,
    codebook: &SomCodebook,
    scorer: &dyn Scorer,
    explainer: &Explainer,
) -> Result<Vec<ExplanationReport>, PipelineError> {
    let features = trip_features(trip, run)?;
    let scores = score_trip(&features, run, scorer)?;
    infer_trip(&features, &scores, codebook, run)?
        .iter()
        .map(|inf| explain_inference(inf, explainer))
        .collect()
}

/// Pair each (trip, window) ballot group with the F_GEN produced for that
/// window. Ground truth is the majority vote of the group; a window with
/// no attribution scores as an empty generated set. Ballots without a
/// window match the trip's first attribution.
pub fn trip_evals<'a>(
    ballots: &[Ballot],
    generated: impl IntoIterator<Item = (&'a str, usize, &'a GenerativeEvents)>,
    threshold: f64,
) -> Result<Vec<TripEval>, EvalError> {
    let mut groups: BTreeMap<(String, Option<usize>), Vec<FactorSet>> = BTreeMap::new();
    for b in ballots {
        groups
            .entry((b.trip_id.clone(), b.window))
            .or_default()
            .push(b.factors.clone());
    }
    let generated: Vec<(&str, usize, &GenerativeEvents)> = generated.into_iter().collect();
    let mut out = Vec::with_capacity(groups.len());
    for ((trip, window), sets) in groups {
        let gt = majority_vote(&sets, threshold)?.factors;
        let hit = generated
            .iter()
            .find(|(t, u, _)| *t == trip && window.is_none_or(|w| w == *u));
        let ids = hit.map(|g| g.2.ids()).unwrap_or_default();
        let top = |k: usize| ids.iter().take(k).copied().collect::<FactorSet>();
        let trip_id = match window {
            Some(u) => format!("{trip}#{u}"),
            None => trip,
        };
        out.push(TripEval {
            trip_id,
            gt,
            top3: top(3),
            top5: top(5),
        });
    }
    Ok(out)
}

/// Window-level series for causal analysis over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalInputs {
    /// One series per explanatory maneuver or micro-event, named by code.
    pub candidates: Vec<VariableSeries>,
    /// Road type and weather, matched exactly.
    pub confounders: Vec<VariableSeries>,
    /// Degradation `5 − score`, so harmful factors get positive effects.
    pub response: Vec<f64>,
}

/// Stack every window of every trip; `scores` must list the same trips in
/// the same order with matching window counts.
pub fn causal_inputs(
    features: &[TripFeatures],
    scores: &[TripScores],
    spec: &FeatureVectorSpec,
) -> Result<CausalInputs, PipelineError> {
    if features.len() != scores.len() {
        return Err(PipelineError::new(
            Stage::Score,
            format!("{} feature trips but {} scored trips", features.len(), scores.len()),
        ));
    }
    let mut response = Vec::new();
    for (f, s) in features.iter().zip(scores) {
        if f.trip_id != s.trip_id || f.windows.len() != s.series.scores.len() {
            return Err(PipelineError::new(Stage::Score, "scores do not match the features").trip(&f.trip_id));
        }
        response.extend(s.series.scores.iter().map(|&x| 5.0 - x as f64));
    }
    let column = |slot: usize| -> Vec<f64> {
        features
            .iter()
            .flat_map(|f| f.windows.iter().map(move |w| w.raw[slot]))
            .collect()
    };
    let mut candidates = Vec::new();
    let mut confounders = Vec::new();
    for (slot, id) in spec.ids().enumerate() {
        if !id.is_explanatory() {
            continue;
        }
        let series = VariableSeries::new(id.code(), column(slot));
        if id.category() == Category::Confounder {
            confounders.push(series);
        } else {
            candidates.push(series);
        }
    }
    Ok(CausalInputs {
        candidates,
        confounders,
        response,
    })
}

/// Human-readable rendering of a report.
pub fn render_report_text(r: &ExplanationReport) -> String {
    let mut s = format!("trip {} window {}", r.trip_id, r.window_index);
    if let Some(f) = &r.fluctuation {
        s.push_str(&format!(
            " score {} (baseline {}, delta {})",
            f.current, f.baseline, f.delta
        ));
    }
    let ids: Vec<&str> = r.f_gen.events.iter().map(|e| e.id.code()).collect();
    s.push_str(&format!(" [{}]: {}", ids.join(", "), r.final_text));
    s
}

/// Line record of one feature window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub trip_id: String,
    pub window: usize,
    /// Hash of the feature layout the vectors were encoded with.
    pub spec: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotated: Option<u8>,
    pub raw: Vec<f64>,
    pub values: Vec<f64>,
}

/// Line record of one window's score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub trip_id: String,
    pub window: usize,
    pub score: u8,
    pub source: ScoreSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluctuation: Option<FluctuationEvent>,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: feature layout {got} does not match {expected}")]
    SpecMismatch {
        line: usize,
        expected: String,
        got: String,
    },
    #[error("trip {trip}: windows out of order at {window}")]
    Order { trip: String, window: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn feature_records(f: &TripFeatures, spec: &FeatureVectorSpec) -> Vec<FeatureRecord> {
    let hash = spec.hash();
    f.windows
        .iter()
        .zip(&f.annotated)
        .map(|(w, a)| FeatureRecord {
            trip_id: f.trip_id.clone(),
            window: w.window_index,
            spec: hash.clone(),
            annotated: *a,
            raw: w.raw.clone(),
            values: w.values.clone(),
        })
        .collect()
}

pub fn score_records(s: &TripScores) -> Vec<ScoreRecord> {
    s.series
        .scores
        .iter()
        .enumerate()
        .map(|(u, &score)| ScoreRecord {
            trip_id: s.trip_id.clone(),
            window: u,
            score,
            source: s.series.source,
            fluctuation: s.fluctuations.iter().find(|f| f.window_index == u).copied(),
        })
        .collect()
}

/// Write records as JSON lines.
pub fn write_jsonl<T: Serialize>(items: &[T], mut w: impl Write) -> Result<(), RecordError> {
    for it in items {
        serde_json::to_writer(&mut w, it).map_err(|e| std::io::Error::other(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read JSON lines, skipping blank lines.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(r: impl BufRead) -> Result<Vec<T>, RecordError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RecordError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Regroup feature records into trips, keeping first-appearance order.
pub fn features_from_records(
    records: Vec<FeatureRecord>,
    spec: &FeatureVectorSpec,
) -> Result<Vec<TripFeatures>, RecordError> {
    let expected = spec.hash();
    let mut order: Vec<String> = Vec::new();
    let mut by_trip: BTreeMap<String, TripFeatures> = BTreeMap::new();
    for (i, r) in records.into_iter().enumerate() {
        if r.spec != expected {
            return Err(RecordError::SpecMismatch {
                line: i + 1,
                expected,
                got: r.spec,
            });
        }
        if r.raw.len() != spec.len() || r.values.len() != spec.len() {
            return Err(RecordError::Parse {
                line: i + 1,
                message: format!("expected {} values", spec.len()),
            });
        }
        let t = by_trip.entry(r.trip_id.clone()).or_insert_with(|| {
            order.push(r.trip_id.clone());
            TripFeatures {
                trip_id: r.trip_id.clone(),
                windows: Vec::new(),
                annotated: Vec::new(),
            }
        });
        if r.window != t.windows.len() {
            return Err(RecordError::Order {
                trip: r.trip_id,
                window: r.window,
            });
        }
        t.windows.push(FeatureWindow {
            window_index: r.window,
            raw: r.raw,
            values: r.values,
        });
        t.annotated.push(r.annotated);
    }
    Ok(order
        .into_iter()
        .filter_map(|id| by_trip.remove(&id))
        .collect())
}

/// Regroup score records into trips, keeping first-appearance order.
pub fn scores_from_records(records: Vec<ScoreRecord>) -> Result<Vec<TripScores>, RecordError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_trip: BTreeMap<String, TripScores> = BTreeMap::new();
    for r in records {
        let t = by_trip.entry(r.trip_id.clone()).or_insert_with(|| {
            order.push(r.trip_id.clone());
            TripScores {
                trip_id: r.trip_id.clone(),
                series: ScoreSeries {
                    scores: Vec::new(),
                    source: r.source,
                },
                fluctuations: Vec::new(),
            }
        });
        if r.window != t.series.scores.len() {
            return Err(RecordError::Order {
                trip: r.trip_id,
                window: r.window,
            });
        }
        t.series.scores.push(r.score);
        t.fluctuations.extend(r.fluctuation);
    }
    Ok(order
        .into_iter()
        .filter_map(|id| by_trip.remove(&id))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureId;
    use crate::score::DefaultScorer;
    use crate::synth::{synthesize, EventKind, ScenarioScript, ScriptEvent};

    fn script(events: Vec<ScriptEvent>) -> ScenarioScript {
        ScenarioScript {
            events,
            ..ScenarioScript::default()
        }
    }

    fn ev(t_start: f64, t_end: f64, kind: EventKind) -> ScriptEvent {
        ScriptEvent {
            t_start,
            t_end,
            kind,
        }
    }

    #[test]
    fn quiet_trip_has_zero_features_and_no_fluctuation() {
        let run = RunConfig::default();
        let lt = synthesize(&script(vec![])).unwrap();
        let f = trip_features(&lt.trip, &run).unwrap();
        assert_eq!(f.windows.len(), 8);
        for w in &f.windows {
            for (id, v) in run.spec.ids().zip(&w.values) {
                if id.is_explanatory() && !matches!(id, FeatureId::RoadType | FeatureId::Weather) {
                    assert_eq!(*v, 0.0, "{id:?}");
                }
            }
        }
        let s = score_trip(&f, &run, &DefaultScorer::default()).unwrap();
        assert_eq!(s.series.source, ScoreSource::Annotated);
        assert!(s.fluctuations.is_empty());
    }

    #[test]
    fn closed_loop_weave_and_congestion() {
        let run = RunConfig::default();
        let lt = synthesize(&script(vec![
            ev(
                11.0,
                14.0,
                EventKind::Weave {
                    amplitude: 1.0,
                    frequency: 0.75,
                },
            ),
            ev(25.5, 29.5, EventKind::Congestion { level: 2 }),
        ]))
        .unwrap();
        let f = trip_features(&lt.trip, &run).unwrap();
        let aw = run.spec.index_of(FeatureId::Weaving).unwrap();
        let c = run.spec.index_of(FeatureId::Congestion).unwrap();
        for w in &f.windows {
            assert_eq!(w.raw[aw] > 0.0, w.window_index == 2, "window {}", w.window_index);
            let want = if w.window_index == 5 { 2.0 } else { 0.0 };
            assert_eq!(w.raw[c], want);
        }
        let s = score_trip(&f, &run, &DefaultScorer::default()).unwrap();
        let at: Vec<usize> = s.fluctuations.iter().map(|e| e.window_index).collect();
        assert_eq!(at, vec![2, 5]);
    }

    #[test]
    fn predicted_scores_without_annotations() {
        let run = RunConfig::default();
        let mut lt = synthesize(&script(vec![ev(15.5, 19.5, EventKind::RedLight)])).unwrap();
        lt.trip.annotations.clear();
        let f = trip_features(&lt.trip, &run).unwrap();
        let s = score_trip(&f, &run, &DefaultScorer::default()).unwrap();
        assert_eq!(s.series.source, ScoreSource::Predicted);
        assert_eq!(s.series.scores[3], 4);
        assert!(s.fluctuations.is_empty());
    }

    #[test]
    fn records_round_trip() {
        let run = RunConfig::default();
        let lt = synthesize(&script(vec![ev(15.5, 19.5, EventKind::LeaderBrake)])).unwrap();
        let f = trip_features(&lt.trip, &run).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&feature_records(&f, &run.spec), &mut buf).unwrap();
        let back: Vec<FeatureRecord> = read_jsonl(buf.as_slice()).unwrap();
        let trips = features_from_records(back, &run.spec).unwrap();
        assert_eq!(trips, vec![f.clone()]);

        let s = score_trip(&f, &run, &DefaultScorer::default()).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&score_records(&s), &mut buf).unwrap();
        let back = scores_from_records(read_jsonl(buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back, vec![s]);
    }

    #[test]
    fn errors_name_stage_and_window() {
        let run = RunConfig::default();
        let mut lt = synthesize(&script(vec![])).unwrap();
        lt.trip.gps.retain(|g| !(10.0..15.0).contains(&g.t));
        let e = trip_features(&lt.trip, &run).unwrap_err();
        assert_eq!(e.stage, Stage::Features);
        assert_eq!(e.window, Some(2));
        assert!(e.to_string().starts_with("features stage (trip synth-0) at window 2"));
    }

    #[test]
    fn untrained_codebook_is_refused() {
        let run = RunConfig::default();
        let lt = synthesize(&script(vec![])).unwrap();
        let f = trip_features(&lt.trip, &run).unwrap();
        let s = score_trip(&f, &run, &DefaultScorer::default()).unwrap();
        let cb = init_codebook(&run.spec, 2, 2, 1).unwrap();
        assert_eq!(infer_trip(&f, &s, &cb, &run).unwrap_err().stage, Stage::Infer);
    }
}
