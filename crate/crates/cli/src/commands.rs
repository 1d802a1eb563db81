use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Deserialize;

use tripx::causal::analyze;
use tripx::config::Config;
use tripx::eval::{
    ballots_by_trip, mismatch_ate, read_ballots, scorecard, Ballot, FactorSet, TripResult,
};
use tripx::explain::{Explainer, GuidelineCorpus, Lexicon};
use tripx::features::FeatureId;
use tripx::pipeline::{
    causal_inputs, explain_inference, feature_records, features_from_records, infer_trip,
    read_jsonl, render_report_text, score_records, score_trip, scores_from_records,
    train_codebook, trip_evals, trip_features, write_jsonl, FeatureRecord, Inference, RunConfig,
    ScoreRecord, TripFeatures, TripScores,
};
use tripx::score::{scorer_by_name, Scorer};
use tripx::som::{load_codebook, load_codebook_for, save_codebook, GenerativeEvents};
use tripx::synth::{synthesize, synthesize_corpus, CorpusSpec, ScenarioKind, ScenarioScript};
use tripx::trip::{load_trip, parse_trip, save_trip, window_count, write_trip};

use crate::{
    CausalArgs, Classify, EvalArgs, ExplainArgs, FeaturesArgs, Failure, InferArgs, IngestArgs,
    MapDumpArgs, ScoreArgs, SynthArgs, TrainArgs,
};

fn is_stdio(path: Option<&PathBuf>) -> bool {
    path.is_none_or(|p| p.as_os_str() == "-")
}

fn reader(path: Option<&PathBuf>) -> Result<Box<dyn BufRead>, Failure> {
    if is_stdio(path) {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let p = path.unwrap();
    let f = File::open(p).data(format!("cannot open {}", p.display()))?;
    Ok(Box::new(BufReader::new(f)))
}

fn writer(path: Option<&PathBuf>) -> Result<Box<dyn Write>, Failure> {
    if is_stdio(path) {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    let p = path.unwrap();
    let f = File::create(p).internal(format!("cannot create {}", p.display()))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn source(path: Option<&PathBuf>) -> String {
    match path {
        Some(p) if !is_stdio(Some(p)) => p.display().to_string(),
        _ => "stdin".into(),
    }
}

fn finish(mut w: Box<dyn Write>) -> Result<(), Failure> {
    w.flush().internal("flush output")
}

fn emit<T: serde::Serialize>(items: &[T], path: Option<&PathBuf>) -> Result<(), Failure> {
    let mut w = writer(path)?;
    write_jsonl(items, &mut w).internal("write records")?;
    finish(w)
}

fn scorer(name: &str) -> Result<Box<dyn Scorer>, Failure> {
    scorer_by_name(name).usage("--scorer")
}

fn read_features(path: Option<&PathBuf>, run: &RunConfig) -> Result<Vec<TripFeatures>, Failure> {
    let what = format!("feature records from {}", source(path));
    let records: Vec<FeatureRecord> = read_jsonl(reader(path)?).data(&what)?;
    let trips = features_from_records(records, &run.spec).data(&what)?;
    if trips.is_empty() {
        return Err(Failure::Data(anyhow::anyhow!("{what}: no records")));
    }
    Ok(trips)
}

/// Scores for each feature trip, read from `path` or computed.
fn trip_scores(
    feats: &[TripFeatures],
    path: Option<&PathBuf>,
    run: &RunConfig,
    scorer: &dyn Scorer,
) -> Result<Vec<TripScores>, Failure> {
    let Some(p) = path else {
        return feats
            .iter()
            .map(|f| score_trip(f, run, scorer).data("scoring"))
            .collect();
    };
    let what = format!("score records from {}", p.display());
    let records: Vec<ScoreRecord> = read_jsonl(reader(Some(p))?).data(&what)?;
    let mut by_trip: BTreeMap<String, TripScores> = scores_from_records(records)
        .data(&what)?
        .into_iter()
        .map(|s| (s.trip_id.clone(), s))
        .collect();
    feats
        .iter()
        .map(|f| {
            by_trip
                .remove(&f.trip_id)
                .ok_or_else(|| Failure::Data(anyhow::anyhow!("{what}: no scores for trip {}", f.trip_id)))
        })
        .collect()
}

pub fn ingest(a: IngestArgs) -> Result<(), Failure> {
    let what = format!("trip from {}", source(a.trip.as_ref()));
    let trip = parse_trip(reader(a.trip.as_ref())?).data(&what)?;
    let mut w = writer(a.output.as_ref())?;
    if a.summary {
        let span = trip.span();
        let summary = serde_json::json!({
            "trip_id": trip.trip_id,
            "span": span,
            "windows": window_count(span, Config::default().delta_seconds),
            "imu": trip.imu.len(),
            "gps": trip.gps.len(),
            "frames": trip.frames.len(),
            "annotations": trip.annotations.len(),
        });
        writeln!(w, "{summary}").internal("write summary")?;
    } else {
        write_trip(&trip, &mut w).internal("write trip")?;
    }
    finish(w)
}

fn parse_mix(text: &str) -> Result<BTreeMap<ScenarioKind, f64>, Failure> {
    let mut mix = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, p) = part
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--mix entry `{part}` is not kind=p")))?;
        let kind: ScenarioKind = serde_json::from_value(serde_json::Value::String(k.trim().into()))
            .usage(format!("--mix kind `{k}`"))?;
        let p: f64 = p.trim().parse().usage(format!("--mix weight `{p}`"))?;
        mix.insert(kind, p);
    }
    Ok(mix)
}

pub fn synth(a: SynthArgs) -> Result<(), Failure> {
    if let Some(n) = a.corpus {
        let dir = a.out_dir.expect("clap enforces --out-dir");
        let mut spec = CorpusSpec::uniform(n, a.seed.unwrap_or(0));
        if let Some(m) = &a.mix {
            spec.mix = parse_mix(m)?;
        }
        spec.imu_noise = a.noise;
        spec.det_jitter = a.jitter;
        spec.min_factors = a.min_factors;
        spec.max_factors = a.max_factors;
        let corpus = synthesize_corpus(&spec).usage("corpus")?;
        let trips = dir.join("trips");
        fs::create_dir_all(&trips).internal(format!("create {}", trips.display()))?;
        for lt in &corpus {
            let p = trips.join(format!("{}.jsonl", lt.trip.trip_id));
            save_trip(&lt.trip, &p).internal(format!("write {}", p.display()))?;
        }
        let ballots: Vec<Ballot> = corpus.iter().flat_map(|lt| lt.ballots()).collect();
        emit(&ballots, Some(&dir.join("ballots.jsonl")))?;
        eprintln!("tripx: wrote {} trips and {} ballots to {}", corpus.len(), ballots.len(), dir.display());
        return Ok(());
    }
    let what = format!("script from {}", source(a.script.as_ref()));
    let mut text = String::new();
    reader(a.script.as_ref())?
        .read_to_string(&mut text)
        .data(&what)?;
    let mut script = ScenarioScript::parse(&text).data(&what)?;
    if let Some(s) = a.seed {
        script.seed = s;
    }
    let lt = synthesize(&script).data(&what)?;
    let mut w = writer(a.output.as_ref())?;
    write_trip(&lt.trip, &mut w).internal("write trip")?;
    finish(w)?;
    if let Some(p) = &a.ballots {
        emit(&lt.ballots(), Some(p))?;
    }
    Ok(())
}

fn trip_paths(a: &FeaturesArgs) -> Result<Vec<PathBuf>, Failure> {
    let mut paths = a.trip.clone();
    if let Some(dir) = &a.trip_dir {
        let mut found: Vec<PathBuf> = fs::read_dir(dir)
            .data(format!("cannot read {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        found.sort();
        if found.is_empty() {
            return Err(Failure::Data(anyhow::anyhow!("no .jsonl trips in {}", dir.display())));
        }
        paths.extend(found);
    }
    Ok(paths)
}

pub fn features(a: FeaturesArgs, cfg: Config) -> Result<(), Failure> {
    let run = RunConfig::new(cfg);
    let paths = trip_paths(&a)?;
    let extracted: Vec<TripFeatures> = if paths.is_empty() {
        let trip = parse_trip(io::stdin().lock()).data("trip from stdin")?;
        vec![trip_features(&trip, &run).data("trip from stdin")?]
    } else {
        let results: Vec<Result<TripFeatures, Failure>> = paths
            .par_iter()
            .map(|p| {
                let what = p.display().to_string();
                let trip = load_trip(p).data(&what)?;
                trip_features(&trip, &run).data(&what)
            })
            .collect();
        results.into_iter().collect::<Result<_, _>>()?
    };
    let records: Vec<FeatureRecord> = extracted
        .iter()
        .flat_map(|f| feature_records(f, &run.spec))
        .collect();
    emit(&records, a.output.as_ref())
}

pub fn score(a: ScoreArgs, cfg: Config) -> Result<(), Failure> {
    let mut run = RunConfig::new(cfg);
    run.use_annotations = !a.predicted;
    let scorer = scorer(&a.scorer)?;
    let feats = read_features(a.features.as_ref(), &run)?;
    let scores = trip_scores(&feats, None, &run, scorer.as_ref())?;
    let records: Vec<ScoreRecord> = scores.iter().flat_map(score_records).collect();
    emit(&records, a.output.as_ref())
}

pub fn train(a: TrainArgs, mut cfg: Config) -> Result<(), Failure> {
    if let Some(s) = a.seed {
        cfg.som.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.som.epochs = e;
    }
    if let Some(r) = a.rows {
        cfg.som.rows = r;
    }
    if let Some(c) = a.cols {
        cfg.som.cols = c;
    }
    cfg.validate().usage("training options")?;
    let run = RunConfig::new(cfg);
    let feats = read_features(a.features.as_ref(), &run)?;
    let cb = train_codebook(&feats, &run).data("training")?;
    save_codebook(&cb, &a.output).internal(format!("write {}", a.output.display()))?;
    eprintln!(
        "tripx: trained {}x{} codebook on {} trips",
        cb.rows(),
        cb.cols(),
        feats.len()
    );
    Ok(())
}

pub fn infer(a: InferArgs, mut cfg: Config) -> Result<(), Failure> {
    if let Some(k) = a.topk {
        cfg.topk = k;
    }
    let run = RunConfig::new(cfg);
    if run.config.topk == 0 || run.config.topk > run.spec.len() {
        return Err(Failure::Usage(format!(
            "--topk must be in 1..={}, got {}",
            run.spec.len(),
            run.config.topk
        )));
    }
    let cb = load_codebook_for(&a.codebook, &run.spec)
        .data(format!("codebook {}", a.codebook.display()))?;
    let scorer = scorer(&a.scorer)?;
    let feats = read_features(a.features.as_ref(), &run)?;
    let scores = trip_scores(&feats, a.scores.as_ref(), &run, scorer.as_ref())?;
    let mut out = Vec::new();
    for (f, s) in feats.iter().zip(&scores) {
        out.extend(infer_trip(f, s, &cb, &run).data("inference")?);
    }
    emit(&out, a.output.as_ref())
}

pub fn explain(a: ExplainArgs) -> Result<(), Failure> {
    let mut explainer = Explainer::default();
    if let Some(p) = &a.guidelines {
        explainer.corpus = GuidelineCorpus::load(p).data(format!("guidelines {}", p.display()))?;
    }
    if let Some(p) = &a.lexicon {
        explainer.lexicon = Lexicon::load(p).data(format!("lexicon {}", p.display()))?;
    }
    let what = format!("inference records from {}", source(a.inferences.as_ref()));
    let infs: Vec<Inference> = read_jsonl(reader(a.inferences.as_ref())?).data(&what)?;
    let reports = infs
        .iter()
        .map(|i| explain_inference(i, &explainer).data("explanation"))
        .collect::<Result<Vec<_>, _>>()?;
    emit(&reports, a.output.as_ref())?;
    if let Some(p) = &a.text {
        let mut w = writer(Some(p))?;
        for r in &reports {
            writeln!(w, "{}", render_report_text(r)).internal("write text")?;
        }
        finish(w)?;
    }
    Ok(())
}

/// The part of a report or inference record that evaluation needs.
#[derive(Deserialize)]
struct Attribution {
    trip_id: String,
    #[serde(alias = "window_index")]
    window: usize,
    f_gen: GenerativeEvents,
}

fn codes(set: &FactorSet) -> String {
    let v: Vec<&str> = set.iter().map(|f| f.code()).collect();
    if v.is_empty() {
        "-".into()
    } else {
        v.join(",")
    }
}

pub fn eval(a: EvalArgs, cfg: Config) -> Result<(), Failure> {
    if !(a.threshold > 0.0 && a.threshold <= 1.0) {
        return Err(Failure::Usage("--threshold must be in (0, 1]".into()));
    }
    let what = format!("ballots {}", a.ballots.display());
    let ballots = read_ballots(reader(Some(&a.ballots))?).data(&what)?;
    if ballots.is_empty() {
        return Err(Failure::Data(anyhow::anyhow!("{what}: no ballots")));
    }
    for (trip, sets) in ballots_by_trip(&ballots) {
        let per_window = ballots.iter().filter(|b| b.trip_id == trip).count();
        if sets.len() < 3 || per_window < 3 {
            eprintln!("tripx: warning: trip {trip} has fewer than 3 ballots");
        }
    }
    let what = format!("reports {}", a.reports.display());
    let attrs: Vec<Attribution> = read_jsonl(reader(Some(&a.reports))?).data(&what)?;
    let generated = attrs.iter().map(|r| (r.trip_id.as_str(), r.window, &r.f_gen));
    let evals = trip_evals(&ballots, generated, a.threshold).data("evaluation")?;
    let mut card = scorecard(&evals).data("evaluation")?;

    if let Some(fp) = &a.features {
        let run = RunConfig::new(cfg);
        let feats = read_features(Some(fp), &run)?;
        let scorer = scorer("default")?;
        let scores = trip_scores(&feats, a.scores.as_ref(), &run, scorer.as_ref())?;
        let inputs = causal_inputs(&feats, &scores, &run.spec).data("causal inputs")?;
        let results: Vec<TripResult> = evals
            .iter()
            .map(|e| TripResult {
                trip_id: e.trip_id.clone(),
                gt: e.gt.clone(),
                generated: e.top5.clone(),
            })
            .collect();
        card.mismatch = Some(
            mismatch_ate(&results, &inputs.response, &inputs.candidates, &inputs.confounders)
                .data("mismatch effect")?,
        );
    }

    let mut w = writer(a.output.as_ref())?;
    let mut line = |k: &str, v: String| writeln!(w, "{k}\t{v}").internal("write scorecard");
    line("metric", "value".into())?;
    line("windows", card.trips.to_string())?;
    line("mean_dice_top3", format!("{:.6}", card.mean_dice_top3))?;
    line("mean_dice_top5", format!("{:.6}", card.mean_dice_top5))?;
    for (cat, pct) in &card.error_pct {
        line(&format!("error_pct_{cat}"), format!("{pct:.2}"))?;
    }
    if let Some(m) = &card.mismatch {
        let mean = m.mean.map_or("-".into(), |v| format!("{v:.6}"));
        line("mismatch_ate_mean", mean)?;
        for (f, ate) in &m.per_feature {
            line(&format!("mismatch_ate_{}", f.code()), format!("{ate:.6}"))?;
        }
    }
    finish(w)?;

    if let Some(p) = &a.detail {
        let mut w = writer(Some(p))?;
        writeln!(w, "window\tgt\ttop3\ttop5\tdice_top3\tdice_top5").internal("write detail")?;
        for e in &evals {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
                e.trip_id,
                codes(&e.gt),
                codes(&e.top3),
                codes(&e.top5),
                e.dice_at(3),
                e.dice_at(5)
            )
            .internal("write detail")?;
        }
        finish(w)?;
    }
    Ok(())
}

pub fn analyze_causal(a: CausalArgs, cfg: Config) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&a.cutoff) {
        return Err(Failure::Usage("--cutoff must be in [0, 1]".into()));
    }
    let run = RunConfig::new(cfg);
    let feats = read_features(a.features.as_ref(), &run)?;
    let scorer = scorer("default")?;
    let scores = trip_scores(&feats, a.scores.as_ref(), &run, scorer.as_ref())?;
    let inputs = causal_inputs(&feats, &scores, &run.spec).data("causal inputs")?;
    let rows = analyze(&inputs.candidates, &inputs.confounders, &inputs.response, a.cutoff);
    let opt = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.6}"));
    let mut w = writer(a.output.as_ref())?;
    writeln!(w, "feature\tname\ttau\tate\tpairs\tstatus").internal("write table")?;
    for r in &rows {
        let name = r.name.parse::<FeatureId>().map_or("?", |f| f.name());
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.name,
            name,
            opt(r.tau),
            opt(r.ate),
            r.pairs,
            r.status.label()
        )
        .internal("write table")?;
    }
    finish(w)
}

pub fn map_dump(a: MapDumpArgs, cfg: Config) -> Result<(), Failure> {
    let cb = load_codebook(&a.codebook).data(format!("codebook {}", a.codebook.display()))?;
    let mut w = writer(a.output.as_ref())?;
    match &a.features {
        None => {
            let codes: Vec<&str> = cb.spec().ids().map(|f| f.code()).collect();
            writeln!(w, "neuron\trow\tcol\t{}", codes.join("\t")).internal("write map")?;
            for n in 0..cb.neurons() {
                let (r, c) = cb.position(n);
                let ws: Vec<String> = cb.weight(n).iter().map(|v| format!("{v:.6}")).collect();
                writeln!(w, "{n}\t{r}\t{c}\t{}", ws.join("\t")).internal("write map")?;
            }
        }
        Some(fp) => {
            let mut run = RunConfig::new(cfg);
            run.spec = cb.spec().clone();
            let feats = read_features(Some(fp), &run)?;
            writeln!(w, "trip\twindow\tneuron\trow\tcol\tdistance").internal("write map")?;
            for f in &feats {
                for win in &f.windows {
                    let (n, d) = cb.bmu(&win.values).data("bmu")?;
                    let (r, c) = cb.position(n);
                    writeln!(w, "{}\t{}\t{n}\t{r}\t{c}\t{d:.6}", f.trip_id, win.window_index)
                        .internal("write map")?;
                }
            }
        }
    }
    finish(w)
}
