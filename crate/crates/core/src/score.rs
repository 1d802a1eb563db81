//! Likert driving scores: annotator aggregation, predicted window scores and
//! fluctuation detection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureId, FeatureVectorSpec, FeatureWindow};
use crate::trip::WindowSlice;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("no scores to aggregate")]
    EmptyScores,
    #[error("agreement needs at least 2 scores, got {0}")]
    TooFewScores(usize),
    #[error("baseline needs at least one earlier window")]
    EmptyHistory,
    #[error("score {0} outside 1..=5")]
    OutOfRange(u8),
    #[error("scorer `{0}` is not available")]
    ScorerUnavailable(String),
}

fn check_range(scores: &[u8]) -> Result<(), ScoreError> {
    match scores.iter().find(|s| !(1..=5).contains(*s)) {
        Some(&s) => Err(ScoreError::OutOfRange(s)),
        None => Ok(()),
    }
}

/// Integer ceiling of the mean, computed exactly.
fn ceil_mean(scores: &[u8]) -> u8 {
    let n = scores.len() as u32;
    let sum: u32 = scores.iter().map(|&s| s as u32).sum();
    sum.div_ceil(n) as u8
}

/// Ground-truth score of one instant: ceiling of the annotators' mean.
pub fn instant_score(annotator_scores: &[u8]) -> Result<u8, ScoreError> {
    if annotator_scores.is_empty() {
        return Err(ScoreError::EmptyScores);
    }
    check_range(annotator_scores)?;
    Ok(ceil_mean(annotator_scores))
}

/// Spread above which a trip's annotation should be redone.
pub const RELAUNCH_STD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// Population standard deviation of the ratings.
    pub std: f64,
    pub relaunch: bool,
}

pub fn annotator_agreement(annotator_scores: &[u8]) -> Result<Agreement, ScoreError> {
    if annotator_scores.len() < 2 {
        return Err(ScoreError::TooFewScores(annotator_scores.len()));
    }
    check_range(annotator_scores)?;
    let n = annotator_scores.len() as f64;
    let mean = annotator_scores.iter().map(|&s| s as f64).sum::<f64>() / n;
    let var = annotator_scores
        .iter()
        .map(|&s| (s as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    Ok(Agreement {
        std,
        relaunch: std > RELAUNCH_STD,
    })
}

/// Ceiling of the mean score over the earlier windows.
pub fn baseline_score(history: &[u8]) -> Result<u8, ScoreError> {
    if history.is_empty() {
        return Err(ScoreError::EmptyHistory);
    }
    check_range(history)?;
    Ok(ceil_mean(history))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationEvent {
    pub window_index: usize,
    pub current: u8,
    pub baseline: u8,
    pub delta: u8,
}

/// A fluctuation fires when the current score departs from the baseline by
/// strictly more than `epsilon`. The returned event's `window_index` is the
/// history length, i.e. the position of `current` in the series.
pub fn detect_fluctuation(history: &[u8], current: u8, epsilon: f64) -> Option<FluctuationEvent> {
    let baseline = baseline_score(history).ok()?;
    let delta = current.abs_diff(baseline);
    (delta as f64 > epsilon).then_some(FluctuationEvent {
        window_index: history.len(),
        current,
        baseline,
        delta,
    })
}

/// Scan a whole series; every window after the first is tested against the
/// windows before it.
pub fn find_fluctuations(scores: &[u8], epsilon: f64) -> Vec<FluctuationEvent> {
    (1..scores.len())
        .filter_map(|u| detect_fluctuation(&scores[..u], scores[u], epsilon))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    Annotated,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub scores: Vec<u8>,
    pub source: ScoreSource,
}

/// Per-window instant scores from the trip's annotations. `None` when any
/// window has no annotation.
pub fn annotated_scores(windows: &[WindowSlice<'_>]) -> Option<Vec<u8>> {
    windows
        .iter()
        .map(|w| {
            let s: Vec<u8> = w.annotations.iter().map(|a| a.score).collect();
            instant_score(&s).ok()
        })
        .collect()
}

/// Maps one feature window to a Likert score.
pub trait Scorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, spec: &FeatureVectorSpec, window: &FeatureWindow) -> Result<u8, ScoreError>;
}

/// Penalty table: one point for each active maneuver (normalized value at
/// or above `maneuver_gate`), for leader braking, heavy congestion, a
/// pedestrian, a red light, a heavy vehicle, and a fast-closing leader
/// (joint code 2 or 3). The score is 5 minus the points, never below 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultScorer {
    pub maneuver_gate: f64,
}

impl Default for DefaultScorer {
    fn default() -> Self {
        Self { maneuver_gate: 0.25 }
    }
}

impl DefaultScorer {
    pub fn penalty(&self, id: FeatureId, raw: f64, normalized: f64) -> u32 {
        use FeatureId::*;
        let hit = match id {
            Weaving | Swerving | SideSlip | SharpTurn | Jerk => normalized >= self.maneuver_gate,
            AbruptStop | Braking | Pedestrian | TrafficLight | Heavy => raw >= 1.0,
            Congestion => raw >= 2.0,
            Preceding => raw >= 2.0,
            _ => false,
        };
        hit as u32
    }
}

impl Scorer for DefaultScorer {
    fn name(&self) -> &str {
        "default"
    }

    fn score(&self, spec: &FeatureVectorSpec, window: &FeatureWindow) -> Result<u8, ScoreError> {
        let points: u32 = spec
            .ids()
            .zip(window.raw.iter().zip(&window.values))
            .map(|(id, (&r, &v))| self.penalty(id, r, v))
            .sum();
        Ok(5u32.saturating_sub(points).max(1) as u8)
    }
}

/// Look up a scorer by name.
pub fn scorer_by_name(name: &str) -> Result<Box<dyn Scorer>, ScoreError> {
    match name {
        "default" => Ok(Box::new(DefaultScorer::default())),
        other => Err(ScoreError::ScorerUnavailable(other.to_string())),
    }
}

pub fn predict_window_score(
    spec: &FeatureVectorSpec,
    window: &FeatureWindow,
    scorer: &dyn Scorer,
) -> Result<u8, ScoreError> {
    scorer.score(spec, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maneuver::ManeuverFeatures;
    use crate::spatial::SpatialFeatures;
    use crate::trip::TripMeta;

    #[test]
    fn instant_examples() {
        assert_eq!(instant_score(&[3, 4, 4]), Ok(4));
        assert_eq!(instant_score(&[5, 5, 5]), Ok(5));
        assert_eq!(instant_score(&[2, 3]), Ok(3));
        assert_eq!(instant_score(&[]), Err(ScoreError::EmptyScores));
        assert_eq!(instant_score(&[0, 3]), Err(ScoreError::OutOfRange(0)));
    }

    #[test]
    fn agreement_examples() {
        let a = annotator_agreement(&[4, 4, 4]).unwrap();
        assert_eq!(a.std, 0.0);
        assert!(!a.relaunch);
        // Population std of [1,5,5]: mean 11/3, deviations² sum 32/3.
        let b = annotator_agreement(&[1, 5, 5]).unwrap();
        assert!((b.std - (32.0f64 / 9.0).sqrt()).abs() < 1e-12);
        assert!(b.relaunch);
        let c = annotator_agreement(&[3, 4, 4]).unwrap();
        assert!((c.std - (2.0f64 / 9.0).sqrt()).abs() < 1e-12);
        assert!(!c.relaunch);
        assert_eq!(annotator_agreement(&[3]), Err(ScoreError::TooFewScores(1)));
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(baseline_score(&[4, 4, 4]), Ok(4));
        assert_eq!(baseline_score(&[3, 4]), Ok(4));
        assert_eq!(baseline_score(&[2, 2, 3]), Ok(3));
        assert_eq!(baseline_score(&[]), Err(ScoreError::EmptyHistory));
    }

    #[test]
    fn fluctuation_examples() {
        let e = detect_fluctuation(&[4, 4, 4], 2, 1.0).unwrap();
        assert_eq!((e.window_index, e.baseline, e.delta), (3, 4, 2));
        assert_eq!(detect_fluctuation(&[4, 4, 4], 3, 1.0), None);
        assert_eq!(detect_fluctuation(&[3, 3], 5, 1.0).unwrap().delta, 2);
        assert_eq!(detect_fluctuation(&[], 5, 1.0), None);
    }

    #[test]
    fn series_scan() {
        let ev = find_fluctuations(&[5, 5, 3, 5, 5], 1.0);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].window_index, 2);
    }

    fn window(m: ManeuverFeatures, s: SpatialFeatures) -> (FeatureVectorSpec, FeatureWindow) {
        let spec = FeatureVectorSpec::default();
        let w = spec.encode(0, &m, &s, &TripMeta::default());
        (spec, w)
    }

    #[test]
    fn default_scorer_table() {
        let scorer = DefaultScorer::default();
        let (spec, w) = window(ManeuverFeatures::default(), SpatialFeatures::default());
        assert_eq!(predict_window_score(&spec, &w, &scorer), Ok(5));

        let m = ManeuverFeatures {
            abrupt_stop: 1,
            ..Default::default()
        };
        let s = SpatialFeatures {
            congestion: 2,
            ..Default::default()
        };
        let (spec, w) = window(m, s);
        assert_eq!(predict_window_score(&spec, &w, &scorer), Ok(3));

        let m = ManeuverFeatures {
            weaving: 2.0,
            swerving: 2.0,
            side_slip: 2.0,
            abrupt_stop: 1,
            sharp_turn: 90.0,
            jerk: 40.0,
        };
        let s = SpatialFeatures {
            braking: 1,
            pedestrian: 1,
            ..Default::default()
        };
        let (spec, w) = window(m, s);
        assert_eq!(predict_window_score(&spec, &w, &scorer), Ok(1));
    }

    #[test]
    fn unknown_scorer() {
        assert!(matches!(
            scorer_by_name("dribe"),
            Err(ScoreError::ScorerUnavailable(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn aggregation_in_range_and_permutation_invariant(
            mut v in proptest::collection::vec(1u8..=5, 1..12),
        ) {
            let s = instant_score(&v).unwrap();
            proptest::prop_assert!((1..=5).contains(&s));
            v.reverse();
            proptest::prop_assert_eq!(instant_score(&v).unwrap(), s);
            v.sort();
            proptest::prop_assert_eq!(instant_score(&v).unwrap(), s);
        }

        #[test]
        fn constant_ratings_agree(c in 1u8..=5, n in 2usize..10) {
            proptest::prop_assert_eq!(annotator_agreement(&vec![c; n]).unwrap().std, 0.0);
        }
    }
}
