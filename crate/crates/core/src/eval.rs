//! Evaluation: Dice similarity, majority-vote ground truth, percentage of
//! error per category, and the causal effect of mismatched features.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::{
    average_treatment_effect_lenient, build_matched_pairs, CausalError, VariableSeries,
    CAUSAL_THRESHOLD,
};
use crate::features::{Category, FeatureId};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dice needs two nonempty sets")]
    EmptySet,
    #[error("no ballots")]
    NoBallots,
    #[error("no results")]
    EmptyResults,
    #[error("ballot line {line}: {message}")]
    BadBallot { line: usize, message: String },
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type FactorSet = BTreeSet<FeatureId>;

/// 2|A ∩ B| / (|A| + |B|).
pub fn dice<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let common = a.intersection(b).count();
    Ok(2.0 * common as f64 / (a.len() + b.len()) as f64)
}

pub const VOTE_THRESHOLD: f64 = 0.60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFactors {
    pub factors: FactorSet,
    /// Fraction of ballots naming each factor.
    pub votes: BTreeMap<FeatureId, f64>,
    pub ballots: usize,
}

impl GroundTruthFactors {
    /// Fewer ballots than the three independent annotators expected.
    pub fn few_ballots(&self) -> bool {
        self.ballots < 3
    }
}

/// Keep every factor named on at least `threshold` of the ballots.
pub fn majority_vote(ballots: &[FactorSet], threshold: f64) -> Result<GroundTruthFactors, EvalError> {
    if ballots.is_empty() {
        return Err(EvalError::NoBallots);
    }
    let n = ballots.len();
    let mut counts: BTreeMap<FeatureId, usize> = BTreeMap::new();
    for b in ballots {
        for &f in b {
            *counts.entry(f).or_default() += 1;
        }
    }
    // A small slack keeps fractions exactly at the threshold.
    let needed = threshold * n as f64 - 1e-9;
    let factors = counts
        .iter()
        .filter(|(_, &c)| c as f64 >= needed)
        .map(|(&f, _)| f)
        .collect();
    let votes = counts
        .into_iter()
        .map(|(f, c)| (f, c as f64 / n as f64))
        .collect();
    Ok(GroundTruthFactors {
        factors,
        votes,
        ballots: n,
    })
}

/// Ground truth against what the model produced for one trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripResult {
    pub trip_id: String,
    pub gt: FactorSet,
    pub generated: FactorSet,
}

/// Share of trips (0..=100) whose missed factors `gt \ generated` include a
/// factor of each category. A trip missing factors of two categories counts
/// once in each.
pub fn percentage_of_error(
    results: &[TripResult],
    category_of: impl Fn(FeatureId) -> Category,
) -> Result<BTreeMap<&'static str, f64>, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut hits: BTreeMap<&'static str, usize> =
        [(Category::Maneuver.label(), 0), (Category::Spatial.label(), 0)].into();
    for r in results {
        let cats: BTreeSet<&'static str> = r
            .gt
            .difference(&r.generated)
            .map(|&f| category_of(f).label())
            .collect();
        for c in cats {
            *hits.entry(c).or_default() += 1;
        }
    }
    let n = results.len() as f64;
    Ok(hits
        .into_iter()
        .map(|(c, k)| (c, 100.0 * k as f64 / n))
        .collect())
}

/// Maneuvers against everything else (confounders are context, counted
/// with the spatial side).
pub fn two_way_category(f: FeatureId) -> Category {
    match f.category() {
        Category::Maneuver => Category::Maneuver,
        _ => Category::Spatial,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalStrength {
    None,
    Causal,
    High,
}

/// Above the causal threshold is causal; above 1 is a high causal effect.
pub fn causal_strength(ate: f64) -> CausalStrength {
    if ate > 1.0 {
        CausalStrength::High
    } else if ate > CAUSAL_THRESHOLD {
        CausalStrength::Causal
    } else {
        CausalStrength::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchAte {
    pub per_feature: Vec<(FeatureId, f64)>,
    pub mean: Option<f64>,
}

/// Effect on the response of every feature the model produced but the
/// annotators did not name. `features` holds one series per feature, named
/// by its code; treatment is a positive value. Pairs are matched exactly on
/// `confounders`.
pub fn mismatch_ate(
    results: &[TripResult],
    response: &[f64],
    features: &[VariableSeries],
    confounders: &[VariableSeries],
) -> Result<MismatchAte, EvalError> {
    let mismatched: FactorSet = results
        .iter()
        .flat_map(|r| r.generated.difference(&r.gt).copied())
        .collect();
    let mut per_feature = Vec::new();
    for f in mismatched {
        let Some(series) = features.iter().find(|s| s.name == f.code()) else {
            continue;
        };
        if series.values.len() != response.len() {
            return Err(CausalError::LengthMismatch(series.values.len(), response.len()).into());
        }
        let treated: Vec<bool> = series.values.iter().map(|&v| v > 0.0).collect();
        let tol = vec![0.0; confounders.len()];
        let pairs = build_matched_pairs(f.code(), &treated, confounders, &tol)?;
        if let Some(ate) = average_treatment_effect_lenient(&pairs, response, &series.values).ate {
            per_feature.push((f, ate));
        }
    }
    let mean = (!per_feature.is_empty())
        .then(|| per_feature.iter().map(|p| p.1).sum::<f64>() / per_feature.len() as f64);
    Ok(MismatchAte { per_feature, mean })
}

/// Per-trip outcome at both reporting depths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripEval {
    pub trip_id: String,
    pub gt: FactorSet,
    pub top3: FactorSet,
    pub top5: FactorSet,
}

impl TripEval {
    /// Dice against one depth; an empty side scores 0.
    pub fn dice_at(&self, k: usize) -> f64 {
        let g = if k <= 3 { &self.top3 } else { &self.top5 };
        dice(&self.gt, g).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScorecard {
    pub trips: usize,
    pub mean_dice_top3: f64,
    pub mean_dice_top5: f64,
    /// Percentage of error per category at top-5.
    pub error_pct: BTreeMap<String, f64>,
    pub mismatch: Option<MismatchAte>,
}

/// Mean that does not depend on the order of its inputs.
fn order_free_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn scorecard(evals: &[TripEval]) -> Result<EvalScorecard, EvalError> {
    if evals.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let top5: Vec<TripResult> = evals
        .iter()
        .map(|e| TripResult {
            trip_id: e.trip_id.clone(),
            gt: e.gt.clone(),
            generated: e.top5.clone(),
        })
        .collect();
    let error_pct = percentage_of_error(&top5, two_way_category)?
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Ok(EvalScorecard {
        trips: evals.len(),
        mean_dice_top3: order_free_mean(evals.iter().map(|e| e.dice_at(3)).collect()),
        mean_dice_top5: order_free_mean(evals.iter().map(|e| e.dice_at(5)).collect()),
        error_pct,
        mismatch: None,
    })
}

/// One annotator's factor selection for one trip (optionally one window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ballot {
    pub trip_id: String,
    pub annotator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    pub factors: FactorSet,
}

/// Line-delimited ballot records; blank lines are skipped.
pub fn read_ballots(reader: impl BufRead) -> Result<Vec<Ballot>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let b: Ballot = serde_json::from_str(&line).map_err(|e| EvalError::BadBallot {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(b);
    }
    Ok(out)
}

/// Group ballots per trip, in trip-id order.
pub fn ballots_by_trip(ballots: &[Ballot]) -> BTreeMap<String, Vec<FactorSet>> {
    let mut m: BTreeMap<String, Vec<FactorSet>> = BTreeMap::new();
    for b in ballots {
        m.entry(b.trip_id.clone()).or_default().push(b.factors.clone());
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use FeatureId::*;

    fn set(v: &[FeatureId]) -> FactorSet {
        v.iter().copied().collect()
    }

    #[test]
    fn dice_basic() {
        let a = set(&[Congestion, Braking]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &set(&[Jerk])).unwrap(), 0.0);
        assert!(matches!(dice(&a, &FactorSet::new()), Err(EvalError::EmptySet)));
    }

    #[test]
    fn votes_at_threshold() {
        let b = |v: &[FeatureId]| set(v);
        let three = vec![b(&[Congestion, Jerk]), b(&[Congestion]), b(&[Braking])];
        let gt = majority_vote(&three, VOTE_THRESHOLD).unwrap();
        assert_eq!(gt.factors, set(&[Congestion]));
        assert!((gt.votes[&Jerk] - 1.0 / 3.0).abs() < 1e-12);
        let five = vec![b(&[Jerk]), b(&[Jerk]), b(&[Jerk]), b(&[]), b(&[])];
        assert_eq!(majority_vote(&five, VOTE_THRESHOLD).unwrap().factors, set(&[Jerk]));
        assert!(matches!(majority_vote(&[], 0.6), Err(EvalError::NoBallots)));
    }

    #[test]
    fn error_percentages() {
        let mut results: Vec<TripResult> = (0..10)
            .map(|i| TripResult {
                trip_id: i.to_string(),
                gt: set(&[Jerk]),
                generated: set(&[Jerk, Congestion]),
            })
            .collect();
        let p = percentage_of_error(&results, two_way_category).unwrap();
        assert_eq!(p["F_M"], 0.0);
        assert_eq!(p["F_S"], 0.0);
        results[4].gt.insert(TrafficLight);
        let p = percentage_of_error(&results, two_way_category).unwrap();
        assert_eq!(p["F_S"], 10.0);
        assert_eq!(p["F_M"], 0.0);
        assert!(matches!(
            percentage_of_error(&[], two_way_category),
            Err(EvalError::EmptyResults)
        ));
    }

    #[test]
    fn strength_classes() {
        assert_eq!(causal_strength(1.96), CausalStrength::High);
        assert_eq!(causal_strength(0.84), CausalStrength::Causal);
        assert_eq!(causal_strength(0.48), CausalStrength::None);
    }

    #[test]
    fn no_mismatch_no_report() {
        let r = vec![TripResult {
            trip_id: "t".into(),
            gt: set(&[Jerk]),
            generated: set(&[Jerk]),
        }];
        let m = mismatch_ate(&r, &[1.0], &[], &[]).unwrap();
        assert!(m.per_feature.is_empty());
        assert_eq!(m.mean, None);
    }

    #[test]
    fn ballots_parse() {
        let text = "{\"trip_id\":\"t1\",\"annotator\":\"a\",\"factors\":[\"C\",\"A_Q\"]}\n\n\
                    {\"trip_id\":\"t1\",\"annotator\":\"b\",\"factors\":[\"congestion\"]}\n";
        let b = read_ballots(text.as_bytes()).unwrap();
        assert_eq!(b.len(), 2);
        let by = ballots_by_trip(&b);
        let gt = majority_vote(&by["t1"], VOTE_THRESHOLD).unwrap();
        assert_eq!(gt.factors, set(&[Congestion]));
        assert!(matches!(
            read_ballots("{".as_bytes()),
            Err(EvalError::BadBallot { line: 1, .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn dice_symmetric(a in proptest::collection::btree_set(0u8..10, 1..6),
                          b in proptest::collection::btree_set(0u8..10, 1..6)) {
            let d = dice(&a, &b).unwrap();
            proptest::prop_assert_eq!(d, dice(&b, &a).unwrap());
            proptest::prop_assert!((0.0..=1.0).contains(&d));
            proptest::prop_assert_eq!(d == 1.0, a == b);
            proptest::prop_assert_eq!(d == 0.0, a.is_disjoint(&b));
        }

        #[test]
        fn vote_monotone_and_order_free(
            ballots in proptest::collection::vec(proptest::collection::btree_set(0usize..6, 0..4), 1..8),
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let to_sets = |bs: &[BTreeSet<usize>]| -> Vec<FactorSet> {
                bs.iter().map(|b| b.iter().map(|&i| FeatureId::ALL[i]).collect()).collect()
            };
            let sets = to_sets(&ballots);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = majority_vote(&sets, lo).unwrap().factors;
            let b = majority_vote(&sets, hi).unwrap().factors;
            proptest::prop_assert!(b.is_subset(&a));
            let mut rev = sets.clone();
            rev.reverse();
            proptest::prop_assert_eq!(majority_vote(&rev, lo).unwrap(), majority_vote(&sets, lo).unwrap());
        }
    }
}
