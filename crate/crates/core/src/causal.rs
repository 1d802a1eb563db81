//! Rank-correlation screening and matched-pair average treatment effects.
//!
//! Candidates are screened by Kendall's tau-b against the response; the
//! survivors are paired treated/untreated on equal confounders and the mean
//! ratio of response difference to treatment difference is the effect.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CausalError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series need at least 2 values, got {0}")]
    TooShort(usize),
    #[error("series `{0}` is constant")]
    DegenerateSeries(String),
    #[error("series `{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("no valid matched pair for treatment `{0}`")]
    NoPairs(String),
    #[error("pair ({i}, {j}) has equal treatment scores")]
    ZeroDenominator { i: usize, j: usize },
    #[error("{0} covariates but {1} tolerances")]
    ToleranceMismatch(usize, usize),
}

/// A named feature (or response) series aligned to windows or trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSeries {
    pub name: String,
    pub values: Vec<f64>,
}

impl VariableSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), CausalError> {
    if x.len() != y.len() {
        return Err(CausalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(CausalError::TooShort(x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CausalError::NonFinite("x".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CausalError::NonFinite("y".into()));
    }
    Ok(())
}

/// Number of tied pairs inside runs of equal values of a sorted slice.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sort in place, returning the number of inversions (exchanges).
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]);
    swaps += merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b (tie-corrected), O(n log n) via Knight's merge-sort count.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, CausalError> {
    check_pair(x, y)?;
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ties_x = tied_pairs(&xs);
    let ties_xy = tied_pairs(&pairs);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = merge_count(&mut ys, &mut buf);
    let ties_y = tied_pairs(&ys);

    let n0 = n * (n - 1) / 2;
    if n0 == ties_x {
        return Err(CausalError::DegenerateSeries("x".into()));
    }
    if n0 == ties_y {
        return Err(CausalError::DegenerateSeries("y".into()));
    }
    let concordant_minus_discordant =
        n0 as f64 - ties_x as f64 - ties_y as f64 + ties_xy as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - ties_x) as f64 * (n0 - ties_y) as f64).sqrt();
    Ok((concordant_minus_discordant / denom).clamp(-1.0, 1.0))
}

/// Mid-ranks (1-based); tied values share the average of their positions.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of mid-ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, CausalError> {
    check_pair(x, y)?;
    let rx = mid_ranks(x);
    let ry = mid_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 {
        return Err(CausalError::DegenerateSeries("x".into()));
    }
    if syy == 0.0 {
        return Err(CausalError::DegenerateSeries("y".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Keep candidates whose |tau| against the response reaches `cutoff`,
/// in input order, together with their tau.
pub fn screen_features<'a>(
    candidates: &'a [VariableSeries],
    response: &[f64],
    cutoff: f64,
) -> Result<Vec<(&'a VariableSeries, f64)>, CausalError> {
    let mut kept = Vec::new();
    for c in candidates {
        let tau = kendall_tau(&c.values, response).map_err(|e| rename(e, &c.name))?;
        if tau.abs() >= cutoff {
            kept.push((c, tau));
        }
    }
    Ok(kept)
}

fn rename(e: CausalError, name: &str) -> CausalError {
    match e {
        CausalError::DegenerateSeries(s) if s == "x" => CausalError::DegenerateSeries(name.into()),
        CausalError::NonFinite(s) if s == "x" => CausalError::NonFinite(name.into()),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPairSet {
    /// (treated, untreated) index pairs.
    pub pairs: Vec<(usize, usize)>,
    pub treatment_name: String,
    pub covariate_names: Vec<String>,
}

/// Greedy matching without replacement. Treated indices are visited in
/// ascending order; each takes the unused untreated index nearest in L∞
/// covariate distance, provided every covariate differs by no more than its
/// tolerance. Ties go to the lowest index.
pub fn build_matched_pairs(
    treatment_name: &str,
    treatment: &[bool],
    covariates: &[VariableSeries],
    tolerance: &[f64],
) -> Result<MatchedPairSet, CausalError> {
    if covariates.len() != tolerance.len() {
        return Err(CausalError::ToleranceMismatch(covariates.len(), tolerance.len()));
    }
    for c in covariates {
        if c.values.len() != treatment.len() {
            return Err(CausalError::LengthMismatch(treatment.len(), c.values.len()));
        }
    }
    let n = treatment.len();
    let mut used = vec![false; n];
    let mut pairs = Vec::new();
    for i in (0..n).filter(|&i| treatment[i]) {
        let mut best: Option<(f64, usize)> = None;
        for j in (0..n).filter(|&j| !treatment[j] && !used[j]) {
            let mut dist = 0.0f64;
            let mut within = true;
            for (c, &tol) in covariates.iter().zip(tolerance) {
                let d = (c.values[i] - c.values[j]).abs();
                if d > tol {
                    within = false;
                    break;
                }
                dist = dist.max(d);
            }
            if within && best.is_none_or(|(bd, _)| dist < bd) {
                best = Some((dist, j));
            }
        }
        if let Some((_, j)) = best {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(CausalError::NoPairs(treatment_name.to_string()));
    }
    Ok(MatchedPairSet {
        pairs,
        treatment_name: treatment_name.to_string(),
        covariate_names: covariates.iter().map(|c| c.name.clone()).collect(),
    })
}

/// Mean over pairs of (R(i) − R(j)) / (X(i) − X(j)).
pub fn average_treatment_effect(
    pairs: &MatchedPairSet,
    response: &[f64],
    x: &[f64],
) -> Result<f64, CausalError> {
    if pairs.pairs.is_empty() {
        return Err(CausalError::NoPairs(pairs.treatment_name.clone()));
    }
    let mut sum = 0.0;
    for &(i, j) in &pairs.pairs {
        let dx = x[i] - x[j];
        if dx == 0.0 {
            return Err(CausalError::ZeroDenominator { i, j });
        }
        sum += (response[i] - response[j]) / dx;
    }
    Ok(sum / pairs.pairs.len() as f64)
}

/// Effect estimate that drops zero-denominator pairs instead of failing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteReport {
    pub ate: Option<f64>,
    pub used: usize,
    pub skipped: Vec<(usize, usize)>,
}

pub fn average_treatment_effect_lenient(
    pairs: &MatchedPairSet,
    response: &[f64],
    x: &[f64],
) -> AteReport {
    let (kept, skipped): (Vec<_>, Vec<_>) = pairs.pairs.iter().partition(|&&(i, j)| x[i] != x[j]);
    let ate = if kept.is_empty() {
        None
    } else {
        let sum: f64 = kept
            .iter()
            .map(|&(i, j)| (response[i] - response[j]) / (x[i] - x[j]))
            .sum();
        Some(sum / kept.len() as f64)
    };
    AteReport {
        ate,
        used: kept.len(),
        skipped,
    }
}

/// Effects above this are taken as causal.
pub const CAUSAL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalVerdict {
    pub ate: f64,
    pub is_causal: bool,
    pub tau: f64,
}

pub fn causal_verdict(ate: f64, tau: f64) -> CausalVerdict {
    CausalVerdict {
        ate,
        is_causal: ate > CAUSAL_THRESHOLD,
        tau,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenStatus {
    /// Passed the correlation screen and the effect threshold.
    Treatment,
    /// Passed the screen but the effect stayed at or below the threshold.
    NotCausal,
    /// Failed the correlation screen.
    Eliminated,
    /// Could not be evaluated (constant series, no pairs).
    NotApplicable,
}

impl ScreenStatus {
    pub fn label(self) -> &'static str {
        match self {
            ScreenStatus::Treatment => "treatment",
            ScreenStatus::NotCausal => "not_causal",
            ScreenStatus::Eliminated => "eliminated",
            ScreenStatus::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalRow {
    pub name: String,
    pub tau: Option<f64>,
    pub ate: Option<f64>,
    pub pairs: usize,
    pub status: ScreenStatus,
}

/// Full screen-then-match analysis over candidate variables.
///
/// Treatment presence is `value > 0`; matching is exact on every confounder
/// other than the candidate itself.
pub fn analyze(
    candidates: &[VariableSeries],
    confounders: &[VariableSeries],
    response: &[f64],
    cutoff: f64,
) -> Vec<CausalRow> {
    candidates
        .iter()
        .map(|c| {
            let mut row = CausalRow {
                name: c.name.clone(),
                tau: None,
                ate: None,
                pairs: 0,
                status: ScreenStatus::NotApplicable,
            };
            let Ok(tau) = kendall_tau(&c.values, response) else {
                return row;
            };
            row.tau = Some(tau);
            if tau.abs() < cutoff {
                row.status = ScreenStatus::Eliminated;
                return row;
            }
            let treated: Vec<bool> = c.values.iter().map(|&v| v > 0.0).collect();
            let covs: Vec<VariableSeries> = confounders
                .iter()
                .filter(|z| z.name != c.name)
                .cloned()
                .collect();
            let tol = vec![0.0; covs.len()];
            let Ok(pairs) = build_matched_pairs(&c.name, &treated, &covs, &tol) else {
                return row;
            };
            let rep = average_treatment_effect_lenient(&pairs, response, &c.values);
            row.pairs = rep.used;
            if let Some(ate) = rep.ate {
                row.ate = Some(ate);
                row.status = if causal_verdict(ate, tau).is_causal {
                    ScreenStatus::Treatment
                } else {
                    ScreenStatus::NotCausal
                };
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_perfect_orders() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn tau_errors() {
        assert_eq!(
            kendall_tau(&[1.0, 2.0], &[1.0]),
            Err(CausalError::LengthMismatch(2, 1))
        );
        assert!(matches!(
            kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(CausalError::DegenerateSeries(_))
        ));
        assert!(matches!(kendall_tau(&[1.0], &[1.0]), Err(CausalError::TooShort(1))));
    }

    // Textbook example with ties: tau-b = 0.5 / sqrt(0.8 * 0.8)... computed by hand:
    // x = [1,1,2,3], y = [1,2,2,3]: C=4, D=0, ties_x=1, ties_y=1, n0=6 → 4/5.
    #[test]
    fn tau_b_with_ties_hand_computed() {
        let t = kendall_tau(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert!((t - 0.8).abs() < 1e-12);
    }

    #[test]
    fn spearman_basic() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.powi(3)).collect();
        assert!((spearman_rho(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((spearman_rho(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn mid_ranks_average_ties() {
        assert_eq!(mid_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn screen_keeps_order_and_cutoff() {
        let r = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let strong = VariableSeries::new("strong", vec![1.0, 2.0, 3.0, 4.0, 6.0, 5.0]);
        let weak = VariableSeries::new("weak", vec![3.0, 1.0, 4.0, 1.5, 5.0, 2.0]);
        let cands = vec![weak.clone(), strong.clone()];
        let kept = screen_features(&cands, &r, 0.5).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].0.name, "strong");
        let all = screen_features(&cands, &r, 0.0).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].0.name, "weak");
    }

    #[test]
    fn matching_trivial_and_no_pairs() {
        let cov = vec![VariableSeries::new("g", vec![2.0, 2.0])];
        let m = build_matched_pairs("t", &[true, false], &cov, &[0.0]).unwrap();
        assert_eq!(m.pairs, vec![(0, 1)]);
        assert_eq!(
            build_matched_pairs("t", &[true, true], &cov, &[0.0]),
            Err(CausalError::NoPairs("t".into()))
        );
        let far = vec![VariableSeries::new("g", vec![1.0, 2.0])];
        assert!(build_matched_pairs("t", &[true, false], &far, &[0.0]).is_err());
    }

    #[test]
    fn ate_constant_and_mean() {
        let set = MatchedPairSet {
            pairs: vec![(0, 1), (2, 3)],
            treatment_name: "t".into(),
            covariate_names: vec![],
        };
        let r = [3.0, 1.0, 5.0, 3.0];
        let x = [1.0, 0.0, 1.0, 0.0];
        assert_eq!(average_treatment_effect(&set, &r, &x).unwrap(), 2.0);
        let r2 = [1.0, 0.0, 3.0, 0.0];
        assert_eq!(average_treatment_effect(&set, &r2, &x).unwrap(), 2.0);
        let flat = [1.0, 1.0, 1.0, 0.0];
        assert_eq!(
            average_treatment_effect(&set, &r, &flat),
            Err(CausalError::ZeroDenominator { i: 0, j: 1 })
        );
        let rep = average_treatment_effect_lenient(&set, &r, &flat);
        assert_eq!(rep.used, 1);
        assert_eq!(rep.skipped, vec![(0, 1)]);
        assert_eq!(rep.ate, Some(2.0));
    }

    #[test]
    fn verdict_threshold_is_strict() {
        assert!(causal_verdict(1.96, 0.696).is_causal);
        assert!(!causal_verdict(0.48, -0.53).is_causal);
        assert!(!causal_verdict(0.5, 0.0).is_causal);
    }
}
