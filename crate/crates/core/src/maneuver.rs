//! Inertial and GPS maneuver detectors: weaving, swerving, side-slip,
//! abrupt stop, sharp turn and jerk, evaluated per window.
//!
//! The detectors expect uniformly sampled, already low-pass filtered
//! accelerometer series. X is lateral, Y longitudinal, Z vertical.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ManeuverConfig;
use crate::trip::{GpsFix, WindowSlice};

#[derive(Debug, Error, PartialEq)]
pub enum ManeuverError {
    #[error("window too short: {got:.3}s of samples, need {needed:.3}s")]
    TooShortWindow { got: f64, needed: f64 },
    #[error("sharp-turn detection needs at least 3 GPS fixes, got {0}")]
    TooFewFixes(usize),
}

/// The six maneuver features of one window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ManeuverFeatures {
    /// Weaving magnitude (m/s²).
    pub weaving: f64,
    /// Swerving magnitude (m/s²).
    pub swerving: f64,
    /// Side-slip magnitude (m/s²).
    pub side_slip: f64,
    /// Abrupt stop flag, 0 or 1.
    pub abrupt_stop: u8,
    /// Largest heading change (degrees).
    pub sharp_turn: f64,
    /// Largest |d ax / dt| (m/s³).
    pub jerk: f64,
}

fn require_span(n: usize, dt: f64, needed: f64) -> Result<(), ManeuverError> {
    let got = n as f64 * dt;
    // One sample of slack for float rounding in the window bounds.
    if n < 2 || got + 0.5 * dt < needed {
        Err(ManeuverError::TooShortWindow { got, needed })
    } else {
        Ok(())
    }
}

/// Interior local maxima of `x` whose topographic prominence is at least
/// `min_prominence`. Plateaus report their first sample.
pub fn find_peaks(x: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    for i in 1..n - 1 {
        if !(x[i] > x[i - 1] && x[i] >= x[i + 1]) {
            continue;
        }
        // Skip to the end of a plateau to test the right-hand descent.
        let mut k = i;
        while k + 1 < n && x[k + 1] == x[i] {
            k += 1;
        }
        if k + 1 >= n {
            continue;
        }
        if prominence(x, i, k) >= min_prominence {
            peaks.push(i);
        }
    }
    peaks
}

fn prominence(x: &[f64], start: usize, end: usize) -> f64 {
    let h = x[start];
    let mut left_min = h;
    for j in (0..start).rev() {
        if x[j] > h {
            break;
        }
        left_min = left_min.min(x[j]);
    }
    let mut right_min = h;
    for &v in &x[end + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

fn population_std(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Weaving: the highest positive peak and lowest negative trough of ax lying
/// within one span of each other; returns the standard deviation of the
/// curve between them. Zero when no such pair exists.
pub fn detect_weaving(ax: &[f64], dt: f64, cfg: &ManeuverConfig) -> Result<f64, ManeuverError> {
    require_span(ax.len(), dt, cfg.span_seconds)?;
    let neg: Vec<f64> = ax.iter().map(|v| -v).collect();
    let peaks: Vec<usize> = find_peaks(ax, cfg.peak_prominence)
        .into_iter()
        .filter(|&i| ax[i] > 0.0)
        .collect();
    let troughs: Vec<usize> = find_peaks(&neg, cfg.peak_prominence)
        .into_iter()
        .filter(|&i| ax[i] < 0.0)
        .collect();
    let max_gap = (cfg.span_seconds / dt).round() as usize;

    let mut best: Option<(f64, usize, usize)> = None;
    for &p in &peaks {
        for &t in &troughs {
            if p.abs_diff(t) > max_gap {
                continue;
            }
            let swing = ax[p] - ax[t];
            let (lo, hi) = (p.min(t), p.max(t));
            let better = match best {
                None => true,
                Some((s, blo, _)) => swing > s || (swing == s && lo < blo),
            };
            if better {
                best = Some((swing, lo, hi));
            }
        }
    }
    Ok(best.map_or(0.0, |(_, lo, hi)| population_std(&ax[lo..=hi])))
}

/// Swerving: an isolated sharp |ax| peak whose leading and trailing edges
/// start and end near the lateral baseline while the longitudinal axis
/// stays quiet. Returns the standard deviation over both edges.
pub fn detect_swerving(
    ax: &[f64],
    ay: &[f64],
    dt: f64,
    cfg: &ManeuverConfig,
) -> Result<f64, ManeuverError> {
    require_span(ax.len(), dt, cfg.span_seconds)?;
    let ay_abs: Vec<f64> = ay.iter().map(|v| v.abs()).collect();
    if mean(&ay_abs) >= cfg.ay_gate {
        return Ok(0.0);
    }
    let mag: Vec<f64> = ax.iter().map(|v| v.abs()).collect();
    let peak = find_peaks(&mag, cfg.peak_prominence)
        .into_iter()
        .filter(|&i| mag[i] >= cfg.baseline)
        .fold(None::<usize>, |best, i| match best {
            Some(b) if mag[b] >= mag[i] => Some(b),
            _ => Some(i),
        });
    let Some(p) = peak else {
        return Ok(0.0);
    };
    let edge = (cfg.edge_seconds / dt).round() as usize;
    let lo = p.saturating_sub(edge);
    let hi = (p + edge).min(ax.len() - 1);
    let sign = ax[p].signum();
    let isolated = mag[lo] < cfg.baseline
        && mag[hi] < cfg.baseline
        && ax[lo..=hi]
            .iter()
            .all(|&v| v.signum() == sign || v.abs() < cfg.baseline);
    Ok(if isolated {
        population_std(&ax[lo..=hi])
    } else {
        0.0
    })
}

/// Side-slip: a single-signed ax excursion that leaves a quiet baseline and
/// returns to it within one span, with mean ay slightly positive. Returns
/// the standard deviation over the excursion and its lead-in/lead-out.
pub fn detect_side_slip(
    ax: &[f64],
    ay: &[f64],
    dt: f64,
    cfg: &ManeuverConfig,
) -> Result<f64, ManeuverError> {
    require_span(ax.len(), dt, cfg.span_seconds)?;
    if mean(ay) <= cfg.side_slip_ay_min {
        return Ok(0.0);
    }
    let n = ax.len();
    let hold = ((cfg.slip_hold_seconds / dt).round() as usize).max(1);
    let max_len = (cfg.span_seconds / dt).round() as usize;
    let quiet = |v: f64| v.abs() < cfg.baseline;

    let mut best = 0.0f64;
    let mut i = 0;
    while i < n {
        if quiet(ax[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !quiet(ax[i]) {
            i += 1;
        }
        let end = i; // exclusive
        let sign = ax[start].signum();
        let single_signed = ax[start..end].iter().all(|v| v.signum() == sign);
        let returned = end < n;
        let lead_in = start >= hold && ax[start - hold..start].iter().all(|&v| quiet(v));
        if single_signed && returned && lead_in && end - start <= max_len {
            let lo = start - hold;
            let hi = (end + hold).min(n);
            best = best.max(population_std(&ax[lo..hi]));
        }
    }
    Ok(best)
}

/// Abrupt stop: ay drops from moving (|ay| ≥ move gate) to stopped
/// (|ay| < stop threshold) while the vertical axis stays inside the band.
/// A vertical stream that still carries gravity has its window median removed.
pub fn detect_abrupt_stop(ay: &[f64], az: &[f64], cfg: &ManeuverConfig) -> u8 {
    if ay.is_empty() {
        return 0;
    }
    let med = median(az);
    let bias = if med.abs() > cfg.gravity_detect { med } else { 0.0 };
    let mut last_moving: Option<usize> = None;
    for (j, &v) in ay.iter().enumerate() {
        if v.abs() >= cfg.move_gate {
            last_moving = Some(j);
        } else if v.abs() < cfg.stop_threshold {
            if let Some(i) = last_moving {
                let hi = j.min(az.len().saturating_sub(1));
                let in_band = az[i.min(hi)..=hi]
                    .iter()
                    .all(|z| (z - bias).abs() <= cfg.az_band_max);
                if in_band {
                    return 1;
                }
                last_moving = None;
            }
        }
    }
    0
}

fn median(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Largest heading change (degrees, in [0, 180]) between consecutive GPS
/// segments. Headings use the full-quadrant arctangent of Δlat over Δlon;
/// zero-length segments carry no heading and are skipped.
pub fn detect_sharp_turn(gps: &[GpsFix]) -> Result<f64, ManeuverError> {
    if gps.len() < 3 {
        return Err(ManeuverError::TooFewFixes(gps.len()));
    }
    let headings: Vec<Option<f64>> = gps
        .windows(2)
        .map(|w| {
            let dlat = w[1].lat - w[0].lat;
            let dlon = w[1].lon - w[0].lon;
            (dlat != 0.0 || dlon != 0.0).then(|| dlat.atan2(dlon).to_degrees())
        })
        .collect();
    let mut best = 0.0f64;
    for pair in headings.windows(2) {
        if let (Some(h1), Some(h2)) = (pair[0], pair[1]) {
            let mut d = (h2 - h1).abs() % 360.0;
            if d > 180.0 {
                d = 360.0 - d;
            }
            best = best.max(d);
        }
    }
    Ok(best)
}

/// Largest absolute first difference of ax per unit time (m/s³).
pub fn detect_jerk(ax: &[f64], dt: f64) -> Result<f64, ManeuverError> {
    if ax.len() < 2 {
        return Err(ManeuverError::TooShortWindow {
            got: ax.len() as f64 * dt,
            needed: 2.0 * dt,
        });
    }
    Ok(ax
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / dt)
        .fold(0.0, f64::max))
}

/// Run all six detectors over one window of preprocessed streams.
pub fn extract_maneuvers(
    window: &WindowSlice<'_>,
    cfg: &ManeuverConfig,
) -> Result<ManeuverFeatures, ManeuverError> {
    let imu = window.imu;
    if imu.len() < 2 {
        return Err(ManeuverError::TooShortWindow {
            got: window.duration(),
            needed: cfg.span_seconds,
        });
    }
    let dt = (imu[imu.len() - 1].t - imu[0].t) / (imu.len() - 1) as f64;
    let ax: Vec<f64> = imu.iter().map(|s| s.ax).collect();
    let ay: Vec<f64> = imu.iter().map(|s| s.ay).collect();
    let az: Vec<f64> = imu.iter().map(|s| s.az).collect();
    Ok(ManeuverFeatures {
        weaving: detect_weaving(&ax, dt, cfg)?,
        swerving: detect_swerving(&ax, &ay, dt, cfg)?,
        side_slip: detect_side_slip(&ax, &ay, dt, cfg)?,
        abrupt_stop: detect_abrupt_stop(&ay, &az, cfg),
        sharp_turn: detect_sharp_turn(window.gps)?,
        jerk: detect_jerk(&ax, dt)?,
    })
}
