use std::f64::consts::PI;

use super::{ImuSample, TripError};

/// Single-pole low-pass (exponential smoothing) over a uniformly sampled
/// `(t, value)` series. The first output equals the first input, which keeps
/// the filter linear and gives unit DC gain.
pub fn low_pass_filter(signal: &[(f64, f64)], cutoff_hz: f64) -> Result<Vec<(f64, f64)>, TripError> {
    if signal.len() < 2 {
        return Ok(signal.to_vec());
    }
    let dt = uniform_interval(signal.iter().map(|p| p.0))?;
    let values: Vec<f64> = signal.iter().map(|p| p.1).collect();
    let out = low_pass_uniform(&values, dt, cutoff_hz)?;
    Ok(signal.iter().zip(out).map(|(p, y)| (p.0, y)).collect())
}

/// Same filter on bare values sampled every `dt` seconds.
pub fn low_pass_uniform(values: &[f64], dt: f64, cutoff_hz: f64) -> Result<Vec<f64>, TripError> {
    let nyquist = 0.5 / dt;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(TripError::CutoffAboveNyquist {
            cutoff: cutoff_hz,
            nyquist,
        });
    }
    let rc = 1.0 / (2.0 * PI * cutoff_hz);
    let alpha = dt / (rc + dt);
    let mut out = Vec::with_capacity(values.len());
    let mut y = match values.first() {
        Some(&v) => v,
        None => return Ok(out),
    };
    for &x in values {
        y += alpha * (x - y);
        out.push(y);
    }
    Ok(out)
}

/// Mean sampling interval, provided every interval is within 1% of it.
pub(crate) fn uniform_interval(times: impl Iterator<Item = f64>) -> Result<f64, TripError> {
    let times: Vec<f64> = times.collect();
    let n = times.len();
    if n < 2 {
        return Err(TripError::NonUniformSampling {
            interval: 0.0,
            mean: 0.0,
        });
    }
    let mean = (times[n - 1] - times[0]) / (n - 1) as f64;
    for w in times.windows(2) {
        let d = w[1] - w[0];
        if (d - mean).abs() > 0.01 * mean || mean <= 0.0 {
            return Err(TripError::NonUniformSampling { interval: d, mean });
        }
    }
    Ok(mean)
}

/// Linearly interpolate IMU samples onto a uniform grid starting at the
/// first sample time and never extrapolating past the last one.
pub fn resample_uniform(samples: &[ImuSample], rate_hz: f64) -> Vec<ImuSample> {
    if samples.len() < 2 || rate_hz <= 0.0 {
        return samples.to_vec();
    }
    let t0 = samples[0].t;
    let t_last = samples[samples.len() - 1].t;
    let dt = 1.0 / rate_hz;
    let n = ((t_last - t0) / dt + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = t0 + k as f64 * dt;
        while j + 2 < samples.len() && samples[j + 1].t <= t {
            j += 1;
        }
        let a = &samples[j];
        let b = &samples[j + 1];
        let f = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        out.push(ImuSample {
            t,
            ax: a.ax + f * (b.ax - a.ax),
            ay: a.ay + f * (b.ay - a.ay),
            az: a.az + f * (b.az - a.az),
        });
    }
    out
}
