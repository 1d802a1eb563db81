//! Run configuration. The file is plain `key = value` text; section keys
//! may be written dotted (`maneuver.ay_gate = 0.3`) or under a `[maneuver]`
//! heading. Every key has a default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Parse(String),
    #[error("config key `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub delta_seconds: f64,
    pub imu_rate_hz: f64,
    pub lowpass_cutoff_hz: f64,
    pub epsilon: f64,
    pub topk: usize,
    pub maneuver: ManeuverConfig,
    pub spatial: SpatialConfig,
    pub som: SomConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            delta_seconds: 5.0,
            imu_rate_hz: 30.0,
            lowpass_cutoff_hz: 5.0,
            epsilon: 1.0,
            topk: 5,
            maneuver: ManeuverConfig::default(),
            spatial: SpatialConfig::default(),
            som: SomConfig::default(),
        }
    }
}

/// Numeric gates of the maneuver detectors (m/s² unless noted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManeuverConfig {
    /// Swerving requires mean |ay| below this.
    pub ay_gate: f64,
    /// |ax| below this counts as the near-zero lateral baseline.
    pub baseline: f64,
    /// |ay| at or above this counts as moving (abrupt stop onset).
    pub move_gate: f64,
    /// |ay| below this counts as stopped.
    pub stop_threshold: f64,
    pub peak_prominence: f64,
    /// Span (s) within which a weaving peak pair or a side-slip excursion completes.
    pub span_seconds: f64,
    /// Leading/trailing edge length (s) around a swerve peak.
    pub edge_seconds: f64,
    /// Side-slip requires mean ay above this ("slightly positive").
    pub side_slip_ay_min: f64,
    /// Quiet lead-in (s) required before a side-slip excursion.
    pub slip_hold_seconds: f64,
    /// Upper end of the vertical band checked during an abrupt stop.
    pub az_band_max: f64,
    /// A window median |az| above this is treated as gravity and removed.
    pub gravity_detect: f64,
}

impl Default for ManeuverConfig {
    fn default() -> Self {
        Self {
            ay_gate: 0.3,
            baseline: 0.2,
            move_gate: 0.5,
            stop_threshold: 0.1,
            peak_prominence: 0.1,
            span_seconds: 2.0,
            edge_seconds: 1.0,
            side_slip_ay_min: 0.05,
            slip_hold_seconds: 0.5,
            az_band_max: 1.0,
            gravity_detect: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    pub min_confidence: f64,
    /// Minimum bounding-box area in px².
    pub min_area: f64,
    /// |relative speed| above this sets the speed flag (m/s).
    pub speed_cutoff: f64,
    /// Relative distance below this sets the distance flag (m).
    pub distance_cutoff: f64,
    pub iou_threshold: f64,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        Self {
            min_confidence: 0.5,
            min_area: 10_000.0,
            speed_cutoff: 2.0,
            distance_cutoff: 10.0,
            iou_threshold: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridPolicy {
    Pad,
    Truncate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SomConfig {
    pub rows: usize,
    pub cols: usize,
    pub epochs: usize,
    pub alpha0: f64,
    /// Initial bubble radius; `max(rows, cols) / 2` when unset.
    pub radius0: Option<f64>,
    pub seed: u64,
    /// Codebook weights below this are not reported as explanatory.
    pub fgen_min_weight: f64,
    pub grid_windows: usize,
    pub grid_policy: GridPolicy,
}

impl Default for SomConfig {
    fn default() -> Self {
        Self {
            rows: 7,
            cols: 21,
            epochs: 500,
            alpha0: 0.5,
            radius0: None,
            seed: 42,
            fgen_min_weight: 0.25,
            grid_windows: 8,
            grid_policy: GridPolicy::Pad,
        }
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    key,
                    reason: format!("must be positive, got {v}"),
                })
            }
        };
        positive("delta_seconds", self.delta_seconds)?;
        positive("imu_rate_hz", self.imu_rate_hz)?;
        positive("lowpass_cutoff_hz", self.lowpass_cutoff_hz)?;
        if self.lowpass_cutoff_hz >= self.imu_rate_hz / 2.0 {
            return Err(ConfigError::Invalid {
                key: "lowpass_cutoff_hz",
                reason: "must be below half of imu_rate_hz".into(),
            });
        }
        if !(self.epsilon >= 0.0) {
            return Err(ConfigError::Invalid {
                key: "epsilon",
                reason: "must be non-negative".into(),
            });
        }
        if self.topk == 0 {
            return Err(ConfigError::Invalid {
                key: "topk",
                reason: "must be at least 1".into(),
            });
        }
        if self.som.rows == 0 || self.som.cols == 0 {
            return Err(ConfigError::Invalid {
                key: "som.rows",
                reason: "grid dimensions must be at least 1".into(),
            });
        }
        Ok(())
    }
}
