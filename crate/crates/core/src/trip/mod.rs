//! Trip data model: IMU samples, GPS fixes, detection frames and score
//! annotations, plus the record-level validation every loader runs.

mod filter;
mod io;
mod window;

pub use filter::{low_pass_filter, low_pass_uniform, resample_uniform};
pub use io::{load_trip, parse_trip, save_trip, write_trip};
pub use window::{window_count, window_trip, WindowSlice};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TripError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("trip span {span:.3}s is shorter than one {delta}s window")]
    EmptyTrip { span: f64, delta: f64 },
    #[error("window length must be positive, got {0}")]
    BadDelta(f64),
    #[error("signal is not uniformly sampled (interval {interval:.6}s deviates from mean {mean:.6}s)")]
    NonUniformSampling { interval: f64, mean: f64 },
    #[error("cutoff {cutoff} Hz is not below the Nyquist frequency {nyquist} Hz")]
    CutoffAboveNyquist { cutoff: f64, nyquist: f64 },
}

impl TripError {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        TripError::Validation {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// Name of the offending field for validation errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            TripError::Validation { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// One accelerometer reading. X is lateral, Y longitudinal, Z vertical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub t: f64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Pedestrian,
    Car,
    Bus,
    Truck,
    TrafficLight,
    Bicycle,
    Motorcycle,
}

impl ObjectClass {
    pub fn is_vehicle(self) -> bool {
        matches!(self, ObjectClass::Car | ObjectClass::Bus | ObjectClass::Truck)
    }

    pub fn is_heavy(self) -> bool {
        matches!(self, ObjectClass::Bus | ObjectClass::Truck)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightColor {
    Red,
    Yellow,
    Green,
}

/// Axis-aligned box in pixel coordinates, origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center_x(&self) -> f64 {
        0.5 * (self.x_min + self.x_max)
    }

    /// Midpoint of the bottom edge (ground-contact point).
    pub fn bottom_mid(&self) -> (f64, f64) {
        (self.center_x(), self.y_max)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let iy = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectAttrs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<LightColor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub braking: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedObject {
    pub class: ObjectClass,
    pub bbox: BBox,
    pub confidence: f64,
    pub attrs: ObjectAttrs,
}

impl DetectedObject {
    pub fn new(class: ObjectClass, bbox: BBox, confidence: f64) -> Self {
        Self {
            class,
            bbox,
            confidence,
            attrs: ObjectAttrs::default(),
        }
    }

    pub fn with_color(mut self, color: LightColor) -> Self {
        self.attrs.color = Some(color);
        self
    }

    pub fn with_braking(mut self, braking: bool) -> Self {
        self.attrs.braking = Some(braking);
        self
    }

    pub fn is_braking(&self) -> bool {
        self.attrs.braking.unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub t: f64,
    pub frame_width: f64,
    pub frame_height: f64,
    pub fps: f64,
    pub meters_per_pixel: f64,
    pub objects: Vec<DetectedObject>,
}

/// Camera calibration shared by all frames of a trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraInfo {
    pub frame_width: f64,
    pub frame_height: f64,
    pub fps: f64,
    pub meters_per_pixel: f64,
}

impl Default for CameraInfo {
    fn default() -> Self {
        Self {
            frame_width: 960.0,
            frame_height: 540.0,
            fps: 15.0,
            meters_per_pixel: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoadType {
    Parking = 0,
    Residential = 1,
    CityStreet = 2,
    Highway = 3,
}

impl RoadType {
    pub const NAMES: [&'static str; 4] = ["parking", "residential", "city street", "highway"];

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => RoadType::Parking,
            1 => RoadType::Residential,
            2 => RoadType::CityStreet,
            3 => RoadType::Highway,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Weather {
    Clear = 0,
    Overcast = 1,
    Cloudy = 2,
    Rainy = 3,
    Snowy = 4,
    Foggy = 5,
}

impl Weather {
    pub const NAMES: [&'static str; 6] = ["clear", "overcast", "cloudy", "rainy", "snowy", "foggy"];

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Weather::Clear,
            1 => Weather::Overcast,
            2 => Weather::Cloudy,
            3 => Weather::Rainy,
            4 => Weather::Snowy,
            5 => Weather::Foggy,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripMeta {
    pub road_type: RoadType,
    pub weather: Weather,
    pub camera: CameraInfo,
    /// Declared trip length; inferred from the IMU stream when absent.
    pub duration: Option<f64>,
}

impl Default for TripMeta {
    fn default() -> Self {
        Self {
            road_type: RoadType::CityStreet,
            weather: Weather::Clear,
            camera: CameraInfo::default(),
            duration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub t: f64,
    pub annotator: String,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub trip_id: String,
    pub imu: Vec<ImuSample>,
    pub gps: Vec<GpsFix>,
    pub frames: Vec<DetectionFrame>,
    pub meta: TripMeta,
    pub annotations: Vec<Annotation>,
}

impl TripRecord {
    pub fn new(trip_id: impl Into<String>, meta: TripMeta) -> Self {
        Self {
            trip_id: trip_id.into(),
            imu: Vec::new(),
            gps: Vec::new(),
            frames: Vec::new(),
            meta,
            annotations: Vec::new(),
        }
    }

    /// Time span covered by the trip, starting at t = 0.
    ///
    /// Uses the declared duration when present; otherwise the last IMU
    /// timestamp plus one sampling interval, since each sample stands for
    /// the interval that follows it.
    pub fn span(&self) -> f64 {
        if let Some(d) = self.meta.duration {
            return d;
        }
        match self.imu.len() {
            0 => 0.0,
            1 => self.imu[0].t,
            n => {
                let dt = (self.imu[n - 1].t - self.imu[0].t) / (n - 1) as f64;
                self.imu[n - 1].t + dt
            }
        }
    }

    pub fn validate(&self) -> Result<(), TripError> {
        if self.trip_id.is_empty() {
            return Err(TripError::invalid("trip_id", "must not be empty"));
        }
        let cam = &self.meta.camera;
        positive("frame_width", cam.frame_width)?;
        positive("frame_height", cam.frame_height)?;
        positive("fps", cam.fps)?;
        positive("mpp", cam.meters_per_pixel)?;
        if let Some(d) = self.meta.duration {
            positive("duration", d)?;
        }

        check_times("imu.t", self.imu.iter().map(|s| s.t))?;
        for s in &self.imu {
            for (name, v) in [("ax", s.ax), ("ay", s.ay), ("az", s.az)] {
                if !v.is_finite() {
                    return Err(TripError::invalid(name, format!("non-finite value at t={}", s.t)));
                }
            }
        }

        check_times("gps.t", self.gps.iter().map(|g| g.t))?;
        for g in &self.gps {
            if !(-90.0..=90.0).contains(&g.lat) {
                return Err(TripError::invalid("lat", format!("{} outside [-90, 90]", g.lat)));
            }
            if !(-180.0..=180.0).contains(&g.lon) {
                return Err(TripError::invalid("lon", format!("{} outside [-180, 180]", g.lon)));
            }
        }

        check_times("det.t", self.frames.iter().map(|f| f.t))?;
        for f in &self.frames {
            positive("frame_width", f.frame_width)?;
            positive("frame_height", f.frame_height)?;
            positive("fps", f.fps)?;
            positive("mpp", f.meters_per_pixel)?;
            for o in &f.objects {
                let b = &o.bbox;
                if !(b.x_min < b.x_max) {
                    return Err(TripError::invalid("bbox", "x_min must be below x_max"));
                }
                if !(b.y_min < b.y_max) {
                    return Err(TripError::invalid("bbox", "y_min must be below y_max"));
                }
                if !(0.0..=1.0).contains(&o.confidence) {
                    return Err(TripError::invalid(
                        "conf",
                        format!("{} outside [0, 1]", o.confidence),
                    ));
                }
            }
        }

        if self.annotations.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(TripError::invalid("score.t", "annotations must be time-ordered"));
        }
        for a in &self.annotations {
            if !(a.t >= 0.0 && a.t.is_finite()) {
                return Err(TripError::invalid("score.t", format!("bad time {}", a.t)));
            }
            if !(1..=5).contains(&a.score) {
                return Err(TripError::invalid("score", format!("{} outside 1..5", a.score)));
            }
        }
        Ok(())
    }
}

fn positive(field: &str, v: f64) -> Result<(), TripError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(TripError::invalid(field, format!("must be positive, got {v}")))
    }
}

fn check_times(field: &str, times: impl Iterator<Item = f64>) -> Result<(), TripError> {
    let mut prev: Option<f64> = None;
    for t in times {
        if !t.is_finite() || t < 0.0 {
            return Err(TripError::invalid(field, format!("bad time {t}")));
        }
        if let Some(p) = prev {
            if t <= p {
                return Err(TripError::invalid(
                    field,
                    format!("times must strictly increase ({p} then {t})"),
                ));
            }
        }
        prev = Some(t);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_of_identical_and_disjoint_boxes() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        let b = BBox::new(20.0, 20.0, 30.0, 30.0);
        assert_eq!(a.iou(&b), 0.0);
        let c = BBox::new(5.0, 0.0, 15.0, 10.0);
        assert!((a.iou(&c) - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn span_inferred_from_imu_rate() {
        let mut trip = TripRecord::new("t", TripMeta::default());
        trip.imu = (0..1200)
            .map(|i| ImuSample {
                t: i as f64 / 30.0,
                ax: 0.0,
                ay: 0.0,
                az: 0.0,
            })
            .collect();
        assert!((trip.span() - 40.0).abs() < 1e-9);
        trip.meta.duration = Some(12.0);
        assert_eq!(trip.span(), 12.0);
    }

    #[test]
    fn validate_rejects_non_increasing_time() {
        let mut trip = TripRecord::new("t", TripMeta::default());
        trip.gps = vec![
            GpsFix { t: 1.0, lat: 0.0, lon: 0.0 },
            GpsFix { t: 1.0, lat: 0.0, lon: 0.0 },
        ];
        assert_eq!(trip.validate().unwrap_err().field(), Some("gps.t"));
    }

    #[test]
    fn codes_round_trip() {
        for c in 0..4 {
            assert_eq!(RoadType::from_code(c).unwrap().code(), c);
        }
        for c in 0..6 {
            assert_eq!(Weather::from_code(c).unwrap().code(), c);
        }
        assert!(RoadType::from_code(4).is_none());
        assert!(Weather::from_code(6).is_none());
        assert_eq!(Weather::Rainy.name(), "rainy");
    }
}
