//! Synthetic trips from scenario scripts, with the planted factors and
//! annotator scores that produced them.
//!
//! The base trip drives straight at constant speed: zero lateral and
//! longitudinal acceleration, gravity on the vertical axis, GPS heading
//! east, and empty camera frames. Each scripted event overlays one
//! signature on the streams.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{Ballot, FactorSet};
use crate::features::FeatureId;
use crate::spatial::encode_pedestrian_speed;
use crate::trip::{
    Annotation, BBox, CameraInfo, DetectedObject, DetectionFrame, GpsFix, ImuSample, LightColor,
    ObjectClass, RoadType, TripMeta, TripRecord, Weather,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("invalid mix: {0}")]
    InvalidMix(String),
    #[error("script parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub const GRAVITY: f64 = 9.81;
pub const GPS_RATE_HZ: f64 = 1.0;
/// Ground speed of the base drive, in degrees of longitude per second.
const LON_PER_SECOND: f64 = 1e-4;
const ORIGIN: (f64, f64) = (48.0, 11.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// A middle-lane pedestrian walking across at `speed` m/s.
    PedestrianCross { speed: f64 },
    RedLight,
    /// `level` 1 fills the middle lane with 9 cars, level 2 with 15, so the
    /// window mean lands in the right band when the event covers at least
    /// 70% of the window.
    Congestion { level: u8 },
    /// The preceding car shows brake lights.
    LeaderBrake,
    /// A truck ahead in the middle lane.
    HeavyVehicle,
    /// The preceding car closes in from 12 m to 6 m.
    Tailgate,
    /// Lateral sinusoid; `frequency` in Hz (whole cycles are emitted).
    Weave {
        amplitude: f64,
        #[serde(default = "default_weave_hz")]
        frequency: f64,
    },
    /// Lateral triangle pulse, one second up and one down.
    Swerve { peak: f64 },
    /// Lateral plateau with a short ramp each side while ay is slightly positive.
    SideSlip { magnitude: f64 },
    /// Lateral step, a one-second hold, then a two-second decay.
    Jerk { step: f64 },
    /// Longitudinal deceleration of 2 m/s² released to zero over one second.
    AbruptStop,
    /// Heading change of `angle` degrees at the GPS fix nearest the event middle.
    SharpTurn { angle: f64 },
}

fn default_weave_hz() -> f64 {
    0.75
}

impl EventKind {
    pub fn scenario(&self) -> ScenarioKind {
        match self {
            EventKind::PedestrianCross { .. } => ScenarioKind::PedestrianCross,
            EventKind::RedLight => ScenarioKind::RedLight,
            EventKind::Congestion { .. } => ScenarioKind::Congestion,
            EventKind::LeaderBrake => ScenarioKind::LeaderBrake,
            EventKind::HeavyVehicle => ScenarioKind::HeavyVehicle,
            EventKind::Tailgate => ScenarioKind::Tailgate,
            EventKind::Weave { .. } => ScenarioKind::Weave,
            EventKind::Swerve { .. } => ScenarioKind::Swerve,
            EventKind::SideSlip { .. } => ScenarioKind::SideSlip,
            EventKind::Jerk { .. } => ScenarioKind::Jerk,
            EventKind::AbruptStop => ScenarioKind::AbruptStop,
            EventKind::SharpTurn { .. } => ScenarioKind::SharpTurn,
        }
    }

    /// Factors the event plants.
    pub fn factors(&self) -> Vec<FeatureId> {
        use FeatureId::*;
        match *self {
            EventKind::PedestrianCross { speed } => {
                if encode_pedestrian_speed(speed) >= 1 {
                    vec![Pedestrian, PedestrianSpeed]
                } else {
                    vec![Pedestrian]
                }
            }
            EventKind::RedLight => vec![TrafficLight],
            EventKind::Congestion { .. } => vec![Congestion],
            EventKind::LeaderBrake => vec![Braking],
            EventKind::HeavyVehicle => vec![Heavy],
            EventKind::Tailgate => vec![Preceding],
            EventKind::Weave { .. } => vec![Weaving],
            EventKind::Swerve { .. } => vec![Swerving],
            EventKind::SideSlip { .. } => vec![SideSlip],
            EventKind::Jerk { .. } => vec![Jerk],
            EventKind::AbruptStop => vec![AbruptStop],
            EventKind::SharpTurn { .. } => vec![SharpTurn],
        }
    }

    /// Shortest interval the signature needs (s).
    fn min_length(&self) -> f64 {
        match *self {
            EventKind::Weave { frequency, .. } => 1.0 / frequency,
            EventKind::Swerve { .. } | EventKind::SideSlip { .. } | EventKind::AbruptStop => 2.0,
            EventKind::Jerk { .. } => 3.0,
            EventKind::SharpTurn { .. } => 0.0,
            _ => 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    PedestrianCross,
    RedLight,
    Congestion,
    LeaderBrake,
    HeavyVehicle,
    Tailgate,
    Weave,
    Swerve,
    SideSlip,
    Jerk,
    AbruptStop,
    SharpTurn,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 12] = [
        ScenarioKind::PedestrianCross,
        ScenarioKind::RedLight,
        ScenarioKind::Congestion,
        ScenarioKind::LeaderBrake,
        ScenarioKind::HeavyVehicle,
        ScenarioKind::Tailgate,
        ScenarioKind::Weave,
        ScenarioKind::Swerve,
        ScenarioKind::SideSlip,
        ScenarioKind::Jerk,
        ScenarioKind::AbruptStop,
        ScenarioKind::SharpTurn,
    ];

    /// Events of one group would mask each other within a window: IMU
    /// signatures superpose, and only one vehicle can be the leader.
    fn group(self) -> Option<u8> {
        use ScenarioKind::*;
        match self {
            Weave | Swerve | SideSlip | Jerk | AbruptStop => Some(0),
            Congestion | LeaderBrake | HeavyVehicle | Tailgate => Some(1),
            PedestrianCross | RedLight | SharpTurn => None,
        }
    }

    pub fn is_maneuver(self) -> bool {
        self.group() == Some(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub t_start: f64,
    pub t_end: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

fn default_duration() -> f64 {
    40.0
}
fn default_rate() -> f64 {
    30.0
}
fn default_annotators() -> usize {
    3
}
fn default_event_score() -> u8 {
    3
}
fn default_delta() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    #[serde(default)]
    pub trip_id: Option<String>,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub road_type: u8,
    #[serde(default)]
    pub weather: u8,
    /// IMU noise standard deviation (m/s²) on every axis.
    #[serde(default)]
    pub imu_noise: f64,
    /// Bounding-box coordinate noise (px).
    #[serde(default)]
    pub det_jitter: f64,
    #[serde(default = "default_rate")]
    pub imu_rate_hz: f64,
    /// Window length used to label planted factors and scores.
    #[serde(default = "default_delta")]
    pub delta_seconds: f64,
    #[serde(default = "default_annotators")]
    pub annotators: usize,
    /// Instant score of windows with a planted event; all others score 5.
    #[serde(default = "default_event_score")]
    pub event_score: u8,
    #[serde(default)]
    pub events: Vec<ScriptEvent>,
}

impl Default for ScenarioScript {
    fn default() -> Self {
        Self {
            trip_id: None,
            duration: default_duration(),
            seed: 0,
            road_type: 0,
            weather: 0,
            imu_noise: 0.0,
            det_jitter: 0.0,
            imu_rate_hz: default_rate(),
            delta_seconds: default_delta(),
            annotators: default_annotators(),
            event_score: default_event_score(),
            events: Vec::new(),
        }
    }
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let s: ScenarioScript = toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("script serializes")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidScript(m));
        if !(self.duration.is_finite() && self.duration >= self.delta_seconds) {
            return bad(format!("duration {} shorter than one window", self.duration));
        }
        if !(self.delta_seconds > 0.0) {
            return bad("delta_seconds must be positive".into());
        }
        if !(self.imu_noise >= 0.0 && self.det_jitter >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if !(self.imu_rate_hz > 2.0 * GPS_RATE_HZ) {
            return bad("imu_rate_hz too low".into());
        }
        if RoadType::from_code(self.road_type).is_none() {
            return bad(format!("road_type {} outside 0..=3", self.road_type));
        }
        if Weather::from_code(self.weather).is_none() {
            return bad(format!("weather {} outside 0..=5", self.weather));
        }
        if !(1..=5).contains(&self.event_score) || self.annotators == 0 {
            return bad("event_score must be 1..=5 and annotators at least 1".into());
        }
        for (i, e) in self.events.iter().enumerate() {
            if !(0.0 <= e.t_start && e.t_start < e.t_end && e.t_end <= self.duration) {
                return bad(format!("event {i} interval outside the trip"));
            }
            if e.t_end - e.t_start < e.kind.min_length() {
                return bad(format!(
                    "event {i} needs at least {} s",
                    e.kind.min_length()
                ));
            }
            let ok = match e.kind {
                EventKind::PedestrianCross { speed } => speed > 0.0 && speed < 10.0,
                EventKind::Congestion { level } => (1..=2).contains(&level),
                EventKind::Weave { amplitude, frequency } => amplitude > 0.0 && frequency > 0.0,
                EventKind::Swerve { peak } => peak > 0.0,
                EventKind::SideSlip { magnitude } => magnitude > 0.0,
                EventKind::Jerk { step } => step > 0.0,
                EventKind::SharpTurn { angle } => angle > 0.0 && angle <= 180.0,
                _ => true,
            };
            if !ok {
                return bad(format!("event {i} has out-of-range parameters"));
            }
            for (j, f) in self.events[..i].iter().enumerate() {
                let overlap = e.t_start < f.t_end && f.t_start < e.t_end;
                let g = e.kind.scenario().group();
                if overlap && g.is_some() && g == f.kind.scenario().group() {
                    return bad(format!("events {j} and {i} overlap and would mask each other"));
                }
            }
        }
        Ok(())
    }

    fn n_windows(&self) -> usize {
        (self.duration / self.delta_seconds + 1e-9).floor() as usize
    }

    /// Windows whose factors an event plants: maneuvers label the window of
    /// their midpoint (the turn fix for a sharp turn); scene events label
    /// every window they overlap by at least half a second.
    fn event_windows(&self, e: &ScriptEvent) -> Vec<usize> {
        let d = self.delta_seconds;
        let n = self.n_windows();
        let point = |t: f64| ((t / d).floor() as usize).min(n.saturating_sub(1));
        match e.kind {
            EventKind::SharpTurn { .. } => vec![point(turn_fix_time(e))],
            k if k.scenario().is_maneuver() => vec![point(0.5 * (e.t_start + e.t_end))],
            _ => (0..n)
                .filter(|&u| {
                    let lo = e.t_start.max(u as f64 * d);
                    let hi = e.t_end.min((u + 1) as f64 * d);
                    hi - lo >= 0.5
                })
                .collect(),
        }
    }
}

fn turn_fix_time(e: &ScriptEvent) -> f64 {
    (0.5 * (e.t_start + e.t_end) * GPS_RATE_HZ).round() / GPS_RATE_HZ
}

/// A synthesized trip together with what was planted in it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrip {
    pub trip: TripRecord,
    pub planted: Vec<FactorSet>,
    pub scores: Vec<u8>,
    pub annotators: usize,
}

impl LabeledTrip {
    /// Windows carrying at least one planted factor.
    pub fn event_windows(&self) -> Vec<usize> {
        (0..self.planted.len())
            .filter(|&u| !self.planted[u].is_empty())
            .collect()
    }

    /// One ballot per annotator per event window, naming the planted factors.
    pub fn ballots(&self) -> Vec<Ballot> {
        let mut out = Vec::new();
        for u in self.event_windows() {
            for a in 0..self.annotators {
                out.push(Ballot {
                    trip_id: self.trip.trip_id.clone(),
                    annotator: format!("a{}", a + 1),
                    window: Some(u),
                    factors: self.planted[u].clone(),
                });
            }
        }
        out
    }
}

fn round_to(x: f64, scale: f64) -> f64 {
    (x * scale).round() / scale
}

/// Lateral (ax) or longitudinal (ay) overlay of an IMU event at time `t`.
fn imu_overlay(kind: &EventKind, t0: f64, t1: f64, t: f64) -> (f64, f64) {
    if t < t0 || t >= t1 {
        return (0.0, 0.0);
    }
    let u = t - t0;
    match *kind {
        EventKind::Weave {
            amplitude,
            frequency,
        } => {
            let cycles = ((t1 - t0) * frequency + 1e-9).floor().max(1.0);
            if u < cycles / frequency {
                (amplitude * (2.0 * PI * frequency * u).sin(), 0.0)
            } else {
                (0.0, 0.0)
            }
        }
        EventKind::Swerve { peak } => {
            let x = if u < 1.0 {
                peak * u
            } else if u < 2.0 {
                peak * (2.0 - u)
            } else {
                0.0
            };
            (x, 0.0)
        }
        EventKind::SideSlip { magnitude } => {
            let (ramp, hold) = (0.3, 1.2);
            let x = if u < ramp {
                magnitude * u / ramp
            } else if u < ramp + hold {
                magnitude
            } else if u < 2.0 * ramp + hold {
                magnitude * (2.0 * ramp + hold - u) / ramp
            } else {
                0.0
            };
            (x, if u < 2.0 * ramp + hold { 0.4 } else { 0.0 })
        }
        EventKind::Jerk { step } => {
            let x = if u < 1.0 {
                step
            } else if u < 3.0 {
                step * (3.0 - u) / 2.0
            } else {
                0.0
            };
            (x, 0.0)
        }
        EventKind::AbruptStop => {
            let ay = if u < 1.0 {
                2.0
            } else if u < 2.0 {
                2.0 * (2.0 - u)
            } else {
                0.0
            };
            // Small lateral tremble while braking.
            let ax = if u < 2.0 { 0.03 * (2.0 * PI * 3.0 * u).sin() } else { 0.0 };
            (ax, ay)
        }
        _ => (0.0, 0.0),
    }
}

fn middle_box(cx: f64, y_max: f64, w: f64, h: f64) -> BBox {
    BBox::new(cx - w / 2.0, y_max - h, cx + w / 2.0, y_max)
}

/// Objects an event shows in the frame at time `t`.
fn scene_objects(kind: &EventKind, t0: f64, t1: f64, t: f64, cam: &CameraInfo) -> Vec<DetectedObject> {
    if t < t0 || t >= t1 {
        return Vec::new();
    }
    let w = cam.frame_width;
    let h = cam.frame_height;
    let mpp = cam.meters_per_pixel;
    let gap_to_ymax = |gap_m: f64| h - gap_m / mpp;
    let car = ObjectClass::Car;
    match *kind {
        EventKind::PedestrianCross { speed } => {
            let px_per_s = speed / mpp;
            let cx = 0.35 * w + px_per_s * (t - t0);
            vec![DetectedObject::new(
                ObjectClass::Pedestrian,
                middle_box(cx.min(0.75 * w), 380.0, 60.0, 180.0),
                0.9,
            )]
        }
        EventKind::RedLight => vec![DetectedObject::new(
            ObjectClass::TrafficLight,
            BBox::new(0.85 * w, 20.0, 0.85 * w + 100.0, 140.0),
            0.9,
        )
        .with_color(LightColor::Red)],
        EventKind::Congestion { level } => {
            let n = if level >= 2 { 15 } else { 9 };
            (0..n)
                .map(|i| {
                    let cx = 0.3 * w + (0.4 * w) * i as f64 / (n - 1) as f64;
                    DetectedObject::new(car, middle_box(cx, gap_to_ymax(10.5), 100.0, 110.0), 0.85)
                })
                .collect()
        }
        EventKind::LeaderBrake => vec![DetectedObject::new(
            car,
            middle_box(0.5 * w, gap_to_ymax(11.0), 160.0, 100.0),
            0.9,
        )
        .with_braking(true)],
        EventKind::HeavyVehicle => vec![DetectedObject::new(
            ObjectClass::Truck,
            middle_box(0.5 * w, gap_to_ymax(12.0), 200.0, 150.0),
            0.9,
        )],
        EventKind::Tailgate => {
            let frac = (t - t0) / (t1 - t0);
            let gap = 12.0 - 6.0 * frac;
            let size = 160.0 + 80.0 * frac;
            vec![DetectedObject::new(
                car,
                middle_box(0.5 * w, gap_to_ymax(gap), size, size * 0.75),
                0.9,
            )]
        }
        _ => Vec::new(),
    }
}

fn jitter_box(b: &BBox, rng: &mut ChaCha8Rng, noise: Option<&Normal<f64>>, cam: &CameraInfo) -> BBox {
    let Some(n) = noise else {
        return *b;
    };
    let mut v = [b.x_min, b.y_min, b.x_max, b.y_max];
    for x in &mut v {
        *x += n.sample(rng);
    }
    let x_min = v[0].clamp(0.0, cam.frame_width - 2.0);
    let y_min = v[1].clamp(0.0, cam.frame_height - 2.0);
    let x_max = v[2].clamp(x_min + 1.0, cam.frame_width);
    let y_max = v[3].clamp(y_min + 1.0, cam.frame_height);
    BBox::new(x_min, y_min, x_max, y_max)
}

/// Render a script into a trip with its planted labels.
pub fn synthesize(script: &ScenarioScript) -> Result<LabeledTrip, SynthError> {
    script.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let imu_noise = (script.imu_noise > 0.0).then(|| Normal::new(0.0, script.imu_noise).unwrap());
    let det_noise = (script.det_jitter > 0.0).then(|| Normal::new(0.0, script.det_jitter).unwrap());
    let cam = CameraInfo::default();
    let meta = TripMeta {
        road_type: RoadType::from_code(script.road_type).unwrap(),
        weather: Weather::from_code(script.weather).unwrap(),
        camera: cam,
        duration: Some(script.duration),
    };
    let trip_id = script
        .trip_id
        .clone()
        .unwrap_or_else(|| format!("synth-{}", script.seed));
    let mut trip = TripRecord::new(trip_id, meta);

    let n_imu = (script.duration * script.imu_rate_hz + 1e-9).floor() as usize;
    for i in 0..n_imu {
        let t = i as f64 / script.imu_rate_hz;
        let (mut ax, mut ay, mut az) = (0.0, 0.0, GRAVITY);
        for e in &script.events {
            let (dx, dy) = imu_overlay(&e.kind, e.t_start, e.t_end, t);
            ax += dx;
            ay += dy;
        }
        if let Some(n) = &imu_noise {
            ax += n.sample(&mut rng);
            ay += n.sample(&mut rng);
            az += n.sample(&mut rng);
        }
        trip.imu.push(ImuSample {
            t: round_to(t, 1e6),
            ax: round_to(ax, 1e6),
            ay: round_to(ay, 1e6),
            az: round_to(az, 1e6),
        });
    }

    let turns: Vec<(f64, f64)> = script
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::SharpTurn { angle } => Some((turn_fix_time(e), angle)),
            _ => None,
        })
        .collect();
    let n_gps = (script.duration * GPS_RATE_HZ + 1e-9).floor() as usize;
    let (mut lat, mut lon) = ORIGIN;
    let mut heading = 0.0f64; // degrees, 0 = east
    for k in 0..n_gps {
        let t = k as f64 / GPS_RATE_HZ;
        if k > 0 {
            let step = LON_PER_SECOND / GPS_RATE_HZ;
            lon += step * heading.to_radians().cos();
            lat += step * heading.to_radians().sin();
        }
        trip.gps.push(GpsFix {
            t,
            lat: round_to(lat, 1e9),
            lon: round_to(lon, 1e9),
        });
        for &(tt, angle) in &turns {
            if (tt - t).abs() < 1e-9 {
                heading += angle;
            }
        }
    }

    let n_frames = (script.duration * cam.fps + 1e-9).floor() as usize;
    for k in 0..n_frames {
        let t = k as f64 / cam.fps;
        let mut objects = Vec::new();
        for e in &script.events {
            for mut o in scene_objects(&e.kind, e.t_start, e.t_end, t, &cam) {
                o.bbox = jitter_box(&o.bbox, &mut rng, det_noise.as_ref(), &cam);
                o.bbox = BBox::new(
                    round_to(o.bbox.x_min, 100.0),
                    round_to(o.bbox.y_min, 100.0),
                    round_to(o.bbox.x_max, 100.0),
                    round_to(o.bbox.y_max, 100.0),
                );
                objects.push(o);
            }
        }
        trip.frames.push(DetectionFrame {
            t: round_to(t, 1e6),
            frame_width: cam.frame_width,
            frame_height: cam.frame_height,
            fps: cam.fps,
            meters_per_pixel: cam.meters_per_pixel,
            objects,
        });
    }

    let n_win = script.n_windows();
    let mut planted = vec![FactorSet::new(); n_win];
    for e in &script.events {
        for u in script.event_windows(e) {
            planted[u].extend(e.kind.factors());
        }
    }
    let scores: Vec<u8> = planted
        .iter()
        .map(|p| if p.is_empty() { 5 } else { script.event_score })
        .collect();
    for (u, &s) in scores.iter().enumerate() {
        let t = round_to((u as f64 + 0.5) * script.delta_seconds, 1e6);
        for a in 0..script.annotators {
            trip.annotations.push(Annotation {
                t,
                annotator: format!("a{}", a + 1),
                score: s,
            });
        }
    }
    trip.validate()
        .map_err(|e| SynthError::InvalidScript(format!("generated trip invalid: {e}")))?;
    Ok(LabeledTrip {
        trip,
        planted,
        scores,
        annotators: script.annotators,
    })
}

/// How a corpus is drawn: each trip gets one event window (never the
/// first, which has no history) holding `min_factors..=max_factors` events.
/// The first event's kind is drawn from `mix`; further events are drawn
/// from `mix` restricted to kinds that do not clash with those chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_trips: usize,
    pub seed: u64,
    /// Probability of each scenario kind; must sum to 1.
    pub mix: BTreeMap<ScenarioKind, f64>,
    pub min_factors: usize,
    pub max_factors: usize,
    pub imu_noise: f64,
    pub det_jitter: f64,
    pub duration: f64,
}

impl CorpusSpec {
    pub fn uniform(n_trips: usize, seed: u64) -> Self {
        let p = 1.0 / ScenarioKind::ALL.len() as f64;
        Self {
            n_trips,
            seed,
            mix: ScenarioKind::ALL.iter().map(|&k| (k, p)).collect(),
            min_factors: 1,
            max_factors: 3,
            imu_noise: 0.0,
            det_jitter: 0.0,
            duration: 40.0,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.n_trips == 0 {
            return Err(SynthError::InvalidMix("n_trips must be at least 1".into()));
        }
        let total: f64 = self.mix.values().sum();
        if self.mix.values().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-6 {
            return Err(SynthError::InvalidMix(format!(
                "weights must be non-negative and sum to 1, got {total}"
            )));
        }
        if self.min_factors == 0 || self.min_factors > self.max_factors {
            return Err(SynthError::InvalidMix("bad factor-count range".into()));
        }
        if self.duration < 10.0 {
            return Err(SynthError::InvalidMix("duration must cover two windows".into()));
        }
        Ok(())
    }
}

/// Per-trip seed: trips are independent of generation order.
pub fn trip_seed(corpus_seed: u64, index: usize) -> u64 {
    let mut z = corpus_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw_kind(rng: &mut ChaCha8Rng, mix: &BTreeMap<ScenarioKind, f64>, allowed: impl Fn(ScenarioKind) -> bool) -> Option<ScenarioKind> {
    let pool: Vec<(ScenarioKind, f64)> = mix
        .iter()
        .filter(|(k, p)| **p > 0.0 && allowed(**k))
        .map(|(k, p)| (*k, *p))
        .collect();
    let total: f64 = pool.iter().map(|p| p.1).sum();
    if pool.is_empty() || total <= 0.0 {
        return None;
    }
    let mut x = rng.random::<f64>() * total;
    for &(k, p) in &pool {
        if x < p {
            return Some(k);
        }
        x -= p;
    }
    pool.last().map(|p| p.0)
}

/// Concrete event of a kind placed inside window `u`.
pub fn place_event(kind: ScenarioKind, u: usize, delta: f64, rng: &mut ChaCha8Rng) -> ScriptEvent {
    let w0 = u as f64 * delta;
    let (t_start, t_end) = match kind {
        ScenarioKind::SharpTurn => (w0 + 1.5, w0 + 2.5),
        k if k.is_maneuver() => (w0 + 1.0, w0 + 4.0),
        _ => (w0 + 0.5, w0 + 4.5),
    };
    let r = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| round_to(rng.random_range(lo..hi), 1e3);
    let kind = match kind {
        ScenarioKind::PedestrianCross => {
            let speeds = [1.0, 1.38, 2.0];
            EventKind::PedestrianCross {
                speed: speeds[rng.random_range(0..speeds.len())],
            }
        }
        ScenarioKind::RedLight => EventKind::RedLight,
        ScenarioKind::Congestion => EventKind::Congestion {
            level: rng.random_range(1..=2),
        },
        ScenarioKind::LeaderBrake => EventKind::LeaderBrake,
        ScenarioKind::HeavyVehicle => EventKind::HeavyVehicle,
        ScenarioKind::Tailgate => EventKind::Tailgate,
        ScenarioKind::Weave => EventKind::Weave {
            amplitude: r(rng, 1.0, 1.5),
            frequency: r(rng, 0.75, 1.0),
        },
        ScenarioKind::Swerve => EventKind::Swerve {
            peak: r(rng, 2.0, 3.0),
        },
        ScenarioKind::SideSlip => EventKind::SideSlip {
            magnitude: r(rng, 1.2, 1.8),
        },
        ScenarioKind::Jerk => EventKind::Jerk {
            step: r(rng, 1.5, 2.5),
        },
        ScenarioKind::AbruptStop => EventKind::AbruptStop,
        ScenarioKind::SharpTurn => EventKind::SharpTurn {
            angle: r(rng, 45.0, 90.0),
        },
    };
    ScriptEvent {
        t_start,
        t_end,
        kind,
    }
}

/// The script of trip `index` of a corpus.
pub fn corpus_script(spec: &CorpusSpec, index: usize) -> ScenarioScript {
    let seed = trip_seed(spec.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = default_delta();
    let n_win = (spec.duration / delta + 1e-9).floor() as usize;
    let u = rng.random_range(1..n_win);
    let n = rng.random_range(spec.min_factors..=spec.max_factors);
    let mut kinds: Vec<ScenarioKind> = Vec::new();
    for i in 0..n {
        let pick = draw_kind(&mut rng, &spec.mix, |k| {
            !kinds.contains(&k)
                && (i == 0 || k.group().is_none() || kinds.iter().all(|c| c.group() != k.group()))
        });
        match pick {
            Some(k) => kinds.push(k),
            None => break,
        }
    }
    let events = kinds
        .into_iter()
        .map(|k| place_event(k, u, delta, &mut rng))
        .collect();
    ScenarioScript {
        trip_id: Some(format!("trip-{index:04}")),
        duration: spec.duration,
        seed,
        imu_noise: spec.imu_noise,
        det_jitter: spec.det_jitter,
        events,
        ..ScenarioScript::default()
    }
}

/// Generate a corpus in parallel; the result is independent of thread count.
pub fn synthesize_corpus(spec: &CorpusSpec) -> Result<Vec<LabeledTrip>, SynthError> {
    spec.validate()?;
    (0..spec.n_trips)
        .into_par_iter()
        .map(|i| synthesize(&corpus_script(spec, i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(events: Vec<ScriptEvent>) -> ScenarioScript {
        ScenarioScript {
            events,
            ..ScenarioScript::default()
        }
    }

    #[test]
    fn empty_script_is_quiet() {
        let lt = synthesize(&script(vec![])).unwrap();
        assert_eq!(lt.trip.imu.len(), 1200);
        assert_eq!(lt.trip.gps.len(), 40);
        assert_eq!(lt.trip.frames.len(), 600);
        assert!(lt.scores.iter().all(|&s| s == 5));
        assert!(lt.planted.iter().all(|p| p.is_empty()));
        assert!(lt.trip.frames.iter().all(|f| f.objects.is_empty()));
        assert_eq!(lt.trip.annotations.len(), 8 * 3);
    }

    #[test]
    fn planted_labels_and_scores() {
        let lt = synthesize(&script(vec![
            ScriptEvent {
                t_start: 16.0,
                t_end: 19.0,
                kind: EventKind::AbruptStop,
            },
            ScriptEvent {
                t_start: 15.5,
                t_end: 19.5,
                kind: EventKind::RedLight,
            },
        ]))
        .unwrap();
        assert_eq!(lt.event_windows(), vec![3]);
        assert_eq!(
            lt.planted[3],
            [FeatureId::AbruptStop, FeatureId::TrafficLight].into_iter().collect()
        );
        assert_eq!(lt.scores[3], 3);
        assert_eq!(lt.ballots().len(), 3);
    }

    #[test]
    fn script_toml_round_trip() {
        let text = r#"
            duration = 40
            seed = 3
            [[events]]
            kind = "weave"
            t_start = 6.0
            t_end = 9.0
            amplitude = 1.0
            [[events]]
            kind = "congestion"
            t_start = 20.5
            t_end = 24.5
            level = 2
        "#;
        let s = ScenarioScript::parse(text).unwrap();
        assert_eq!(s.events.len(), 2);
        assert_eq!(
            s.events[0].kind,
            EventKind::Weave {
                amplitude: 1.0,
                frequency: 0.75
            }
        );
        assert_eq!(ScenarioScript::parse(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn invalid_scripts() {
        let ev = |a: f64, b: f64, kind| ScriptEvent {
            t_start: a,
            t_end: b,
            kind,
        };
        assert!(script(vec![ev(38.0, 42.0, EventKind::RedLight)]).validate().is_err());
        assert!(script(vec![
            ev(5.0, 8.0, EventKind::AbruptStop),
            ev(6.0, 9.0, EventKind::Swerve { peak: 2.0 })
        ])
        .validate()
        .is_err());
        let noisy = ScenarioScript {
            imu_noise: -1.0,
            ..ScenarioScript::default()
        };
        assert!(matches!(synthesize(&noisy), Err(SynthError::InvalidScript(_))));
    }

    #[test]
    fn corpus_is_deterministic() {
        let spec = CorpusSpec::uniform(10, 99);
        let a = synthesize_corpus(&spec).unwrap();
        let b = synthesize_corpus(&spec).unwrap();
        assert_eq!(a, b);
        for lt in &a {
            let n = lt.event_windows();
            assert_eq!(n.len(), 1);
            assert!(n[0] >= 1);
            assert!((1..=4).contains(&lt.planted[n[0]].len()));
        }
    }

    #[test]
    fn mix_must_sum_to_one() {
        let mut spec = CorpusSpec::uniform(5, 1);
        spec.mix.insert(ScenarioKind::RedLight, 0.5);
        assert!(matches!(synthesize_corpus(&spec), Err(SynthError::InvalidMix(_))));
    }
}
