//! Spatial micro-events from object detections: lane filtering, congestion,
//! the preceding vehicle's gap and closing speed, pedestrian speed, braking
//! and red lights, encoded on ordinal scales.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SpatialConfig;
use crate::trip::{BBox, DetectedObject, DetectionFrame, LightColor, ObjectClass, WindowSlice};

#[derive(Debug, Error, PartialEq)]
pub enum SpatialError {
    #[error("no preceding vehicle in one of the frames")]
    MissingPrecedingVehicle,
    #[error("pedestrian has no match in the next frame")]
    NoMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lane {
    Left,
    Middle,
    Right,
}

/// Encoded spatial micro-events of one window plus the raw measurements
/// they were derived from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpatialFeatures {
    /// Joint relative speed/distance code, 0..=3.
    pub preceding: u8,
    pub braking: u8,
    /// 0 none, 1 moderate, 2 heavy.
    pub congestion: u8,
    pub pedestrian: u8,
    /// 0 slow, 1 moderate, 2 fast.
    pub pedestrian_speed: u8,
    pub traffic_light: u8,
    pub heavy: u8,
    /// Mean gap to the preceding vehicle (m).
    pub rel_distance: Option<f64>,
    /// Mean rate of change of that gap (m/s, negative when closing).
    pub rel_speed: Option<f64>,
    pub mean_cars: f64,
    pub mean_pedestrians: f64,
    pub mean_heavy: f64,
    /// Fastest matched middle-lane pedestrian (m/s).
    pub max_pedestrian_speed: Option<f64>,
}

/// Drop low-confidence and far-away (small) detections, keeping order.
pub fn filter_detections(frame: &DetectionFrame, cfg: &SpatialConfig) -> DetectionFrame {
    DetectionFrame {
        objects: frame
            .objects
            .iter()
            .filter(|o| o.confidence >= cfg.min_confidence && o.bbox.area() >= cfg.min_area)
            .cloned()
            .collect(),
        ..frame.clone()
    }
}

/// Split the frame 0.2 : 0.6 : 0.2 horizontally by box center.
pub fn lane_of(bbox: &BBox, frame_width: f64) -> Lane {
    let c = bbox.center_x();
    if c < 0.2 * frame_width {
        Lane::Left
    } else if c < 0.8 * frame_width {
        Lane::Middle
    } else {
        Lane::Right
    }
}

/// Vehicle count bands: up to 5 none, up to 10 moderate, above 10 heavy.
pub fn congestion_level(mean_car_count: f64) -> u8 {
    if mean_car_count <= 5.0 {
        0
    } else if mean_car_count <= 10.0 {
        1
    } else {
        2
    }
}

/// Walking-speed bands: below 1.34 m/s slow, up to 1.43 m/s moderate, above fast.
pub fn encode_pedestrian_speed(v: f64) -> u8 {
    if v < 1.34 {
        0
    } else if v <= 1.43 {
        1
    } else {
        2
    }
}

/// Joint code of the speed flag and the distance flag:
/// (0,0)→0, (0,1)→1, (1,0)→2, (1,1)→3.
pub fn encode_preceding(speed_flag: bool, distance_flag: bool) -> u8 {
    2 * speed_flag as u8 + distance_flag as u8
}

fn in_middle(o: &DetectedObject, frame: &DetectionFrame) -> bool {
    lane_of(&o.bbox, frame.frame_width) == Lane::Middle
}

// Total order on boxes so that selection never depends on list order.
fn box_order(a: &BBox, b: &BBox) -> Ordering {
    a.x_min
        .total_cmp(&b.x_min)
        .then(a.y_min.total_cmp(&b.y_min))
        .then(a.x_max.total_cmp(&b.x_max))
        .then(a.y_max.total_cmp(&b.y_max))
}

/// Largest-area car, bus or truck in the middle lane.
pub fn preceding_vehicle(frame: &DetectionFrame) -> Option<&DetectedObject> {
    frame
        .objects
        .iter()
        .filter(|o| o.class.is_vehicle() && in_middle(o, frame))
        .max_by(|a, b| {
            a.bbox
                .area()
                .total_cmp(&b.bbox.area())
                .then_with(|| box_order(&b.bbox, &a.bbox))
        })
}

/// Gap from the preceding vehicle's bottom edge to the frame bottom, in
/// meters via the per-trip meters-per-pixel calibration.
pub fn relative_distance(frame: &DetectionFrame) -> Option<f64> {
    preceding_vehicle(frame)
        .map(|o| (frame.frame_height - o.bbox.y_max).max(0.0) * frame.meters_per_pixel)
}

/// Change of gap between consecutive frames times the frame rate.
pub fn relative_speed(
    d_prev: Option<f64>,
    d_curr: Option<f64>,
    fps: f64,
) -> Result<f64, SpatialError> {
    match (d_prev, d_curr) {
        (Some(p), Some(c)) => Ok((c - p) * fps),
        _ => Err(SpatialError::MissingPrecedingVehicle),
    }
}

/// Speed from a bottom-midpoint displacement in pixels.
pub fn speed_from_displacement(displacement_px: f64, pixels_per_meter: f64, fps: f64) -> f64 {
    displacement_px / pixels_per_meter * fps
}

/// Speed of `pedestrian` (taken from `prev`) matched into `curr` by the
/// highest box overlap at or above the IoU threshold.
pub fn pedestrian_speed(
    prev: &DetectionFrame,
    curr: &DetectionFrame,
    pedestrian: &DetectedObject,
    cfg: &SpatialConfig,
) -> Result<f64, SpatialError> {
    let matched = curr
        .objects
        .iter()
        .filter(|o| o.class == ObjectClass::Pedestrian)
        .map(|o| (o, o.bbox.iou(&pedestrian.bbox)))
        .filter(|(_, iou)| *iou >= cfg.iou_threshold)
        .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| box_order(&b.0.bbox, &a.0.bbox)))
        .map(|(o, _)| o)
        .ok_or(SpatialError::NoMatch)?;
    Ok(track_speed(&pedestrian.bbox, &matched.bbox, prev))
}

fn track_speed(a: &BBox, b: &BBox, frame: &DetectionFrame) -> f64 {
    let (x1, y1) = a.bottom_mid();
    let (x2, y2) = b.bottom_mid();
    let px = ((x2 - x1).powi(2) + (y2 - y1).powi(2)).sqrt();
    speed_from_displacement(px, 1.0 / frame.meters_per_pixel, frame.fps)
}

/// Greedy one-to-one pedestrian matching between two frames: candidate
/// pairs at or above the IoU threshold are taken in decreasing overlap.
/// Returns speeds (m/s) of the matched middle-lane pedestrians.
pub fn matched_pedestrian_speeds(
    prev: &DetectionFrame,
    curr: &DetectionFrame,
    cfg: &SpatialConfig,
) -> Vec<f64> {
    let peds = |f: &'_ DetectionFrame| -> Vec<BBox> {
        let mut v: Vec<BBox> = f
            .objects
            .iter()
            .filter(|o| o.class == ObjectClass::Pedestrian && in_middle(o, f))
            .map(|o| o.bbox)
            .collect();
        v.sort_by(box_order);
        v
    };
    let a = peds(prev);
    let b = peds(curr);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, ba) in a.iter().enumerate() {
        for (j, bb) in b.iter().enumerate() {
            let iou = ba.iou(bb);
            if iou >= cfg.iou_threshold {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut speeds = Vec::new();
    for (_, i, j) in pairs {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        speeds.push(track_speed(&a[i], &b[j], curr));
    }
    speeds
}

/// Encode the spatial micro-events of one window.
pub fn extract_spatial(window: &WindowSlice<'_>, cfg: &SpatialConfig) -> SpatialFeatures {
    let frames: Vec<DetectionFrame> = window
        .frames
        .iter()
        .map(|f| filter_detections(f, cfg))
        .collect();
    if frames.is_empty() {
        return SpatialFeatures::default();
    }

    let mut out = SpatialFeatures::default();
    let mut cars = 0usize;
    let mut peds = 0usize;
    let mut heavy = 0usize;
    let mut distances = Vec::new();
    for f in &frames {
        for o in &f.objects {
            let middle = in_middle(o, f);
            match o.class {
                ObjectClass::Car if middle => cars += 1,
                ObjectClass::Pedestrian if middle => {
                    peds += 1;
                    out.pedestrian = 1;
                }
                ObjectClass::Bus | ObjectClass::Truck if middle => {
                    heavy += 1;
                    out.heavy = 1;
                }
                ObjectClass::TrafficLight if o.attrs.color == Some(LightColor::Red) => {
                    out.traffic_light = 1;
                }
                _ => {}
            }
        }
        let lead = preceding_vehicle(f);
        if lead.is_some_and(|o| o.is_braking()) {
            out.braking = 1;
        }
        distances.push(relative_distance(f));
    }
    let n = frames.len() as f64;
    out.mean_cars = cars as f64 / n;
    out.mean_pedestrians = peds as f64 / n;
    out.mean_heavy = heavy as f64 / n;
    out.congestion = congestion_level(out.mean_cars);

    let present: Vec<f64> = distances.iter().flatten().copied().collect();
    if !present.is_empty() {
        out.rel_distance = Some(present.iter().sum::<f64>() / present.len() as f64);
    }
    let speeds: Vec<f64> = frames
        .windows(2)
        .zip(distances.windows(2))
        .filter_map(|(f, d)| relative_speed(d[0], d[1], f[1].fps).ok())
        .collect();
    if !speeds.is_empty() {
        out.rel_speed = Some(speeds.iter().sum::<f64>() / speeds.len() as f64);
    }
    if let Some(d) = out.rel_distance {
        let speed_flag = out.rel_speed.is_some_and(|s| s.abs() > cfg.speed_cutoff);
        out.preceding = encode_preceding(speed_flag, d < cfg.distance_cutoff);
    }

    out.max_pedestrian_speed = frames
        .windows(2)
        .flat_map(|f| matched_pedestrian_speeds(&f[0], &f[1], cfg))
        .reduce(f64::max);
    out.pedestrian_speed = out.max_pedestrian_speed.map_or(0, encode_pedestrian_speed);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SpatialConfig {
        SpatialConfig::default()
    }

    fn frame(t: f64, objects: Vec<DetectedObject>) -> DetectionFrame {
        DetectionFrame {
            t,
            frame_width: 960.0,
            frame_height: 540.0,
            fps: 15.0,
            meters_per_pixel: 0.05,
            objects,
        }
    }

    fn obj(class: ObjectClass, b: [f64; 4], conf: f64) -> DetectedObject {
        DetectedObject::new(class, BBox::new(b[0], b[1], b[2], b[3]), conf)
    }

    #[test]
    fn filter_thresholds() {
        let f = frame(
            0.0,
            vec![
                obj(ObjectClass::Car, [0.0, 0.0, 250.0, 200.0], 0.4),
                obj(ObjectClass::Car, [0.0, 0.0, 90.0, 100.0], 0.9),
                obj(ObjectClass::Car, [0.0, 0.0, 200.0, 100.0], 0.9),
            ],
        );
        let kept = filter_detections(&f, &cfg());
        assert_eq!(kept.objects.len(), 1);
        assert_eq!(kept.objects[0].bbox.area(), 20_000.0);
        assert_eq!(filter_detections(&kept, &cfg()), kept);
    }

    #[test]
    fn lanes() {
        let b = |c: f64| BBox::new(c - 10.0, 0.0, c + 10.0, 10.0);
        assert_eq!(lane_of(&b(100.0), 960.0), Lane::Left);
        assert_eq!(lane_of(&b(480.0), 960.0), Lane::Middle);
        assert_eq!(lane_of(&b(900.0), 960.0), Lane::Right);
        assert_eq!(lane_of(&b(192.0), 960.0), Lane::Middle);
        assert_eq!(lane_of(&b(768.0), 960.0), Lane::Right);
    }

    #[test]
    fn encoders_at_boundaries() {
        assert_eq!(congestion_level(4.0), 0);
        assert_eq!(congestion_level(5.0), 0);
        assert_eq!(congestion_level(7.0), 1);
        assert_eq!(congestion_level(10.0), 1);
        assert_eq!(congestion_level(12.0), 2);
        assert_eq!(encode_pedestrian_speed(1.2), 0);
        assert_eq!(encode_pedestrian_speed(1.34), 1);
        assert_eq!(encode_pedestrian_speed(1.40), 1);
        assert_eq!(encode_pedestrian_speed(1.43), 1);
        assert_eq!(encode_pedestrian_speed(1.5), 2);
        assert_eq!(encode_preceding(false, false), 0);
        assert_eq!(encode_preceding(false, true), 1);
        assert_eq!(encode_preceding(true, false), 2);
        assert_eq!(encode_preceding(true, true), 3);
    }

    #[test]
    fn distance_from_largest_middle_vehicle() {
        let f = frame(
            0.0,
            vec![
                obj(ObjectClass::Car, [400.0, 340.0, 560.0, 440.0], 0.9),
                obj(ObjectClass::Car, [30.0, 0.0, 130.0, 540.0], 0.9),
            ],
        );
        assert!((relative_distance(&f).unwrap() - 5.0).abs() < 1e-12);
        let empty = frame(0.0, vec![]);
        assert_eq!(relative_distance(&empty), None);
        let two = frame(
            0.0,
            vec![
                obj(ObjectClass::Car, [400.0, 300.0, 520.0, 400.0], 0.9),
                obj(ObjectClass::Truck, [350.0, 240.0, 550.0, 390.0], 0.9),
            ],
        );
        assert!((relative_distance(&two).unwrap() - 150.0 * 0.05).abs() < 1e-12);
    }

    #[test]
    fn relative_speed_formula() {
        assert!((relative_speed(Some(5.0), Some(5.5), 15.0).unwrap() - 7.5).abs() < 1e-12);
        assert_eq!(relative_speed(Some(5.0), Some(5.0), 15.0).unwrap(), 0.0);
        assert_eq!(
            relative_speed(None, Some(5.0), 15.0),
            Err(SpatialError::MissingPrecedingVehicle)
        );
    }

    #[test]
    fn pedestrian_speed_formula() {
        assert!((speed_from_displacement(3.0, 30.0, 15.0) - 1.5).abs() < 1e-12);
        let p = obj(ObjectClass::Pedestrian, [400.0, 300.0, 460.0, 480.0], 0.9);
        let f0 = frame(0.0, vec![p.clone()]);
        let f1 = frame(1.0 / 15.0, vec![p.clone()]);
        assert_eq!(pedestrian_speed(&f0, &f1, &p, &cfg()).unwrap(), 0.0);
        let far = frame(0.0, vec![obj(ObjectClass::Pedestrian, [700.0, 300.0, 760.0, 480.0], 0.9)]);
        assert_eq!(pedestrian_speed(&f0, &far, &p, &cfg()), Err(SpatialError::NoMatch));
    }

    #[test]
    fn empty_window_is_all_zero() {
        let w = WindowSlice {
            window_index: 0,
            t_start: 0.0,
            t_end: 5.0,
            imu: &[],
            gps: &[],
            frames: &[],
            annotations: &[],
        };
        assert_eq!(extract_spatial(&w, &cfg()), SpatialFeatures::default());
    }

    #[test]
    fn red_light_in_side_lane_counts() {
        let light = obj(ObjectClass::TrafficLight, [10.0, 10.0, 120.0, 120.0], 0.9)
            .with_color(LightColor::Red);
        let green = obj(ObjectClass::TrafficLight, [820.0, 10.0, 930.0, 120.0], 0.9)
            .with_color(LightColor::Green);
        let frames = vec![frame(0.0, vec![light, green])];
        let w = WindowSlice {
            window_index: 0,
            t_start: 0.0,
            t_end: 5.0,
            imu: &[],
            gps: &[],
            frames: &frames,
            annotations: &[],
        };
        let s = extract_spatial(&w, &cfg());
        assert_eq!(s.traffic_light, 1);
        assert_eq!(s.pedestrian, 0);
    }
}
