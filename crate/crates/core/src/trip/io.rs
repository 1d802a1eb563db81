//! Line-delimited trip files.
//!
//! The first line is a header object; every following line is one record
//! tagged by `type` (`imu`, `gps`, `det` or `score`). Detection records carry
//! one frame each. Blank lines are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Annotation, BBox, CameraInfo, DetectedObject, DetectionFrame, GpsFix, ImuSample, LightColor,
    ObjectAttrs, ObjectClass, RoadType, TripError, TripMeta, TripRecord, Weather,
};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    trip_id: String,
    road_type: i64,
    weather: i64,
    mpp: f64,
    fps: f64,
    #[serde(default = "default_width")]
    frame_width: f64,
    #[serde(default = "default_height")]
    frame_height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duration: Option<f64>,
}

fn default_width() -> f64 {
    CameraInfo::default().frame_width
}

fn default_height() -> f64 {
    CameraInfo::default().frame_height
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectLine {
    class: ObjectClass,
    bbox: [f64; 4],
    conf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    color: Option<LightColor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    braking: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Imu {
        t: f64,
        ax: f64,
        ay: f64,
        az: f64,
    },
    Gps {
        t: f64,
        lat: f64,
        lon: f64,
    },
    Det {
        t: f64,
        #[serde(default)]
        objects: Vec<ObjectLine>,
    },
    Score {
        t: f64,
        annotator: String,
        score: i64,
    },
}

pub fn load_trip(path: impl AsRef<Path>) -> Result<TripRecord, TripError> {
    let file = File::open(path)?;
    parse_trip(BufReader::new(file))
}

/// Parse and validate a trip from any reader.
pub fn parse_trip(reader: impl Read) -> Result<TripRecord, TripError> {
    let reader = BufReader::new(reader);
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));

    let (hline, header) = match lines.next() {
        Some((n, l)) => (n, l?),
        None => {
            return Err(TripError::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let header: Header = serde_json::from_str(&header).map_err(|e| TripError::Parse {
        line: hline,
        message: format!("header: {e}"),
    })?;

    let road_type = u8::try_from(header.road_type)
        .ok()
        .and_then(RoadType::from_code)
        .ok_or_else(|| TripError::invalid("road_type", format!("{} outside 0..3", header.road_type)))?;
    let weather = u8::try_from(header.weather)
        .ok()
        .and_then(Weather::from_code)
        .ok_or_else(|| TripError::invalid("weather", format!("{} outside 0..5", header.weather)))?;
    let camera = CameraInfo {
        frame_width: header.frame_width,
        frame_height: header.frame_height,
        fps: header.fps,
        meters_per_pixel: header.mpp,
    };
    let meta = TripMeta {
        road_type,
        weather,
        camera,
        duration: header.duration,
    };
    let mut trip = TripRecord::new(header.trip_id, meta);

    for (n, line) in lines {
        let line = line?;
        let rec: Line = serde_json::from_str(&line).map_err(|e| TripError::Parse {
            line: n,
            message: e.to_string(),
        })?;
        match rec {
            Line::Imu { t, ax, ay, az } => trip.imu.push(ImuSample { t, ax, ay, az }),
            Line::Gps { t, lat, lon } => trip.gps.push(GpsFix { t, lat, lon }),
            Line::Det { t, objects } => trip.frames.push(DetectionFrame {
                t,
                frame_width: camera.frame_width,
                frame_height: camera.frame_height,
                fps: camera.fps,
                meters_per_pixel: camera.meters_per_pixel,
                objects: objects
                    .into_iter()
                    .map(|o| DetectedObject {
                        class: o.class,
                        bbox: BBox::new(o.bbox[0], o.bbox[1], o.bbox[2], o.bbox[3]),
                        confidence: o.conf,
                        attrs: ObjectAttrs {
                            color: o.color,
                            braking: o.braking,
                        },
                    })
                    .collect(),
            }),
            Line::Score {
                t,
                annotator,
                score,
            } => {
                let score = u8::try_from(score)
                    .ok()
                    .filter(|s| (1..=5).contains(s))
                    .ok_or_else(|| TripError::invalid("score", format!("{score} outside 1..5")))?;
                trip.annotations.push(Annotation {
                    t,
                    annotator,
                    score,
                });
            }
        }
    }

    // Annotators interleave in files; windows need them time-ordered.
    trip.annotations.sort_by(|a, b| a.t.total_cmp(&b.t));
    trip.validate()?;
    Ok(trip)
}

pub fn save_trip(trip: &TripRecord, path: impl AsRef<Path>) -> Result<(), TripError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trip(trip, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Serialize a trip. Streams are written in the order imu, gps, det, score.
pub fn write_trip(trip: &TripRecord, mut w: impl Write) -> Result<(), TripError> {
    let cam = trip.meta.camera;
    let header = Header {
        trip_id: trip.trip_id.clone(),
        road_type: trip.meta.road_type.code() as i64,
        weather: trip.meta.weather.code() as i64,
        mpp: cam.meters_per_pixel,
        fps: cam.fps,
        frame_width: cam.frame_width,
        frame_height: cam.frame_height,
        duration: trip.meta.duration,
    };
    write_json(&mut w, &header)?;
    for s in &trip.imu {
        write_json(
            &mut w,
            &Line::Imu {
                t: s.t,
                ax: s.ax,
                ay: s.ay,
                az: s.az,
            },
        )?;
    }
    for g in &trip.gps {
        write_json(
            &mut w,
            &Line::Gps {
                t: g.t,
                lat: g.lat,
                lon: g.lon,
            },
        )?;
    }
    for f in &trip.frames {
        let objects = f
            .objects
            .iter()
            .map(|o| ObjectLine {
                class: o.class,
                bbox: [o.bbox.x_min, o.bbox.y_min, o.bbox.x_max, o.bbox.y_max],
                conf: o.confidence,
                color: o.attrs.color,
                braking: o.attrs.braking,
            })
            .collect();
        write_json(&mut w, &Line::Det { t: f.t, objects })?;
    }
    for a in &trip.annotations {
        write_json(
            &mut w,
            &Line::Score {
                t: a.t,
                annotator: a.annotator.clone(),
                score: a.score as i64,
            },
        )?;
    }
    Ok(())
}

fn write_json<T: Serialize>(w: &mut impl Write, value: &T) -> Result<(), TripError> {
    serde_json::to_writer(&mut *w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#"{"trip_id":"t1","road_type":2,"weather":0,"mpp":0.05,"fps":15}"#;

    #[test]
    fn minimal_file_has_empty_frames() {
        let text = format!(
            "{HEADER}\n{}\n{}\n",
            r#"{"type":"imu","t":0.0,"ax":0.1,"ay":0.0,"az":9.8}"#,
            r#"{"type":"gps","t":0.0,"lat":22.5,"lon":88.3}"#
        );
        let trip = parse_trip(text.as_bytes()).unwrap();
        assert_eq!(trip.imu.len(), 1);
        assert_eq!(trip.gps.len(), 1);
        assert!(trip.frames.is_empty());
        assert_eq!(trip.meta.road_type, RoadType::CityStreet);
    }

    #[test]
    fn latitude_out_of_range_names_field() {
        let text = format!("{HEADER}\n{}\n", r#"{"type":"gps","t":0.0,"lat":95,"lon":0}"#);
        let err = parse_trip(text.as_bytes()).unwrap_err();
        assert_eq!(err.field(), Some("lat"));
    }

    #[test]
    fn header_code_out_of_range() {
        let text = r#"{"trip_id":"x","road_type":4,"weather":0,"mpp":0.05,"fps":15}"#;
        assert_eq!(parse_trip(text.as_bytes()).unwrap_err().field(), Some("road_type"));
        let text = r#"{"trip_id":"x","road_type":1,"weather":9,"mpp":0.05,"fps":15}"#;
        assert_eq!(parse_trip(text.as_bytes()).unwrap_err().field(), Some("weather"));
    }

    #[test]
    fn malformed_record_is_parse_error_with_line() {
        let text = format!("{HEADER}\n{{\"type\":\"imu\",\"t\":0.0}}\n");
        match parse_trip(text.as_bytes()).unwrap_err() {
            TripError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(
            parse_trip("".as_bytes()).unwrap_err(),
            TripError::Parse { line: 1, .. }
        ));
        assert!(matches!(
            parse_trip("not json".as_bytes()).unwrap_err(),
            TripError::Parse { .. }
        ));
    }

    #[test]
    fn detection_attributes_parse() {
        let text = format!(
            "{HEADER}\n{}\n",
            r#"{"type":"det","t":0.5,"objects":[{"class":"traffic_light","bbox":[10,10,120,120],"conf":0.9,"color":"red"},{"class":"car","bbox":[300,200,500,400],"conf":0.8,"braking":true}]}"#
        );
        let trip = parse_trip(text.as_bytes()).unwrap();
        let f = &trip.frames[0];
        assert_eq!(f.frame_width, 960.0);
        assert_eq!(f.objects[0].attrs.color, Some(LightColor::Red));
        assert!(f.objects[1].is_braking());
    }
}
