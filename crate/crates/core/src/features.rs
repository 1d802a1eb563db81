//! The per-window feature vector: identifiers, normalization bounds and
//! encoding from detector outputs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::maneuver::ManeuverFeatures;
use crate::spatial::SpatialFeatures;
use crate::trip::TripMeta;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` listed twice")]
    Duplicate(FeatureId),
    #[error("feature `{id}`: min {min} must be below max {max}")]
    BadBounds { id: FeatureId, min: f64, max: f64 },
    #[error("spec is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Maneuver,
    Spatial,
    Confounder,
}

impl Category {
    pub fn label(self) -> &'static str {
        match self {
            Category::Maneuver => "F_M",
            Category::Spatial => "F_S",
            Category::Confounder => "F_C",
        }
    }
}

macro_rules! feature_ids {
    ($($variant:ident => $code:literal, $name:literal, $cat:ident, $expl:literal;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum FeatureId {
            $($variant,)*
        }

        impl FeatureId {
            pub const ALL: &'static [FeatureId] = &[$(FeatureId::$variant,)*];

            /// Short identifier, e.g. `A_Q` or `C`.
            pub fn code(self) -> &'static str {
                match self {
                    $(FeatureId::$variant => $code,)*
                }
            }

            /// Human name, e.g. `abrupt_stop`.
            pub fn name(self) -> &'static str {
                match self {
                    $(FeatureId::$variant => $name,)*
                }
            }

            pub fn category(self) -> Category {
                match self {
                    $(FeatureId::$variant => Category::$cat,)*
                }
            }

            /// Whether the feature can be reported as an explanation. Raw
            /// measurement slots only shape the map.
            pub fn is_explanatory(self) -> bool {
                match self {
                    $(FeatureId::$variant => $expl,)*
                }
            }
        }
    };
}

feature_ids! {
    Weaving => "A_W", "weaving", Maneuver, true;
    Swerving => "A_S", "swerving", Maneuver, true;
    SideSlip => "A_L", "side_slip", Maneuver, true;
    AbruptStop => "A_Q", "abrupt_stop", Maneuver, true;
    SharpTurn => "A_U", "sharp_turn", Maneuver, true;
    Jerk => "A_J", "jerk", Maneuver, true;
    Preceding => "O", "preceding", Spatial, true;
    Braking => "B", "braking", Spatial, true;
    Congestion => "C", "congestion", Spatial, true;
    Pedestrian => "P", "pedestrian", Spatial, true;
    PedestrianSpeed => "Q", "pedestrian_speed", Spatial, true;
    TrafficLight => "L", "traffic_light", Spatial, true;
    Heavy => "H", "heavy_vehicle", Spatial, true;
    RoadType => "G", "road_type", Confounder, true;
    Weather => "W", "weather", Confounder, true;
    RelDistance => "D", "rel_distance", Spatial, false;
    RelSpeed => "S", "rel_speed", Spatial, false;
    MeanCars => "N_CAR", "mean_cars", Spatial, false;
    MeanPedestrians => "N_PED", "mean_pedestrians", Spatial, false;
    MeanHeavy => "N_HEAVY", "mean_heavy", Spatial, false;
    MaxPedestrianSpeed => "V_PED", "max_pedestrian_speed", Spatial, false;
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FeatureId {
    type Err = FeatureError;

    /// Accepts the code (`A_Q`) or the name (`abrupt_stop`), case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        FeatureId::ALL
            .iter()
            .copied()
            .find(|id| id.code().eq_ignore_ascii_case(s) || id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| FeatureError::UnknownFeature(s.to_string()))
    }
}

impl Serialize for FeatureId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for FeatureId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One slot of the vector with its normalization range. Raw values at or
/// below `min` map to 0, at or above `max` to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureBound {
    pub id: FeatureId,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVectorSpec {
    features: Vec<FeatureBound>,
}

impl Default for FeatureVectorSpec {
    /// The 21-slot layout. Maneuver lower bounds sit above the level that
    /// sensor noise alone produces after filtering, so an idle window
    /// encodes to zero.
    fn default() -> Self {
        use FeatureId::*;
        let b = |id, min, max| FeatureBound { id, min, max };
        Self {
            features: vec![
                b(Weaving, 0.25, 1.25),
                b(Swerving, 0.2, 1.0),
                b(SideSlip, 0.2, 1.0),
                b(AbruptStop, 0.0, 1.0),
                b(SharpTurn, 15.0, 75.0),
                b(Jerk, 12.0, 36.0),
                b(Preceding, 0.0, 3.0),
                b(Braking, 0.0, 1.0),
                b(Congestion, 0.0, 2.0),
                b(Pedestrian, 0.0, 1.0),
                b(PedestrianSpeed, 0.0, 2.0),
                b(TrafficLight, 0.0, 1.0),
                b(Heavy, 0.0, 1.0),
                b(RoadType, 0.0, 3.0),
                b(Weather, 0.0, 5.0),
                b(RelDistance, 0.0, 50.0),
                b(RelSpeed, -5.0, 5.0),
                b(MeanCars, 0.0, 15.0),
                b(MeanPedestrians, 0.0, 5.0),
                b(MeanHeavy, 0.0, 3.0),
                b(MaxPedestrianSpeed, 0.0, 3.0),
            ],
        }
    }
}

impl FeatureVectorSpec {
    pub fn new(features: Vec<FeatureBound>) -> Result<Self, FeatureError> {
        if features.is_empty() {
            return Err(FeatureError::Empty);
        }
        for (i, f) in features.iter().enumerate() {
            if !(f.min < f.max) || !f.min.is_finite() || !f.max.is_finite() {
                return Err(FeatureError::BadBounds {
                    id: f.id,
                    min: f.min,
                    max: f.max,
                });
            }
            if features[..i].iter().any(|g| g.id == f.id) {
                return Err(FeatureError::Duplicate(f.id));
            }
        }
        Ok(Self { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn bounds(&self) -> &[FeatureBound] {
        &self.features
    }

    pub fn ids(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.features.iter().map(|f| f.id)
    }

    pub fn index_of(&self, id: FeatureId) -> Option<usize> {
        self.features.iter().position(|f| f.id == id)
    }

    /// Stable digest of ids and bounds; stored with codebooks.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.features {
            h.update(format!("{}:{:?}:{:?};", f.id.code(), f.min, f.max).as_bytes());
        }
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn normalize(&self, slot: usize, raw: f64) -> f64 {
        let b = &self.features[slot];
        ((raw - b.min) / (b.max - b.min)).clamp(0.0, 1.0)
    }

    /// Encode one window. Absent gap readings count as far away and absent
    /// speeds as zero.
    pub fn encode(
        &self,
        window_index: usize,
        m: &ManeuverFeatures,
        s: &SpatialFeatures,
        meta: &TripMeta,
    ) -> FeatureWindow {
        let raw: Vec<f64> = self
            .features
            .iter()
            .map(|b| raw_value(b, m, s, meta))
            .collect();
        let values = raw
            .iter()
            .enumerate()
            .map(|(i, &r)| self.normalize(i, r))
            .collect();
        FeatureWindow {
            window_index,
            raw,
            values,
        }
    }

    /// Window built straight from normalized values (raw values are
    /// reconstructed from the bounds).
    pub fn from_normalized(&self, window_index: usize, values: Vec<f64>) -> FeatureWindow {
        let raw = values
            .iter()
            .zip(&self.features)
            .map(|(v, b)| b.min + v * (b.max - b.min))
            .collect();
        FeatureWindow {
            window_index,
            raw,
            values,
        }
    }
}

fn raw_value(b: &FeatureBound, m: &ManeuverFeatures, s: &SpatialFeatures, meta: &TripMeta) -> f64 {
    use FeatureId::*;
    match b.id {
        Weaving => m.weaving,
        Swerving => m.swerving,
        SideSlip => m.side_slip,
        AbruptStop => m.abrupt_stop as f64,
        SharpTurn => m.sharp_turn,
        Jerk => m.jerk,
        Preceding => s.preceding as f64,
        Braking => s.braking as f64,
        Congestion => s.congestion as f64,
        Pedestrian => s.pedestrian as f64,
        PedestrianSpeed => s.pedestrian_speed as f64,
        TrafficLight => s.traffic_light as f64,
        Heavy => s.heavy as f64,
        RoadType => meta.road_type.code() as f64,
        Weather => meta.weather.code() as f64,
        RelDistance => s.rel_distance.unwrap_or(b.max),
        RelSpeed => s.rel_speed.unwrap_or(0.0),
        MeanCars => s.mean_cars,
        MeanPedestrians => s.mean_pedestrians,
        MeanHeavy => s.mean_heavy,
        MaxPedestrianSpeed => s.max_pedestrian_speed.unwrap_or(0.0),
    }
}

/// Human-readable form of a raw feature value.
pub fn decode_value(id: FeatureId, raw: f64) -> String {
    use FeatureId::*;
    let level = |names: &[&str]| {
        let i = (raw.round().max(0.0) as usize).min(names.len() - 1);
        names[i].to_string()
    };
    match id {
        RoadType => level(&crate::trip::RoadType::NAMES),
        Weather => level(&crate::trip::Weather::NAMES),
        Congestion => level(&["none", "moderate", "heavy"]),
        PedestrianSpeed => level(&["slow", "moderate", "fast"]),
        Preceding => level(&["far and steady", "close", "fast approach", "close and fast approach"]),
        AbruptStop | Braking | Pedestrian | Heavy => level(&["absent", "present"]),
        TrafficLight => level(&["not red", "red"]),
        Weaving | Swerving | SideSlip => format!("{raw:.2} m/s²"),
        SharpTurn => format!("{raw:.1}°"),
        Jerk => format!("{raw:.1} m/s³"),
        RelDistance => format!("{raw:.1} m"),
        RelSpeed | MaxPedestrianSpeed => format!("{raw:.2} m/s"),
        MeanCars | MeanPedestrians | MeanHeavy => format!("{raw:.2}"),
    }
}

/// One window's feature vector: raw measurements and their normalized
/// counterparts in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    pub window_index: usize,
    pub raw: Vec<f64>,
    pub values: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trip::Weather;

    #[test]
    fn default_layout() {
        let spec = FeatureVectorSpec::default();
        assert_eq!(spec.len(), 21);
        assert_eq!(spec.ids().filter(|id| id.is_explanatory()).count(), 15);
        assert!(FeatureVectorSpec::new(spec.bounds().to_vec()).is_ok());
        let mut codes: Vec<&str> = FeatureId::ALL.iter().map(|id| id.code()).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), FeatureId::ALL.len());
    }

    #[test]
    fn ids_parse_from_code_or_name() {
        assert_eq!("A_Q".parse::<FeatureId>().unwrap(), FeatureId::AbruptStop);
        assert_eq!("congestion".parse::<FeatureId>().unwrap(), FeatureId::Congestion);
        assert_eq!("l".parse::<FeatureId>().unwrap(), FeatureId::TrafficLight);
        assert_eq!(
            "X_T".parse::<FeatureId>(),
            Err(FeatureError::UnknownFeature("X_T".into()))
        );
    }

    #[test]
    fn spec_rejects_bad_bounds_and_duplicates() {
        let b = |id, min, max| FeatureBound { id, min, max };
        assert!(matches!(
            FeatureVectorSpec::new(vec![b(FeatureId::Jerk, 1.0, 1.0)]),
            Err(FeatureError::BadBounds { .. })
        ));
        assert_eq!(
            FeatureVectorSpec::new(vec![b(FeatureId::Jerk, 0.0, 1.0), b(FeatureId::Jerk, 0.0, 2.0)]),
            Err(FeatureError::Duplicate(FeatureId::Jerk))
        );
    }

    #[test]
    fn hash_tracks_bounds() {
        let a = FeatureVectorSpec::default();
        assert_eq!(a.hash(), FeatureVectorSpec::default().hash());
        let mut bounds = a.bounds().to_vec();
        bounds[0].max = 2.0;
        assert_ne!(a.hash(), FeatureVectorSpec::new(bounds).unwrap().hash());
    }

    #[test]
    fn idle_window_encodes_to_zero_on_explanatory_slots() {
        let spec = FeatureVectorSpec::default();
        let meta = TripMeta {
            road_type: crate::trip::RoadType::Parking,
            ..TripMeta::default()
        };
        let w = spec.encode(3, &ManeuverFeatures::default(), &SpatialFeatures::default(), &meta);
        assert_eq!(w.window_index, 3);
        for (id, v) in spec.ids().zip(&w.values) {
            if id.is_explanatory() {
                assert_eq!(*v, 0.0, "{id}");
            }
        }
        assert_eq!(w.values[spec.index_of(FeatureId::RelDistance).unwrap()], 1.0);
        assert_eq!(w.values[spec.index_of(FeatureId::RelSpeed).unwrap()], 0.5);
    }

    #[test]
    fn encoding_normalizes_and_clamps() {
        let spec = FeatureVectorSpec::default();
        let m = ManeuverFeatures {
            jerk: 100.0,
            abrupt_stop: 1,
            ..Default::default()
        };
        let s = SpatialFeatures {
            congestion: 1,
            ..Default::default()
        };
        let meta = TripMeta {
            weather: Weather::Rainy,
            ..TripMeta::default()
        };
        let w = spec.encode(0, &m, &s, &meta);
        let at = |id| w.values[spec.index_of(id).unwrap()];
        assert_eq!(at(FeatureId::Jerk), 1.0);
        assert_eq!(at(FeatureId::AbruptStop), 1.0);
        assert_eq!(at(FeatureId::Congestion), 0.5);
        assert!((at(FeatureId::Weather) - 0.6).abs() < 1e-12);
        assert!(w.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn decoding() {
        assert_eq!(decode_value(FeatureId::Weather, 3.0), "rainy");
        assert_eq!(decode_value(FeatureId::RoadType, 3.0), "highway");
        assert_eq!(decode_value(FeatureId::Congestion, 2.0), "heavy");
        assert_eq!(decode_value(FeatureId::TrafficLight, 1.0), "red");
        assert_eq!(decode_value(FeatureId::Jerk, 30.04), "30.0 m/s³");
    }
}
