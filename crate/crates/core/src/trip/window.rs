use super::{Annotation, DetectionFrame, GpsFix, ImuSample, TripError, TripRecord};

/// Borrowed view of one fixed-length window `[t_start, t_end)` of a trip.
#[derive(Debug, Clone, Copy)]
pub struct WindowSlice<'a> {
    pub window_index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub imu: &'a [ImuSample],
    pub gps: &'a [GpsFix],
    pub frames: &'a [DetectionFrame],
    pub annotations: &'a [Annotation],
}

impl WindowSlice<'_> {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// Number of whole windows of length `delta` in `span`. Trailing partial
/// windows are dropped.
pub fn window_count(span: f64, delta: f64) -> usize {
    // Tolerate float noise such as 39.99999999 / 5.
    ((span / delta) + 1e-9).floor().max(0.0) as usize
}

/// Split a trip into contiguous, non-overlapping windows of length `delta`.
pub fn window_trip(trip: &TripRecord, delta: f64) -> Result<Vec<WindowSlice<'_>>, TripError> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(TripError::BadDelta(delta));
    }
    let span = trip.span();
    let n = window_count(span, delta);
    if n == 0 {
        return Err(TripError::EmptyTrip { span, delta });
    }
    Ok((0..n)
        .map(|u| {
            let t_start = u as f64 * delta;
            let t_end = (u + 1) as f64 * delta;
            WindowSlice {
                window_index: u,
                t_start,
                t_end,
                imu: slice_by_time(&trip.imu, t_start, t_end, |s| s.t),
                gps: slice_by_time(&trip.gps, t_start, t_end, |g| g.t),
                frames: slice_by_time(&trip.frames, t_start, t_end, |f| f.t),
                annotations: slice_by_time(&trip.annotations, t_start, t_end, |a| a.t),
            }
        })
        .collect())
}

fn slice_by_time<T>(items: &[T], t0: f64, t1: f64, time: impl Fn(&T) -> f64) -> &[T] {
    let lo = items.partition_point(|x| time(x) < t0);
    let hi = items.partition_point(|x| time(x) < t1);
    &items[lo..hi.max(lo)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trip::TripMeta;

    fn trip_with_imu(n: usize, rate: f64) -> TripRecord {
        let mut trip = TripRecord::new("w", TripMeta::default());
        trip.imu = (0..n)
            .map(|i| ImuSample {
                t: i as f64 / rate,
                ax: i as f64,
                ay: 0.0,
                az: 0.0,
            })
            .collect();
        trip
    }

    #[test]
    fn forty_seconds_gives_eight_windows() {
        let trip = trip_with_imu(1200, 30.0);
        let w = window_trip(&trip, 5.0).unwrap();
        assert_eq!(w.len(), 8);
        assert!(w.iter().all(|s| s.imu.len() == 150));
    }

    #[test]
    fn trailing_partial_window_dropped() {
        let trip = trip_with_imu(360, 30.0);
        assert_eq!(window_trip(&trip, 5.0).unwrap().len(), 2);
    }

    #[test]
    fn boundary_sample_belongs_to_next_window() {
        let mut trip = TripRecord::new("b", TripMeta::default());
        trip.meta.duration = Some(10.0);
        trip.imu = [0.0, 4.999, 5.0, 7.0]
            .iter()
            .map(|&t| ImuSample { t, ax: 0.0, ay: 0.0, az: 0.0 })
            .collect();
        let w = window_trip(&trip, 5.0).unwrap();
        assert_eq!(w[0].imu.len(), 2);
        assert_eq!(w[1].imu[0].t, 5.0);
    }

    #[test]
    fn short_trip_is_empty() {
        let trip = trip_with_imu(60, 30.0);
        assert!(matches!(
            window_trip(&trip, 5.0),
            Err(TripError::EmptyTrip { .. })
        ));
        assert!(matches!(window_trip(&trip, 0.0), Err(TripError::BadDelta(_))));
    }
}
