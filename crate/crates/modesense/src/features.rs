//! Trip segmentation and feature extraction.
//!
//! A segmented trip is a device's passage between two pods' coverage zones.
//! From each trip we extract 15 features in three groups:
//!
//! * timing: relative travel speed across the uncovered gap (f01),
//!   connection time at origin and destination (f02, f03);
//! * detection counts at each end and their mean (f04..f06);
//! * signal shape: RSSI variance, mean first derivative and mean second
//!   derivative at each end, plus the origin/destination means of each
//!   (f07..f15).
//!
//! All features depend on timestamps only through differences, so shifting
//! a whole capture in time changes nothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::LoopGeometry;
use crate::types::{
    Dataset, DetectionRecord, DeviceId, FeatureVector, Mode, TripObservation,
    FEATURE_COUNT,
};

/// Fewest detections per zone crossing that still support a second
/// finite difference.
pub const MIN_DETECTIONS_PER_POD: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("device {device}: detections are not time-sorted")]
    NotTimeSorted { device: DeviceId },
    #[error("device {device} is missing from the truth map")]
    UnknownDevice { device: DeviceId },
    #[error(
        "device {device}, pod {pod}: only {count} detections, need at least {MIN_DETECTIONS_PER_POD}"
    )]
    TooFewDetections { device: DeviceId, pod: u32, count: usize },
    #[error("device {device}, pod {pod}: repeated timestamp {timestamp_s}")]
    RepeatedTimestamp { device: DeviceId, pod: u32, timestamp_s: f64 },
    #[error("device {device}: non-positive travel time {seconds} s between zones")]
    NonPositiveTravelTime { device: DeviceId, seconds: f64 },
    #[error("no gap distance recorded for pod pair ({a}, {b})")]
    MissingGap { a: u32, b: u32 },
    #[error("speed norm must be positive and finite, got {0}")]
    BadSpeedNorm(f64),
    #[error("all {total} trips were skipped, nothing to build")]
    AllTripsSkipped { total: usize },
    #[error("no trips to build a dataset from")]
    NoTrips,
}

// --- feature schema -----------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Time,
    DetectionCount,
    SignalStrength,
}

/// Static description of one feature column.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FeatureInfo {
    /// 1-based feature id, `f{id:02}` in the CSV header.
    pub id: usize,
    pub name: &'static str,
    pub unit: &'static str,
    pub group: FeatureGroup,
}

pub const FEATURE_SCHEMA: [FeatureInfo; FEATURE_COUNT] = [
    FeatureInfo { id: 1, name: "relative travel speed", unit: "-", group: FeatureGroup::Time },
    FeatureInfo { id: 2, name: "origin connection time", unit: "s", group: FeatureGroup::Time },
    FeatureInfo { id: 3, name: "destination connection time", unit: "s", group: FeatureGroup::Time },
    FeatureInfo { id: 4, name: "origin detection count", unit: "-", group: FeatureGroup::DetectionCount },
    FeatureInfo { id: 5, name: "destination detection count", unit: "-", group: FeatureGroup::DetectionCount },
    FeatureInfo { id: 6, name: "mean detection count", unit: "-", group: FeatureGroup::DetectionCount },
    FeatureInfo { id: 7, name: "origin rssi variance", unit: "dBm^2", group: FeatureGroup::SignalStrength },
    FeatureInfo { id: 8, name: "destination rssi variance", unit: "dBm^2", group: FeatureGroup::SignalStrength },
    FeatureInfo { id: 9, name: "mean rssi variance", unit: "dBm^2", group: FeatureGroup::SignalStrength },
    FeatureInfo { id: 10, name: "origin rssi slope", unit: "dBm/s", group: FeatureGroup::SignalStrength },
    FeatureInfo { id: 11, name: "destination rssi slope", unit: "dBm/s", group: FeatureGroup::SignalStrength },
    FeatureInfo { id: 12, name: "mean rssi slope", unit: "dBm/s", group: FeatureGroup::SignalStrength },
    FeatureInfo { id: 13, name: "origin rssi curvature", unit: "dBm/s^2", group: FeatureGroup::SignalStrength },
    FeatureInfo { id: 14, name: "destination rssi curvature", unit: "dBm/s^2", group: FeatureGroup::SignalStrength },
    FeatureInfo { id: 15, name: "mean rssi curvature", unit: "dBm/s^2", group: FeatureGroup::SignalStrength },
];

// --- gap table ----------------------------------------------------------

/// Uncovered distance (meters with no coverage) between each pod pair.
/// Symmetric and non-negative.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GapTable {
    gaps: BTreeMap<(u32, u32), f64>,
}

impl GapTable {
    pub fn new() -> GapTable {
        GapTable::default()
    }

    /// Gaps for every pod pair of a deployment: shortest arc between the
    /// two centers minus both coverage chords' half-lengths, floored at 0.
    pub fn from_geometry(geometry: &LoopGeometry) -> GapTable {
        let mut table = GapTable::new();
        for a in 0..geometry.n_pods() {
            for b in (a + 1)..geometry.n_pods() {
                let arc = geometry
                    .arc_distance(geometry.pod_positions_m[a], geometry.pod_positions_m[b]);
                let gap = (arc - 2.0 * geometry.coverage_radius_m).max(0.0);
                table.insert(a as u32, b as u32, gap);
            }
        }
        table
    }

    pub fn insert(&mut self, a: u32, b: u32, meters: f64) {
        self.gaps.insert((a.min(b), a.max(b)), meters);
    }

    pub fn get(&self, a: u32, b: u32) -> Option<f64> {
        self.gaps.get(&(a.min(b), a.max(b))).copied()
    }
}

// --- segmentation -------------------------------------------------------

/// Cut a detection stream into pod-to-pod trips.
///
/// Detections are grouped per device (the stream must be time-sorted within
/// each device), collapsed into maximal single-pod visits, and every pair of
/// consecutive visits becomes one trip; a middle visit serves as the
/// destination of one trip and the origin of the next. Output is ordered by
/// device id, then time.
pub fn segment_trips(
    detections: &[DetectionRecord],
    truth: &BTreeMap<DeviceId, Mode>,
) -> Result<Vec<TripObservation>, FeatureError> {
    let mut per_device: BTreeMap<DeviceId, Vec<&DetectionRecord>> = BTreeMap::new();
    for d in detections {
        per_device.entry(d.device_id).or_default().push(d);
    }

    let mut trips = Vec::new();
    for (device, records) in per_device {
        if records.windows(2).any(|w| w[1].timestamp_s < w[0].timestamp_s) {
            return Err(FeatureError::NotTimeSorted { device });
        }
        let mode = *truth
            .get(&device)
            .ok_or(FeatureError::UnknownDevice { device })?;

        let mut visits: Vec<(u32, Vec<DetectionRecord>)> = Vec::new();
        for r in records {
            match visits.last_mut() {
                Some((pod, run)) if *pod == r.pod_id => run.push(r.clone()),
                _ => visits.push((r.pod_id, vec![r.clone()])),
            }
        }
        for pair in visits.windows(2) {
            let (origin_pod, origin) = &pair[0];
            let (dest_pod, dest) = &pair[1];
            trips.push(TripObservation {
                device_id: device,
                mode,
                origin_pod: *origin_pod,
                dest_pod: *dest_pod,
                origin: origin.clone(),
                dest: dest.clone(),
            });
        }
    }
    Ok(trips)
}

// --- extraction ---------------------------------------------------------

/// Validate a trip and return its raw gap speed (gap meters / seconds
/// between the last origin and first destination detection).
fn raw_gap_speed(trip: &TripObservation, gaps: &GapTable) -> Result<f64, FeatureError> {
    for (pod, side) in [(trip.origin_pod, &trip.origin), (trip.dest_pod, &trip.dest)] {
        if side.len() < MIN_DETECTIONS_PER_POD {
            return Err(FeatureError::TooFewDetections {
                device: trip.device_id,
                pod,
                count: side.len(),
            });
        }
        for w in side.windows(2) {
            if w[1].timestamp_s <= w[0].timestamp_s {
                return Err(if w[1].timestamp_s == w[0].timestamp_s {
                    FeatureError::RepeatedTimestamp {
                        device: trip.device_id,
                        pod,
                        timestamp_s: w[1].timestamp_s,
                    }
                } else {
                    FeatureError::NotTimeSorted { device: trip.device_id }
                });
            }
        }
    }
    let travel = trip.dest[0].timestamp_s - trip.origin.last().unwrap().timestamp_s;
    if travel <= 0.0 {
        return Err(FeatureError::NonPositiveTravelTime {
            device: trip.device_id,
            seconds: travel,
        });
    }
    let gap = gaps
        .get(trip.origin_pod, trip.dest_pod)
        .ok_or(FeatureError::MissingGap { a: trip.origin_pod, b: trip.dest_pod })?;
    Ok(gap / travel)
}

fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Mean of the per-interval RSSI slopes `(r[i+1]-r[i]) / (t[i+1]-t[i])`.
fn mean_slope(side: &[DetectionRecord]) -> f64 {
    let n = side.len();
    let sum: f64 = side
        .windows(2)
        .map(|w| (w[1].rssi_dbm - w[0].rssi_dbm) / (w[1].timestamp_s - w[0].timestamp_s))
        .sum();
    sum / (n - 1) as f64
}

/// Mean second finite difference of RSSI: consecutive slopes differenced
/// over the spacing of their midpoints, `(t[i+2]-t[i]) / 2`.
fn mean_curvature(side: &[DetectionRecord]) -> f64 {
    let slopes: Vec<f64> = side
        .windows(2)
        .map(|w| (w[1].rssi_dbm - w[0].rssi_dbm) / (w[1].timestamp_s - w[0].timestamp_s))
        .collect();
    let n = slopes.len();
    let sum: f64 = (0..n - 1)
        .map(|i| (slopes[i + 1] - slopes[i]) / ((side[i + 2].timestamp_s - side[i].timestamp_s) / 2.0))
        .sum();
    sum / (n - 1) as f64
}

/// Extract the 15-feature vector of one trip.
///
/// `speed_norm` is the normalization constant for the relative-speed
/// feature; [`build_dataset`] uses the maximum raw gap speed of the batch so
/// f01 lands in (0, 1].
pub fn extract_features(
    trip: &TripObservation,
    gaps: &GapTable,
    speed_norm: f64,
) -> Result<FeatureVector, FeatureError> {
    if !(speed_norm.is_finite() && speed_norm > 0.0) {
        return Err(FeatureError::BadSpeedNorm(speed_norm));
    }
    let raw_speed = raw_gap_speed(trip, gaps)?;

    let origin = &trip.origin;
    let dest = &trip.dest;
    let mut f = [0.0f64; FEATURE_COUNT];
    f[0] = raw_speed / speed_norm;
    f[1] = origin.last().unwrap().timestamp_s - origin[0].timestamp_s;
    f[2] = dest.last().unwrap().timestamp_s - dest[0].timestamp_s;
    f[3] = origin.len() as f64;
    f[4] = dest.len() as f64;
    f[5] = (f[3] + f[4]) / 2.0;
    f[6] = population_variance(origin.iter().map(|r| r.rssi_dbm));
    f[7] = population_variance(dest.iter().map(|r| r.rssi_dbm));
    f[8] = (f[6] + f[7]) / 2.0;
    f[9] = mean_slope(origin);
    f[10] = mean_slope(dest);
    f[11] = (f[9] + f[10]) / 2.0;
    f[12] = mean_curvature(origin);
    f[13] = mean_curvature(dest);
    f[14] = (f[12] + f[13]) / 2.0;

    debug_assert!(f.iter().all(|v| v.is_finite()));
    Ok(FeatureVector { values: f, mode: trip.mode })
}

/// A trip that could not be featurized, and why.
#[derive(Clone, Debug)]
pub struct SkippedTrip {
    pub trip_index: usize,
    pub device_id: DeviceId,
    pub reason: String,
}

/// Result of [`build_dataset`].
#[derive(Clone, Debug)]
pub struct DatasetBuild {
    pub dataset: Dataset,
    /// Maximum raw gap speed among the kept trips; the f01 denominator.
    pub speed_norm: f64,
    pub skipped: Vec<SkippedTrip>,
}

/// Featurize a batch of trips into a labeled dataset.
///
/// Trips that fail extraction preconditions (too few detections, repeated
/// timestamps, non-positive travel time, unknown pod pair) are skipped and
/// reported, not fatal. The speed normalization constant is the maximum raw
/// gap speed over the kept trips, so their f01 values land in (0, 1] with
/// at least one exact 1.
pub fn build_dataset(trips: &[TripObservation], gaps: &GapTable) -> Result<DatasetBuild, FeatureError> {
    if trips.is_empty() {
        return Err(FeatureError::NoTrips);
    }
    let mut kept: Vec<(usize, f64)> = Vec::new();
    let mut skipped = Vec::new();
    for (i, trip) in trips.iter().enumerate() {
        match raw_gap_speed(trip, gaps) {
            Ok(speed) => kept.push((i, speed)),
            Err(e) => skipped.push(SkippedTrip {
                trip_index: i,
                device_id: trip.device_id,
                reason: e.to_string(),
            }),
        }
    }
    if kept.is_empty() {
        return Err(FeatureError::AllTripsSkipped { total: trips.len() });
    }
    let speed_norm = kept.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);

    let mut vectors = Vec::with_capacity(kept.len());
    for &(i, _) in &kept {
        vectors.push(extract_features(&trips[i], gaps, speed_norm)?);
    }
    Ok(DatasetBuild {
        dataset: Dataset::from_feature_vectors(vectors, Some(speed_norm)),
        speed_norm,
        skipped,
    })
}
