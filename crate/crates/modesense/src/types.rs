//! Core domain types shared by every pipeline stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Travel mode of a trip. The three classes are fixed for the whole pipeline;
/// confusion matrices, vote counters and class priors index by [`Mode::index`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Walking,
    Biking,
    Driving,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Walking, Mode::Biking, Mode::Driving];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Mode> {
        Mode::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Walking => "walking",
            Mode::Biking => "biking",
            Mode::Driving => "driving",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "walking" => Ok(Mode::Walking),
            "biking" => Ok(Mode::Biking),
            "driving" => Ok(Mode::Driving),
            other => Err(format!(
                "unknown mode {other:?} (expected walking, biking or driving)"
            )),
        }
    }
}

/// Anonymized device identifier: an opaque 64-bit hash of the probing MAC.
/// Rendered as `0x`-prefixed lowercase hex in every interchange file.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub u64);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:016x}", self.0)
    }
}

impl FromStr for DeviceId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s
            .strip_prefix("0x")
            .or_else(|| s.strip_prefix("0X"))
            .ok_or_else(|| format!("device id {s:?} is missing the 0x prefix"))?;
        u64::from_str_radix(hex, 16)
            .map(DeviceId)
            .map_err(|e| format!("device id {s:?} is not valid hex: {e}"))
    }
}

/// One probe request captured by one pod.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRecord {
    pub pod_id: u32,
    pub device_id: DeviceId,
    /// Seconds from the start of the capture. Strictly increasing per device.
    pub timestamp_s: f64,
    pub rssi_dbm: f64,
}

/// One device's passage from one pod's coverage zone to the next, with the
/// detections observed at each end. This is the unit that features are
/// extracted from.
#[derive(Clone, Debug, PartialEq)]
pub struct TripObservation {
    pub device_id: DeviceId,
    pub mode: Mode,
    pub origin_pod: u32,
    pub dest_pod: u32,
    /// Detections at the origin pod, time-sorted, at least one record.
    pub origin: Vec<DetectionRecord>,
    /// Detections at the destination pod, time-sorted, at least one record.
    pub dest: Vec<DetectionRecord>,
}

/// Number of features extracted per trip.
pub const FEATURE_COUNT: usize = 15;

/// The fixed-width feature vector of one labeled trip.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
    pub mode: Mode,
}

/// One labeled row of a [`Dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct DataRow {
    pub values: Vec<f64>,
    pub mode: Mode,
}

/// A labeled feature table. Row width is uniform but not hard-wired to
/// [`FEATURE_COUNT`], so callers can append engineered or probe columns
/// (e.g. a noise feature when auditing the ranking stage).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    /// Column names, in row order (`f01`..`f15` for extracted features).
    pub feature_names: Vec<String>,
    pub rows: Vec<DataRow>,
    /// Gap-speed normalization constant applied to the relative-speed
    /// feature when this dataset was built, if known. Carried so that any
    /// later extraction against the same table can reuse the scale.
    pub speed_norm: Option<f64>,
}

impl Dataset {
    /// Standard column names `f01..=f{n}`.
    pub fn standard_names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("f{i:02}")).collect()
    }

    pub fn from_feature_vectors(vectors: Vec<FeatureVector>, speed_norm: Option<f64>) -> Dataset {
        Dataset {
            feature_names: Dataset::standard_names(FEATURE_COUNT),
            rows: vectors
                .into_iter()
                .map(|v| DataRow {
                    values: v.values.to_vec(),
                    mode: v.mode,
                })
                .collect(),
            speed_norm,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Rows per class, indexed by [`Mode::index`].
    pub fn class_counts(&self) -> [usize; Mode::COUNT] {
        let mut counts = [0usize; Mode::COUNT];
        for row in &self.rows {
            counts[row.mode.index()] += 1;
        }
        counts
    }

    /// New dataset holding the given rows (by index, in the given order).
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            speed_norm: self.speed_norm,
        }
    }

    /// Every row has `n_features()` values and all of them are finite.
    pub fn check_rectangular(&self) -> Result<(), String> {
        let width = self.n_features();
        for (i, row) in self.rows.iter().enumerate() {
            if row.values.len() != width {
                return Err(format!(
                    "row {i} has {} values, expected {width}",
                    row.values.len()
                ));
            }
            if let Some(j) = row.values.iter().position(|v| !v.is_finite()) {
                return Err(format!("row {i}, column {} is not finite", j + 1));
            }
        }
        Ok(())
    }
}
