//! CSV interchange between pipeline stages.
//!
//! Three file kinds, all UTF-8 with `\n` line endings and a fixed header:
//!
//! * detections: `pod_id,device_id,timestamp_s,rssi_dbm`
//! * trip features: `f01,...,f15,mode`
//! * device truth: `device_id,mode`
//!
//! Floats are written with the shortest representation that parses back to
//! the identical `f64`, so a write/load round trip is lossless. Timestamps
//! are additionally padded to at least three decimal places.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::types::{DataRow, Dataset, DetectionRecord, DeviceId, Mode};

pub const DETECTIONS_HEADER: [&str; 4] = ["pod_id", "device_id", "timestamp_s", "rssi_dbm"];
pub const TRUTH_HEADER: [&str; 2] = ["device_id", "mode"];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Malformed {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: expected header {expected:?}, found {found:?}")]
    Header {
        path: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{path}, line {line}, column {column}: {message}")]
    Field {
        path: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("{path}, line {line}: duplicate device id {device}")]
    DuplicateDevice {
        path: String,
        line: u64,
        device: DeviceId,
    },
    #[error("{path}: dataset is not rectangular: {message}")]
    Shape { path: String, message: String },
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Shortest exact representation of a float (round-trips to the same bits).
pub fn fmt_float(v: f64) -> String {
    format!("{v}")
}

/// Exact representation of a timestamp, padded to >= 3 decimal places.
///
/// Padding only ever applies when the exact value has fewer than three
/// decimal digits, so the printed form still parses back to the same `f64`.
pub fn fmt_seconds(t: f64) -> String {
    let s = format!("{t}");
    match s.split_once('.') {
        Some((_, frac)) if frac.len() >= 3 => s,
        _ => format!("{t:.3}"),
    }
}

// --- detections ---------------------------------------------------------

pub fn write_detections_csv(path: &Path, detections: &[DetectionRecord]) -> Result<(), CsvError> {
    let wrap = |source| CsvError::Io { path: path_str(path), source };
    let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
    let mut inner = || -> std::io::Result<()> {
        writeln!(out, "{}", DETECTIONS_HEADER.join(","))?;
        for d in detections {
            writeln!(
                out,
                "{},{},{},{}",
                d.pod_id,
                d.device_id,
                fmt_seconds(d.timestamp_s),
                fmt_float(d.rssi_dbm)
            )?;
        }
        out.flush()
    };
    inner().map_err(wrap)
}

pub fn load_detections(path: &Path) -> Result<Vec<DetectionRecord>, CsvError> {
    let mut reader = open_checked(path, &DETECTIONS_HEADER)?;
    let mut detections = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| CsvError::Malformed {
            path: path_str(path),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        detections.push(DetectionRecord {
            pod_id: parse_field(path, &record, 0, "pod_id", line)?,
            device_id: parse_field(path, &record, 1, "device_id", line)?,
            timestamp_s: parse_finite(path, &record, 2, "timestamp_s", line)?,
            rssi_dbm: parse_finite(path, &record, 3, "rssi_dbm", line)?,
        });
    }
    Ok(detections)
}

// --- trip features ------------------------------------------------------

pub fn write_features_csv(path: &Path, dataset: &Dataset) -> Result<(), CsvError> {
    dataset.check_rectangular().map_err(|message| CsvError::Shape {
        path: path_str(path),
        message,
    })?;
    let wrap = |source| CsvError::Io { path: path_str(path), source };
    let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
    let mut inner = || -> std::io::Result<()> {
        writeln!(out, "{},mode", dataset.feature_names.join(","))?;
        for row in &dataset.rows {
            for v in &row.values {
                write!(out, "{},", fmt_float(*v))?;
            }
            writeln!(out, "{}", row.mode)?;
        }
        out.flush()
    };
    inner().map_err(wrap)
}

/// Load a 15-feature trip table written by [`write_features_csv`].
pub fn load_features_csv(path: &Path) -> Result<Dataset, CsvError> {
    let names = Dataset::standard_names(crate::types::FEATURE_COUNT);
    let mut expected: Vec<&str> = names.iter().map(String::as_str).collect();
    expected.push("mode");
    let mut reader = open_checked(path, &expected)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| CsvError::Malformed {
            path: path_str(path),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            values.push(parse_finite(path, &record, i, name, line)?);
        }
        let mode: Mode = parse_field(path, &record, names.len(), "mode", line)?;
        rows.push(DataRow { values, mode });
    }
    Ok(Dataset {
        feature_names: names,
        rows,
        speed_norm: None,
    })
}

// --- device truth -------------------------------------------------------

pub fn write_truth_csv(path: &Path, truth: &BTreeMap<DeviceId, Mode>) -> Result<(), CsvError> {
    let wrap = |source| CsvError::Io { path: path_str(path), source };
    let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
    let mut inner = || -> std::io::Result<()> {
        writeln!(out, "{}", TRUTH_HEADER.join(","))?;
        for (device, mode) in truth {
            writeln!(out, "{device},{mode}")?;
        }
        out.flush()
    };
    inner().map_err(wrap)
}

pub fn load_truth_csv(path: &Path) -> Result<BTreeMap<DeviceId, Mode>, CsvError> {
    let mut reader = open_checked(path, &TRUTH_HEADER)?;
    let mut truth = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|source| CsvError::Malformed {
            path: path_str(path),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let device: DeviceId = parse_field(path, &record, 0, "device_id", line)?;
        let mode: Mode = parse_field(path, &record, 1, "mode", line)?;
        if truth.insert(device, mode).is_some() {
            return Err(CsvError::DuplicateDevice {
                path: path_str(path),
                line,
                device,
            });
        }
    }
    Ok(truth)
}

// --- shared helpers -----------------------------------------------------

fn open_checked(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>, CsvError> {
    let file = File::open(path).map_err(|source| CsvError::Io {
        path: path_str(path),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(|source| CsvError::Malformed {
        path: path_str(path),
        source,
    })?;
    let found: Vec<String> = headers.iter().map(str::to_string).collect();
    if found != expected {
        return Err(CsvError::Header {
            path: path_str(path),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    Ok(reader)
}

fn get_field<'r>(
    path: &Path,
    record: &'r csv::StringRecord,
    index: usize,
    column: &str,
    line: u64,
) -> Result<&'r str, CsvError> {
    record.get(index).ok_or_else(|| CsvError::Field {
        path: path_str(path),
        line,
        column: column.to_string(),
        message: "missing field".to_string(),
    })
}

fn parse_field<T>(
    path: &Path,
    record: &csv::StringRecord,
    index: usize,
    column: &str,
    line: u64,
) -> Result<T, CsvError>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    let raw = get_field(path, record, index, column, line)?;
    raw.parse().map_err(|e: T::Err| CsvError::Field {
        path: path_str(path),
        line,
        column: column.to_string(),
        message: format!("cannot parse {raw:?}: {e}"),
    })
}

fn parse_finite(
    path: &Path,
    record: &csv::StringRecord,
    index: usize,
    column: &str,
    line: u64,
) -> Result<f64, CsvError> {
    let value: f64 = parse_field(path, record, index, column, line)?;
    if !value.is_finite() {
        return Err(CsvError::Field {
            path: path_str(path),
            line,
            column: column.to_string(),
            message: format!("value {value} is not finite"),
        });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn det(pod: u32, dev: u64, t: f64, rssi: f64) -> DetectionRecord {
        DetectionRecord {
            pod_id: pod,
            device_id: DeviceId(dev),
            timestamp_s: t,
            rssi_dbm: rssi,
        }
    }

    #[test]
    fn fmt_seconds_pads_to_three_decimals_and_stays_exact() {
        for (value, expected) in [
            (42.5, "42.500"),
            (100.0, "100.000"),
            (0.125, "0.125"),
            (123.456789, "123.456789"),
        ] {
            let s = fmt_seconds(value);
            assert_eq!(s, expected);
            assert_eq!(s.parse::<f64>().unwrap(), value);
        }
        // exact dyadic with a long decimal expansion survives unchanged
        let tick = 9.5367431640625e-7 * 131.0; // 131 / 2^20
        assert_eq!(fmt_seconds(tick).parse::<f64>().unwrap(), tick);
    }

    #[test]
    fn detections_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("detections.csv");
        let records = vec![
            det(2, 0xdeadbeef, 123.5, -67.0),
            det(0, 0xffff_0000_0000_0001, 124.75, -82.52441406250001),
        ];
        write_detections_csv(&path, &records).unwrap();
        assert_eq!(load_detections(&path).unwrap(), records);
    }

    #[test]
    fn header_only_detections_file_is_empty() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("detections.csv");
        std::fs::write(&path, "pod_id,device_id,timestamp_s,rssi_dbm\n").unwrap();
        assert!(load_detections(&path).unwrap().is_empty());
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("detections.csv");
        std::fs::write(&path, "pod,device,time,rssi\n").unwrap();
        match load_detections(&path) {
            Err(CsvError::Header { found, .. }) => assert_eq!(found[0], "pod"),
            other => panic!("expected header error, got {other:?}"),
        }
    }

    #[test]
    fn bad_field_reports_line_and_column() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("detections.csv");
        std::fs::write(
            &path,
            "pod_id,device_id,timestamp_s,rssi_dbm\n1,0x01,10.000,-70.0\n1,0x01,11.000,loud\n",
        )
        .unwrap();
        match load_detections(&path) {
            Err(CsvError::Field { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "rssi_dbm");
            }
            other => panic!("expected field error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_fields_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("detections.csv");
        std::fs::write(
            &path,
            "pod_id,device_id,timestamp_s,rssi_dbm\n1,0x01,10.000,NaN\n",
        )
        .unwrap();
        assert!(matches!(load_detections(&path), Err(CsvError::Field { .. })));
    }

    #[test]
    fn features_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let mut values = vec![0.0; 15];
        for (i, v) in values.iter_mut().enumerate() {
            *v = (i as f64 + 1.0) / 3.0; // repeating binary fractions
        }
        let ds = Dataset {
            feature_names: Dataset::standard_names(15),
            rows: vec![
                DataRow { values: values.clone(), mode: Mode::Biking },
                DataRow { values: values.iter().map(|v| v * 1e-12).collect(), mode: Mode::Driving },
            ],
            speed_norm: None,
        };
        write_features_csv(&path, &ds).unwrap();
        let loaded = load_features_csv(&path).unwrap();
        assert_eq!(loaded.rows, ds.rows);
        assert_eq!(loaded.feature_names, ds.feature_names);
    }

    #[test]
    fn features_header_width_is_enforced() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("features.csv");
        std::fs::write(&path, "f01,f02,mode\n1.0,2.0,walking\n").unwrap();
        assert!(matches!(load_features_csv(&path), Err(CsvError::Header { .. })));
    }

    #[test]
    fn truth_round_trip_and_duplicate_detection() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let mut truth = BTreeMap::new();
        truth.insert(DeviceId(7), Mode::Walking);
        truth.insert(DeviceId(1), Mode::Driving);
        write_truth_csv(&path, &truth).unwrap();
        assert_eq!(load_truth_csv(&path).unwrap(), truth);

        std::fs::write(
            &path,
            "device_id,mode\n0x01,walking\n0x01,biking\n",
        )
        .unwrap();
        assert!(matches!(
            load_truth_csv(&path),
            Err(CsvError::DuplicateDevice { line: 3, .. })
        ));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let path = Path::new("/nonexistent/detections.csv");
        assert!(matches!(load_detections(path), Err(CsvError::Io { .. })));
    }
}
