//! Street-loop detection simulator.
//!
//! A closed loop of known perimeter carries a small number of WiFi capture
//! pods at fixed positions. Each pod hears a device's probe requests while
//! the device is within a coverage radius of the pod (distances are measured
//! along the loop, so each zone is a chord of the loop). A simulated trip
//! moves one device at a mode-dependent speed from the edge of one pod's
//! zone, past both pods, to the far edge of the next pod's zone, emitting
//! probes at random intervals; every probe emitted inside a coverage zone
//! becomes a [`DetectionRecord`] with a log-distance path-loss RSSI.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seed::RngSeed;
use crate::types::{DetectionRecord, DeviceId, Mode};

/// Detection timestamps are quantized to this binary tick (about 1 us).
/// Dyadic timestamps make time arithmetic exact: adding a constant offset
/// on the same grid never perturbs the differences the features depend on.
pub const TIME_TICK_S: f64 = 1.0 / (1u64 << 20) as f64;

/// Snap a time to the binary tick grid. Exact for |t| below ~2^33 s.
pub fn quantize_to_tick(t: f64) -> f64 {
    (t / TIME_TICK_S).round() * TIME_TICK_S
}

/// Distances below the 1 m reference are clamped before the path-loss
/// formula, which is only calibrated from the reference outward.
const REFERENCE_DISTANCE_M: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("start pod {start} out of range: geometry has {pods} pods")]
    StartPod { start: usize, pods: usize },
}

/// The sensor deployment: pod positions along a closed loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopGeometry {
    pub perimeter_m: f64,
    /// Arc positions of the pods, strictly increasing, in `[0, perimeter)`.
    pub pod_positions_m: Vec<f64>,
    pub coverage_radius_m: f64,
}

impl Default for LoopGeometry {
    fn default() -> Self {
        LoopGeometry {
            perimeter_m: 857.0,
            pod_positions_m: vec![0.0, 214.25, 428.5, 642.75],
            coverage_radius_m: 50.0,
        }
    }
}

impl LoopGeometry {
    pub fn n_pods(&self) -> usize {
        self.pod_positions_m.len()
    }

    /// Shortest along-loop distance between two arc positions.
    pub fn arc_distance(&self, a: f64, b: f64) -> f64 {
        let diff = (a - b).rem_euclid(self.perimeter_m);
        diff.min(self.perimeter_m - diff)
    }

    /// Forward (travel-direction) arc length from a pod to the next one.
    pub fn forward_leg_m(&self, start_pod: usize) -> f64 {
        let next = (start_pod + 1) % self.n_pods();
        (self.pod_positions_m[next] - self.pod_positions_m[start_pod])
            .rem_euclid(self.perimeter_m)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::Config(format!("geometry: {msg}")));
        if !(self.perimeter_m.is_finite() && self.perimeter_m > 0.0) {
            return fail(format!("perimeter must be positive, got {}", self.perimeter_m));
        }
        if !(self.coverage_radius_m.is_finite() && self.coverage_radius_m >= 0.0) {
            return fail(format!(
                "coverage radius must be non-negative, got {}",
                self.coverage_radius_m
            ));
        }
        if self.n_pods() < 2 {
            return fail(format!("need at least 2 pods, got {}", self.n_pods()));
        }
        for (i, &p) in self.pod_positions_m.iter().enumerate() {
            if !(p.is_finite() && (0.0..self.perimeter_m).contains(&p)) {
                return fail(format!("pod {i} position {p} outside [0, perimeter)"));
            }
            if i > 0 && p <= self.pod_positions_m[i - 1] {
                return fail(format!("pod positions must be strictly increasing (pod {i})"));
            }
        }
        // Coverage zones must be pairwise disjoint: every forward gap between
        // consecutive pod centers (including the wrap-around) must exceed two
        // radii, which also guarantees an uncovered stretch inside each leg.
        for i in 0..self.n_pods() {
            let gap = self.forward_leg_m(i);
            if gap <= 2.0 * self.coverage_radius_m {
                return fail(format!(
                    "coverage zones of pods {i} and {} overlap: centers {gap} m apart \
                     with radius {} m",
                    (i + 1) % self.n_pods(),
                    self.coverage_radius_m
                ));
            }
        }
        Ok(())
    }
}

/// How one travel mode moves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeKinematics {
    pub mean_speed_mps: f64,
    pub speed_sd_mps: f64,
    /// Probability of one stationary stop in the uncovered stretch of a leg.
    pub stop_probability: f64,
    /// Uniform bounds for the stop duration, seconds.
    pub stop_duration_range_s: [f64; 2],
}

impl Default for ModeKinematics {
    fn default() -> Self {
        ModeKinematics {
            mean_speed_mps: 1.4,
            speed_sd_mps: 0.2,
            stop_probability: 0.0,
            stop_duration_range_s: [5.0, 30.0],
        }
    }
}

impl ModeKinematics {
    fn validate(&self, label: &str) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::Config(format!("{label} kinematics: {msg}")));
        if !(self.mean_speed_mps.is_finite() && self.mean_speed_mps > 0.0) {
            return fail(format!("mean speed must be positive, got {}", self.mean_speed_mps));
        }
        if !(self.speed_sd_mps.is_finite() && self.speed_sd_mps >= 0.0) {
            return fail(format!("speed sd must be non-negative, got {}", self.speed_sd_mps));
        }
        if !(0.0..=1.0).contains(&self.stop_probability) {
            return fail(format!("stop probability {} outside [0, 1]", self.stop_probability));
        }
        let [lo, hi] = self.stop_duration_range_s;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return fail(format!("stop duration range [{lo}, {hi}] is not ordered"));
        }
        Ok(())
    }
}

/// Log-distance path-loss radio with Gaussian shadowing, plus the probe
/// emission cadence of the simulated devices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioModel {
    /// Received power at the 1 m reference distance, dBm.
    pub tx_power_dbm: f64,
    pub path_loss_exponent: f64,
    /// Standard deviation of the lognormal shadowing term, dB.
    pub shadowing_sd_db: f64,
    /// Uniform bounds for the gap between consecutive probe emissions, s.
    pub probe_interval_range_s: [f64; 2],
}

impl Default for RadioModel {
    fn default() -> Self {
        RadioModel {
            tx_power_dbm: -40.0,
            path_loss_exponent: 2.5,
            shadowing_sd_db: 4.0,
            probe_interval_range_s: [0.5, 2.0],
        }
    }
}

impl RadioModel {
    fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::Config(format!("radio: {msg}")));
        if !self.tx_power_dbm.is_finite() {
            return fail("reference power must be finite".to_string());
        }
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent > 0.0) {
            return fail(format!(
                "path loss exponent must be positive, got {}",
                self.path_loss_exponent
            ));
        }
        if !(self.shadowing_sd_db.is_finite() && self.shadowing_sd_db >= 0.0) {
            return fail(format!("shadowing sd must be non-negative, got {}", self.shadowing_sd_db));
        }
        let [lo, hi] = self.probe_interval_range_s;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return fail(format!("probe interval range [{lo}, {hi}] is not positive-ordered"));
        }
        Ok(())
    }
}

/// Full experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub geometry: LoopGeometry,
    pub walking: ModeKinematics,
    pub biking: ModeKinematics,
    pub driving: ModeKinematics,
    pub radio: RadioModel,
    /// Trips to generate per mode, `[walking, biking, driving]`.
    pub trips_per_mode: [usize; 3],
    /// Trip start times are drawn uniformly from `[0, start_window_s)`.
    pub start_window_s: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            geometry: LoopGeometry::default(),
            walking: ModeKinematics {
                mean_speed_mps: 1.4,
                speed_sd_mps: 0.2,
                stop_probability: 0.0,
                stop_duration_range_s: [5.0, 30.0],
            },
            biking: ModeKinematics {
                mean_speed_mps: 4.0,
                speed_sd_mps: 0.8,
                stop_probability: 0.0,
                stop_duration_range_s: [5.0, 30.0],
            },
            driving: ModeKinematics {
                mean_speed_mps: 7.0,
                speed_sd_mps: 2.0,
                stop_probability: 0.3,
                stop_duration_range_s: [5.0, 30.0],
            },
            radio: RadioModel::default(),
            trips_per_mode: [142, 108, 150],
            start_window_s: 10_800.0,
        }
    }
}

impl SimConfig {
    pub fn kinematics(&self, mode: Mode) -> &ModeKinematics {
        match mode {
            Mode::Walking => &self.walking,
            Mode::Biking => &self.biking,
            Mode::Driving => &self.driving,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.geometry.validate()?;
        self.walking.validate("walking")?;
        self.biking.validate("biking")?;
        self.driving.validate("driving")?;
        self.radio.validate()?;
        if !(self.start_window_s.is_finite() && self.start_window_s >= 0.0) {
            return Err(SimError::Config(format!(
                "start window must be non-negative, got {}",
                self.start_window_s
            )));
        }
        Ok(())
    }
}

/// Received signal strength at `distance_m` from a pod.
///
/// `noise` is a standard-normal draw; it is scaled by the model's shadowing
/// standard deviation. Distance must be positive (the caller clamps to the
/// 1 m reference for anything closer).
pub fn rssi_at(distance_m: f64, radio: &RadioModel, noise: f64) -> f64 {
    assert!(
        distance_m > 0.0,
        "rssi_at needs a positive distance, got {distance_m}"
    );
    radio.tx_power_dbm - 10.0 * radio.path_loss_exponent * distance_m.log10()
        + radio.shadowing_sd_db * noise
}

/// Simulate one device's leg from `start_pod` to the next pod along the loop.
///
/// The device starts at the near edge of the origin pod's coverage zone,
/// crosses both zones completely, and finishes at the far edge of the
/// destination zone, so both pods observe a full chord crossing. Timestamps
/// start at 0 and are strictly increasing on the [`TIME_TICK_S`] grid.
pub fn simulate_trip(
    mode: Mode,
    start_pod: usize,
    cfg: &SimConfig,
    seed: RngSeed,
) -> Result<Vec<DetectionRecord>, SimError> {
    cfg.validate()?;
    let geometry = &cfg.geometry;
    if start_pod >= geometry.n_pods() {
        return Err(SimError::StartPod {
            start: start_pod,
            pods: geometry.n_pods(),
        });
    }

    let kin = cfg.kinematics(mode);
    let radius = geometry.coverage_radius_m;
    let dest_pod = (start_pod + 1) % geometry.n_pods();
    let leg = geometry.forward_leg_m(start_pod);
    let total = leg + 2.0 * radius;
    let entry = geometry.pod_positions_m[start_pod] - radius;

    let mut rng = seed.rng();
    let device_id = DeviceId(rng.random());

    let speed_dist = Normal::new(kin.mean_speed_mps, kin.speed_sd_mps)
        .expect("speed sd validated non-negative");
    // Truncate the low tail so a trip can neither stall nor move backwards.
    let speed = speed_dist.sample(&mut rng).max(0.1 * kin.mean_speed_mps);

    // An optional stationary stop somewhere in the uncovered stretch.
    let stop = if rng.random::<f64>() < kin.stop_probability {
        let at = rng.random_range(2.0 * radius..leg);
        let [lo, hi] = kin.stop_duration_range_s;
        let duration = rng.random_range(lo..=hi);
        Some((at, duration))
    } else {
        None
    };
    let stop_duration = stop.map_or(0.0, |(_, d)| d);
    let trip_duration = total / speed + stop_duration;

    // Piecewise-linear arc position (relative to the entry point) at time t.
    let position_at = |t: f64| -> f64 {
        match stop {
            Some((at, duration)) => {
                let reach = at / speed;
                if t <= reach {
                    speed * t
                } else if t <= reach + duration {
                    at
                } else {
                    at + speed * (t - reach - duration)
                }
            }
            None => speed * t,
        }
    };

    let [lo, hi] = cfg.radio.probe_interval_range_s;
    let mut detections = Vec::new();
    let mut t = 0.0;
    loop {
        t += rng.random_range(lo..=hi);
        if t > trip_duration {
            break;
        }
        let stamp = quantize_to_tick(t);
        let abs_pos = (entry + position_at(stamp)).rem_euclid(geometry.perimeter_m);
        for pod in [start_pod, dest_pod] {
            let distance = geometry.arc_distance(abs_pos, geometry.pod_positions_m[pod]);
            if distance <= radius {
                let noise: f64 = rng.sample(StandardNormal);
                detections.push(DetectionRecord {
                    pod_id: pod as u32,
                    device_id,
                    timestamp_s: stamp,
                    rssi_dbm: rssi_at(distance.max(REFERENCE_DISTANCE_M), &cfg.radio, noise),
                });
                break; // zones are disjoint: at most one pod hears a probe
            }
        }
    }
    Ok(detections)
}

/// Simulate the whole experiment: every trip of every mode, merged into one
/// time-sorted detection stream plus the device-to-mode ground truth.
pub fn simulate_experiment(
    cfg: &SimConfig,
    seed: RngSeed,
) -> Result<(Vec<DetectionRecord>, BTreeMap<DeviceId, Mode>), SimError> {
    cfg.validate()?;
    let n_pods = cfg.geometry.n_pods();
    let mut offset_rng = seed.derive("start-offsets").rng();
    let mut detections = Vec::new();
    let mut truth: BTreeMap<DeviceId, Mode> = BTreeMap::new();

    for mode in Mode::ALL {
        let label = format!("trip/{mode}");
        for index in 0..cfg.trips_per_mode[mode.index()] {
            let offset = if cfg.start_window_s > 0.0 {
                quantize_to_tick(offset_rng.random_range(0.0..cfg.start_window_s))
            } else {
                0.0
            };
            let start_pod = index % n_pods;
            // Fresh device per trip; on the (astronomically unlikely) device
            // id collision, re-derive the trip seed until the id is unique.
            let mut retry = 0u64;
            let records = loop {
                let trip_seed = if retry == 0 {
                    seed.derive_index(&label, index as u64)
                } else {
                    seed.derive_index(&label, index as u64).derive_index("retry", retry)
                };
                let records = simulate_trip(mode, start_pod, cfg, trip_seed)?;
                match records.first().map(|r| r.device_id) {
                    Some(device) if truth.contains_key(&device) => retry += 1,
                    _ => break records,
                }
            };
            if let Some(device) = records.first().map(|r| r.device_id) {
                truth.insert(device, mode);
            }
            detections.extend(records.into_iter().map(|mut r| {
                r.timestamp_s += offset;
                r
            }));
        }
    }

    detections.sort_by(|a, b| {
        a.timestamp_s
            .partial_cmp(&b.timestamp_s)
            .expect("timestamps are finite")
            .then(a.device_id.cmp(&b.device_id))
            .then(a.pod_id.cmp(&b.pod_id))
    });
    Ok((detections, truth))
}
