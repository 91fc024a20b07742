//! GPS telemetry: per-sample speed and bearing, maneuver classification,
//! and synthetic drive traces.

use crate::dsp::wav::csv_err;
use crate::error::{Error, Result};
use crate::scorer::ManeuverKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Mean Earth radius of the spherical model, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Below this displacement the bearing is carried over from the previous
/// pair.
pub const STATIONARY_DISTANCE_M: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoSample {
    pub timestamp_s: f64,
    pub lat_deg: f64,
    pub lng_deg: f64,
    pub alt_m: f64,
}

impl GeoSample {
    pub fn new(timestamp_s: f64, lat_deg: f64, lng_deg: f64) -> Self {
        GeoSample {
            timestamp_s,
            lat_deg,
            lng_deg,
            alt_m: 0.0,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let fields = [self.timestamp_s, self.lat_deg, self.lng_deg, self.alt_m];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTrace {
                index,
                reason: "non-finite field".into(),
            });
        }
        if !(-90.0..=90.0).contains(&self.lat_deg) || !(-180.0..=180.0).contains(&self.lng_deg) {
            return Err(Error::InvalidTrace {
                index,
                reason: "coordinates out of range".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub timestamp_s: f64,
    pub speed_mps: f64,
    /// Degrees clockwise from north in `[0, 360)`.
    pub bearing_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverThresholds {
    /// Speed change between consecutive samples, m/s.
    pub s_thd: f64,
    /// Bearing change between consecutive samples, degrees.
    pub d_thd: f64,
}

impl Default for ManeuverThresholds {
    fn default() -> Self {
        ManeuverThresholds {
            s_thd: 0.5,
            d_thd: 10.0,
        }
    }
}

impl ManeuverThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_thd >= 0.0 && self.d_thd >= 0.0) {
            return Err(Error::invalid("maneuver thresholds must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverState {
    pub timestamp_s: f64,
    pub state: ManeuverKind,
    pub delta_s: f64,
    pub delta_d: f64,
}

pub fn haversine_distance(a: &GeoSample, b: &GeoSample) -> f64 {
    let (phi1, phi2) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lng_deg - a.lng_deg).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Forward azimuth from `a` to `b` in `[0, 360)`.
pub fn initial_bearing(a: &GeoSample, b: &GeoSample) -> Result<f64> {
    if a.lat_deg == b.lat_deg && a.lng_deg == b.lng_deg {
        return Err(Error::UndefinedBearing);
    }
    let (phi1, phi2) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dlambda = (b.lng_deg - a.lng_deg).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    Ok(normalize_bearing(y.atan2(x).to_degrees()))
}

pub fn normalize_bearing(deg: f64) -> f64 {
    let b = deg.rem_euclid(360.0);
    if b >= 360.0 {
        0.0
    } else {
        b
    }
}

/// Smallest angle between two bearings, in `[0, 180]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Signed turn from `a` to `b` in `(-180, 180]`.
pub fn signed_angle(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Speed and bearing for each consecutive pair, stamped with the later
/// sample's time.
pub fn derive_states(trace: &[GeoSample]) -> Result<Vec<VehicleState>> {
    for (i, s) in trace.iter().enumerate() {
        s.validate(i)?;
    }
    let mut states = Vec::with_capacity(trace.len().saturating_sub(1));
    let mut bearing = 0.0;
    for (i, pair) in trace.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        let dt = b.timestamp_s - a.timestamp_s;
        if !(dt > 0.0) {
            return Err(Error::InvalidTrace {
                index: i + 1,
                reason: format!("timestamp {} does not increase", b.timestamp_s),
            });
        }
        let dist = haversine_distance(a, b);
        if dist >= STATIONARY_DISTANCE_M {
            bearing = initial_bearing(a, b)?;
        }
        states.push(VehicleState {
            timestamp_s: b.timestamp_s,
            speed_mps: dist / dt,
            bearing_deg: bearing,
        });
    }
    Ok(states)
}

/// Consecutive-difference classification: a state is sensitive iff both
/// its speed change and its bearing change strictly exceed the
/// thresholds. The first state is normal.
pub fn classify_maneuver(
    states: &[VehicleState],
    thresholds: &ManeuverThresholds,
) -> Vec<ManeuverState> {
    classify_maneuver_smoothed(states, thresholds, 1)
}

/// As [`classify_maneuver`], after a trailing moving average of speed and
/// a trailing circular mean of bearing over `window` states. A window of
/// 1 leaves the states untouched.
pub fn classify_maneuver_smoothed(
    states: &[VehicleState],
    thresholds: &ManeuverThresholds,
    window: usize,
) -> Vec<ManeuverState> {
    let window = window.max(1);
    let smoothed: Vec<(f64, f64)> = if window == 1 {
        states
            .iter()
            .map(|s| (s.speed_mps, s.bearing_deg))
            .collect()
    } else {
        (0..states.len())
            .map(|i| {
                let w = &states[(i + 1).saturating_sub(window)..=i];
                let speed = w.iter().map(|s| s.speed_mps).sum::<f64>() / w.len() as f64;
                let (sy, sx) = w.iter().fold((0.0, 0.0), |(y, x), s| {
                    let r = s.bearing_deg.to_radians();
                    (y + r.sin(), x + r.cos())
                });
                (speed, normalize_bearing(sy.atan2(sx).to_degrees()))
            })
            .collect()
    };
    states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (delta_s, delta_d) = if i == 0 {
                (0.0, 0.0)
            } else {
                (
                    (smoothed[i].0 - smoothed[i - 1].0).abs(),
                    angle_difference(smoothed[i].1, smoothed[i - 1].1),
                )
            };
            let sensitive = i > 0 && delta_s > thresholds.s_thd && delta_d > thresholds.d_thd;
            ManeuverState {
                timestamp_s: s.timestamp_s,
                state: if sensitive {
                    ManeuverKind::Sensitive
                } else {
                    ManeuverKind::Normal
                },
                delta_s,
                delta_d,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Straight,
    Turn,
    UTurn,
    Roundabout,
}

impl std::str::FromStr for TrajectoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(TrajectoryKind::Straight),
            "turn" => Ok(TrajectoryKind::Turn),
            "u_turn" | "u-turn" | "uturn" => Ok(TrajectoryKind::UTurn),
            "roundabout" => Ok(TrajectoryKind::Roundabout),
            other => Err(Error::invalid(format!("unknown trajectory kind {other:?}"))),
        }
    }
}

impl TrajectoryKind {
    /// `(duration_s, heading_change_deg, min_speed_fraction)` of the
    /// maneuver segment.
    fn shape(self) -> (f64, f64, f64) {
        match self {
            TrajectoryKind::Straight => (0.0, 0.0, 1.0),
            TrajectoryKind::Turn => (6.0, 90.0, 0.4),
            TrajectoryKind::UTurn => (14.0, 180.0, 0.1),
            TrajectoryKind::Roundabout => (20.0, 270.0, 0.4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryParams {
    pub cruise_speed_mps: f64,
    pub lead_in_s: f64,
    pub lead_out_s: f64,
    /// Overrides the kind's maneuver duration.
    pub maneuver_s: Option<f64>,
    /// Overrides the kind's total heading change; positive turns right.
    pub heading_change_deg: Option<f64>,
    /// Overrides the kind's slowest speed as a fraction of cruise.
    pub min_speed_fraction: Option<f64>,
    pub initial_heading_deg: f64,
    pub sample_rate_hz: f64,
    /// Standard deviation of horizontal position noise, meters.
    pub noise_sigma_m: f64,
    pub origin_lat_deg: f64,
    pub origin_lng_deg: f64,
    pub alt_m: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        TrajectoryParams {
            cruise_speed_mps: 12.0,
            lead_in_s: 20.0,
            lead_out_s: 20.0,
            maneuver_s: None,
            heading_change_deg: None,
            min_speed_fraction: None,
            initial_heading_deg: 90.0,
            sample_rate_hz: 1.0,
            noise_sigma_m: 0.0,
            origin_lat_deg: 39.96,
            origin_lng_deg: 116.35,
            alt_m: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<GeoSample>,
    /// Ground truth per sample.
    pub in_maneuver: Vec<bool>,
    /// `[start, end]` of the maneuver in seconds; `None` for straight drives.
    pub maneuver_window: Option<(f64, f64)>,
}

/// Synthesizes a drive: a straight lead-in at cruise speed, the maneuver
/// (speed falls linearly to its minimum at mid-maneuver and recovers while
/// the heading turns at a constant rate), then a straight lead-out.
pub fn generate_trajectory(
    kind: TrajectoryKind,
    params: &TrajectoryParams,
    seed: u64,
) -> Result<Trajectory> {
    let (default_len, default_turn, default_min) = kind.shape();
    let maneuver_s = params.maneuver_s.unwrap_or(default_len);
    let turn = params.heading_change_deg.unwrap_or(default_turn);
    let min_frac = params.min_speed_fraction.unwrap_or(default_min);
    if !(params.cruise_speed_mps >= 0.0)
        || !(params.sample_rate_hz > 0.0)
        || params.lead_in_s < 0.0
        || params.lead_out_s < 0.0
        || maneuver_s < 0.0
        || !(0.0..=1.0).contains(&min_frac)
        || params.noise_sigma_m < 0.0
    {
        return Err(Error::invalid("invalid trajectory geometry"));
    }
    let t0 = params.lead_in_s;
    let t1 = t0 + maneuver_s;
    let total = t1 + params.lead_out_s;
    let cruise = params.cruise_speed_mps;
    let v_min = cruise * min_frac;
    let has_maneuver = kind != TrajectoryKind::Straight && maneuver_s > 0.0;

    let speed_at = |t: f64| {
        if !has_maneuver || t <= t0 || t >= t1 {
            return cruise;
        }
        let half = maneuver_s / 2.0;
        let frac = ((t - (t0 + half)).abs() / half).min(1.0);
        v_min + (cruise - v_min) * frac
    };
    let yaw_rate = if has_maneuver { turn / maneuver_s } else { 0.0 };
    let yaw_at = |t: f64| {
        if has_maneuver && t >= t0 && t < t1 {
            yaw_rate
        } else {
            0.0
        }
    };

    let dt_sample = 1.0 / params.sample_rate_hz;
    let n_samples = (total / dt_sample).floor() as usize + 1;
    const SUBSTEPS: usize = 100;
    let h = dt_sample / SUBSTEPS as f64;

    let noise = Normal::new(0.0, params.noise_sigma_m.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lat0 = params.origin_lat_deg;
    let cos_lat0 = lat0.to_radians().cos();
    let to_geo = |t: f64, x: f64, y: f64| GeoSample {
        timestamp_s: t,
        lat_deg: lat0 + (y / EARTH_RADIUS_M).to_degrees(),
        lng_deg: params.origin_lng_deg + (x / (EARTH_RADIUS_M * cos_lat0)).to_degrees(),
        alt_m: params.alt_m,
    };

    let (mut x, mut y) = (0.0f64, 0.0f64);
    let mut heading = params.initial_heading_deg;
    let mut samples = Vec::with_capacity(n_samples);
    let mut in_maneuver = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let t = k as f64 * dt_sample;
        if k > 0 {
            for s in 0..SUBSTEPS {
                let tm = (k - 1) as f64 * dt_sample + (s as f64 + 0.5) * h;
                let mid_heading = heading + yaw_at(tm) * h / 2.0;
                let v = speed_at(tm);
                let r = mid_heading.to_radians();
                x += v * r.sin() * h;
                y += v * r.cos() * h;
                heading += yaw_at(tm) * h;
            }
        }
        let (nx, ny) = if params.noise_sigma_m > 0.0 {
            (noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        samples.push(to_geo(t, x + nx, y + ny));
        in_maneuver.push(has_maneuver && t >= t0 && t <= t1);
    }
    Ok(Trajectory {
        samples,
        in_maneuver,
        maneuver_window: has_maneuver.then_some((t0, t1)),
    })
}

/// Net signed heading change along a sequence of states.
pub fn total_bearing_change(states: &[VehicleState]) -> f64 {
    states
        .windows(2)
        .map(|w| signed_angle(w[0].bearing_deg, w[1].bearing_deg))
        .sum()
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<GeoSample>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let expected = ["timestamp_s", "lat_deg", "lng_deg", "alt_m"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            offset: 0,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let trace: Vec<GeoSample> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;
    for (i, s) in trace.iter().enumerate() {
        s.validate(i)?;
    }
    Ok(trace)
}

pub fn write_trace_csv<W: Write>(out: W, trace: &[GeoSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp_s", "lat_deg", "lng_deg", "alt_m"])
        .map_err(csv_err)?;
    for s in trace {
        w.serialize((s.timestamp_s, s.lat_deg, s.lng_deg, s.alt_m))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `timestamp_s,in_maneuver` with 0/1 labels.
pub fn write_truth_csv<W: Write>(out: W, trajectory: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp_s", "in_maneuver"])
        .map_err(csv_err)?;
    for (s, m) in trajectory.samples.iter().zip(&trajectory.in_maneuver) {
        w.serialize((s.timestamp_s, u8::from(*m)))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_states_jsonl<W: Write>(mut out: W, states: &[ManeuverState]) -> Result<()> {
    for s in states {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(lat: f64, lng: f64) -> GeoSample {
        GeoSample::new(0.0, lat, lng)
    }

    #[test]
    fn distance_closed_forms() {
        assert_eq!(haversine_distance(&at(12.0, 34.0), &at(12.0, 34.0)), 0.0);
        let d = haversine_distance(&at(0.0, 0.0), &at(1.0, 0.0));
        let expected = std::f64::consts::PI / 180.0 * EARTH_RADIUS_M;
        assert!((d - expected).abs() < 1e-6);
        assert!((d - 111_194.93).abs() < 0.01);
    }

    #[test]
    fn bearing_closed_forms() {
        assert!(
            initial_bearing(&at(0.0, 0.0), &at(0.001, 0.0))
                .unwrap()
                .abs()
                < 1e-12
        );
        assert!((initial_bearing(&at(0.0, 0.0), &at(0.0, 0.001)).unwrap() - 90.0).abs() < 1e-12);
        assert!((initial_bearing(&at(0.0, 0.0), &at(0.0, -0.001)).unwrap() - 270.0).abs() < 1e-12);
        // atan2(sin 1° cos 1°, sin 1°) = atan(cos 1°)
        let expected = 1f64.to_radians().cos().atan().to_degrees();
        let got = initial_bearing(&at(0.0, 0.0), &at(1.0, 1.0)).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 44.996).abs() < 1e-3);
        assert!(matches!(
            initial_bearing(&at(1.0, 1.0), &at(1.0, 1.0)),
            Err(Error::UndefinedBearing)
        ));
    }

    #[test]
    fn speed_from_pair() {
        let a = GeoSample::new(0.0, 0.0, 0.0);
        let lat = (10.0 / EARTH_RADIUS_M).to_degrees();
        let b = GeoSample::new(1.0, lat, 0.0);
        let s = derive_states(&[a, b]).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].speed_mps - 10.0).abs() < 1e-9);
        assert_eq!(s[0].timestamp_s, 1.0);
    }

    #[test]
    fn stationary_trace_falls_back() {
        let trace: Vec<GeoSample> = (0..5)
            .map(|i| GeoSample::new(i as f64, 10.0, 20.0))
            .collect();
        let s = derive_states(&trace).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|v| v.speed_mps == 0.0 && v.bearing_deg == 0.0));
    }

    #[test]
    fn non_increasing_timestamps_rejected() {
        let trace = vec![
            GeoSample::new(0.0, 0.0, 0.0),
            GeoSample::new(1.0, 0.0, 0.0),
            GeoSample::new(1.0, 0.0, 0.1),
        ];
        match derive_states(&trace) {
            Err(Error::InvalidTrace { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
    }

    fn state(t: f64, speed: f64, bearing: f64) -> VehicleState {
        VehicleState {
            timestamp_s: t,
            speed_mps: speed,
            bearing_deg: bearing,
        }
    }

    #[test]
    fn classify_examples() {
        let th = ManeuverThresholds {
            s_thd: 1.0,
            d_thd: 15.0,
        };
        let c = classify_maneuver(&[state(0.0, 10.0, 90.0), state(1.0, 8.0, 120.0)], &th);
        assert_eq!(c[0].state, ManeuverKind::Normal);
        assert_eq!(c[1].state, ManeuverKind::Sensitive);
        let c = classify_maneuver(
            &[
                state(0.0, 10.0, 90.0),
                state(1.0, 10.0, 90.0),
                state(2.0, 10.0, 90.0),
            ],
            &th,
        );
        assert!(c.iter().all(|s| s.state == ManeuverKind::Normal));
        let c = classify_maneuver(&[state(0.0, 10.0, 350.0), state(1.0, 5.0, 10.0)], &th);
        assert!((c[1].delta_d - 20.0).abs() < 1e-12);
        assert_eq!(c[1].state, ManeuverKind::Sensitive);
    }

    #[test]
    fn only_one_condition_is_normal() {
        let th = ManeuverThresholds::default();
        let c = classify_maneuver(
            &[
                state(0.0, 10.0, 0.0),
                state(1.0, 5.0, 2.0),
                state(2.0, 5.0, 60.0),
            ],
            &th,
        );
        assert!(c.iter().all(|s| s.state == ManeuverKind::Normal));
    }

    #[test]
    fn straight_drive_recovers_speed_and_heading() {
        let params = TrajectoryParams {
            cruise_speed_mps: 10.0,
            lead_in_s: 30.0,
            lead_out_s: 30.0,
            ..Default::default()
        };
        let t = generate_trajectory(TrajectoryKind::Straight, &params, 0).unwrap();
        assert_eq!(t.samples.len(), 61);
        let states = derive_states(&t.samples).unwrap();
        for s in &states {
            assert!((s.speed_mps - 10.0).abs() < 1e-3);
            assert!((s.bearing_deg - 90.0).abs() < 1e-3);
        }
        let first = states[0].speed_mps;
        assert!(states
            .iter()
            .all(|s| ((s.speed_mps - first) / first).abs() < 1e-6));
    }

    #[test]
    fn u_turn_shape() {
        let t =
            generate_trajectory(TrajectoryKind::UTurn, &TrajectoryParams::default(), 0).unwrap();
        let states = derive_states(&t.samples).unwrap();
        let min = states.iter().map(|s| s.speed_mps).fold(f64::MAX, f64::min);
        assert!(min < 0.2 * 12.0, "{min}");
        let turn = total_bearing_change(&states);
        assert!((turn.abs() - 180.0).abs() < 5.0, "{turn}");
    }

    #[test]
    fn classifier_stays_inside_maneuver_window() {
        for kind in [
            TrajectoryKind::Turn,
            TrajectoryKind::UTurn,
            TrajectoryKind::Roundabout,
        ] {
            let t = generate_trajectory(kind, &TrajectoryParams::default(), 0).unwrap();
            let (t0, t1) = t.maneuver_window.unwrap();
            let states = derive_states(&t.samples).unwrap();
            let flagged: Vec<f64> = classify_maneuver(&states, &ManeuverThresholds::default())
                .iter()
                .filter(|s| s.state == ManeuverKind::Sensitive)
                .map(|s| s.timestamp_s)
                .collect();
            assert!(!flagged.is_empty(), "{kind:?}");
            assert!(
                flagged.iter().all(|&ts| ts >= t0 - 2.0 && ts <= t1 + 2.0),
                "{kind:?} {flagged:?}"
            );
        }
    }

    #[test]
    fn generator_is_seeded() {
        let params = TrajectoryParams {
            noise_sigma_m: 1.5,
            ..Default::default()
        };
        let a = generate_trajectory(TrajectoryKind::Turn, &params, 4).unwrap();
        let b = generate_trajectory(TrajectoryKind::Turn, &params, 4).unwrap();
        let c = generate_trajectory(TrajectoryKind::Turn, &params, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn trace_csv_round_trip() {
        let t = generate_trajectory(TrajectoryKind::Turn, &TrajectoryParams::default(), 0).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &t.samples).unwrap();
        assert!(buf.starts_with(b"timestamp_s,lat_deg,lng_deg,alt_m\n"));
        let back = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t.samples);
    }

    #[test]
    fn trace_csv_rejects_bad_header() {
        assert!(read_trace_csv("t,lat,lng,alt\n0,0,0,0\n".as_bytes()).is_err());
        assert!(
            read_trace_csv("timestamp_s,lat_deg,lng_deg,alt_m\n0,95,0,0\n".as_bytes()).is_err()
        );
    }

    #[test]
    fn smoothing_window_damps_noise() {
        let params = TrajectoryParams {
            noise_sigma_m: 2.0,
            ..Default::default()
        };
        let t = generate_trajectory(TrajectoryKind::Straight, &params, 1).unwrap();
        let states = derive_states(&t.samples).unwrap();
        let raw = classify_maneuver(&states, &ManeuverThresholds::default());
        let smooth = classify_maneuver_smoothed(&states, &ManeuverThresholds::default(), 5);
        let count = |v: &[ManeuverState]| {
            v.iter()
                .filter(|s| s.state == ManeuverKind::Sensitive)
                .count()
        };
        assert!(count(&smooth) <= count(&raw));
    }
}
