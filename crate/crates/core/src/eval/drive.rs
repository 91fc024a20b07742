//! Places utterances along a simulated drive so that a chosen share of
//! them falls entirely inside the classified maneuver.

use super::corpus::UtteranceLabel;
use crate::error::{Error, Result};
use crate::fusion::maneuver_states;
use crate::scorer::ManeuverKind;
use crate::telemetry::{
    generate_trajectory, GeoSample, ManeuverState, ManeuverThresholds, TrajectoryKind,
    TrajectoryParams,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default share of utterances spoken during the maneuver.
pub const DEFAULT_INSIDE_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct DrivePlan {
    pub trace: Vec<GeoSample>,
    pub states: Vec<ManeuverState>,
    /// Drive time at which each utterance starts.
    pub start_times: Vec<f64>,
    /// Whether each utterance lies wholly inside a sensitive stretch.
    pub inside: Vec<bool>,
}

/// Half-open stretches `[from, to)` of drive time over which aligned
/// frames see `kind`, between the first state and `end_s`.
pub fn state_intervals(
    states: &[ManeuverState],
    kind: ManeuverKind,
    staleness_limit_s: f64,
    end_s: f64,
) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, s) in states.iter().enumerate() {
        let next = states.get(i + 1).map_or(end_s, |n| n.timestamp_s);
        let fresh_until = s.timestamp_s + staleness_limit_s;
        let mut pieces = vec![(s.timestamp_s, next.min(fresh_until), s.state)];
        if fresh_until < next {
            pieces.push((fresh_until, next, ManeuverKind::Normal));
        }
        for (a, b, k) in pieces {
            if k != kind || b <= a {
                continue;
            }
            match out.last_mut() {
                Some(last) if last.1 == a => last.1 = b,
                _ => out.push((a, b)),
            }
        }
    }
    out
}

fn place(rng: &mut ChaCha8Rng, intervals: &[(f64, f64)], duration_s: f64) -> Option<f64> {
    // Keep clear of the open end so the last frame still precedes it.
    let margin = 1e-6;
    let fitting: Vec<&(f64, f64)> = intervals
        .iter()
        .filter(|(a, b)| b - a > duration_s + margin)
        .collect();
    let &&(a, b) = fitting.get(rng.random_range(0..fitting.len().max(1)))?;
    let latest = b - duration_s - margin;
    Some(if latest > a {
        rng.random_range(a..latest)
    } else {
        a
    })
}

/// Assigns start times on a generated drive. Within each label,
/// `round(inside_fraction * count)` utterances land inside a sensitive
/// stretch and the rest inside normal stretches.
#[allow(clippy::too_many_arguments)]
pub fn pair_with_drive(
    labels: &[UtteranceLabel],
    durations_s: &[f64],
    kind: TrajectoryKind,
    params: &TrajectoryParams,
    thresholds: &ManeuverThresholds,
    staleness_limit_s: f64,
    inside_fraction: f64,
    seed: u64,
) -> Result<DrivePlan> {
    if labels.len() != durations_s.len() {
        return Err(Error::invalid("one duration per utterance is required"));
    }
    if !(0.0..=1.0).contains(&inside_fraction) {
        return Err(Error::invalid("inside fraction must lie in [0, 1]"));
    }
    let trajectory = generate_trajectory(kind, params, seed)?;
    let trace = trajectory.samples;
    let states = maneuver_states(&trace, thresholds)?;
    let end_s = trace.last().map_or(0.0, |s| s.timestamp_s);
    let sensitive = state_intervals(&states, ManeuverKind::Sensitive, staleness_limit_s, end_s);
    let normal = state_intervals(&states, ManeuverKind::Normal, staleness_limit_s, end_s);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inside = vec![false; labels.len()];
    for label in [UtteranceLabel::Positive, UtteranceLabel::Negative] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        idx.shuffle(&mut rng);
        let n_inside = (inside_fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..n_inside] {
            inside[i] = true;
        }
    }
    let start_times = durations_s
        .iter()
        .zip(&inside)
        .map(|(&d, &ins)| {
            let pool = if ins { &sensitive } else { &normal };
            place(&mut rng, pool, d).ok_or_else(|| {
                Error::invalid(format!(
                    "no {} stretch of the drive is long enough for a {d:.2} s utterance",
                    if ins { "sensitive" } else { "normal" }
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DrivePlan {
        trace,
        states,
        start_times,
        inside,
    })
}
