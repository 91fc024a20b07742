//! Binds the vehicle's maneuver state to the detector's sensitivity.
//!
//! Telemetry and audio are merged by timestamp: each audio frame sees the
//! latest maneuver state at or before it. Missing or stale telemetry falls
//! back to the normal state.

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::pipeline::{Pipeline, UtteranceFrames};
use crate::scorer::{
    DetectionEvent, ManeuverKind, ScoringConfig, Sensitivity, SmoothingConfig,
    DEFAULT_REFRACTORY_FRAMES,
};
use crate::telemetry::{
    classify_maneuver, derive_states, GeoSample, ManeuverState, ManeuverThresholds,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_STALENESS_LIMIT_S: f64 = 5.0;

/// Sensitivity for the normal state and the higher one used during
/// maneuvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPair {
    pub sen_1: Sensitivity,
    pub sen_2: Sensitivity,
}

impl SensitivityPair {
    /// Requires `sen_1 < sen_2`.
    pub fn new(sen_1: f64, sen_2: f64) -> Result<Self> {
        let pair = SensitivityPair {
            sen_1: Sensitivity::new(sen_1)?,
            sen_2: Sensitivity::new(sen_2)?,
        };
        if sen_1 >= sen_2 {
            return Err(Error::invalid(format!(
                "sensitivity pair needs sen_1 < sen_2, got ({sen_1}, {sen_2})"
            )));
        }
        Ok(pair)
    }

    /// Both states share one sensitivity; fusion reduces to a single
    /// source.
    pub fn constant(sensitivity: Sensitivity) -> Self {
        SensitivityPair {
            sen_1: sensitivity,
            sen_2: sensitivity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub pair: SensitivityPair,
    pub thresholds: ManeuverThresholds,
    pub smoothing: SmoothingConfig,
    pub scoring: ScoringConfig,
    pub staleness_limit_s: f64,
    pub refractory_frames: usize,
}

impl FusionConfig {
    pub fn new(pair: SensitivityPair) -> Self {
        FusionConfig {
            pair,
            thresholds: ManeuverThresholds::default(),
            smoothing: SmoothingConfig::default(),
            scoring: ScoringConfig::default(),
            staleness_limit_s: DEFAULT_STALENESS_LIMIT_S,
            refractory_frames: DEFAULT_REFRACTORY_FRAMES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.staleness_limit_s > 0.0) {
            return Err(Error::invalid("staleness limit must be positive"));
        }
        if self.smoothing.w_s == 0 || self.scoring.w_max == 0 {
            return Err(Error::invalid("windows must be at least 1 frame"));
        }
        self.thresholds.validate()
    }
}

/// Flat run configuration as read from and written to JSON files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sen_1: f64,
    pub sen_2: f64,
    pub s_thd: f64,
    pub d_thd: f64,
    pub w_s: usize,
    pub w_max: usize,
    pub staleness_limit_s: f64,
    pub refractory_frames: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let th = ManeuverThresholds::default();
        RunConfig {
            sen_1: 0.55,
            sen_2: 0.58,
            s_thd: th.s_thd,
            d_thd: th.d_thd,
            w_s: SmoothingConfig::default().w_s,
            w_max: ScoringConfig::default().w_max,
            staleness_limit_s: DEFAULT_STALENESS_LIMIT_S,
            refractory_frames: DEFAULT_REFRACTORY_FRAMES,
        }
    }
}

impl RunConfig {
    pub fn to_fusion(&self) -> Result<FusionConfig> {
        self.with_pair(SensitivityPair::new(self.sen_1, self.sen_2)?)
    }

    /// Both states at `sen_1`; `sen_2` is ignored.
    pub fn to_single(&self) -> Result<FusionConfig> {
        self.with_pair(SensitivityPair::constant(Sensitivity::new(self.sen_1)?))
    }

    fn with_pair(&self, pair: SensitivityPair) -> Result<FusionConfig> {
        let config = FusionConfig {
            pair,
            thresholds: ManeuverThresholds {
                s_thd: self.s_thd,
                d_thd: self.d_thd,
            },
            smoothing: SmoothingConfig { w_s: self.w_s },
            scoring: ScoringConfig { w_max: self.w_max },
            staleness_limit_s: self.staleness_limit_s,
            refractory_frames: self.refractory_frames,
        };
        config.validate()?;
        Ok(config)
    }
}

impl From<&FusionConfig> for RunConfig {
    fn from(c: &FusionConfig) -> Self {
        RunConfig {
            sen_1: c.pair.sen_1.value(),
            sen_2: c.pair.sen_2.value(),
            s_thd: c.thresholds.s_thd,
            d_thd: c.thresholds.d_thd,
            w_s: c.smoothing.w_s,
            w_max: c.scoring.w_max,
            staleness_limit_s: c.staleness_limit_s,
            refractory_frames: c.refractory_frames,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedFrameContext {
    pub timestamp_s: f64,
    pub maneuver_state: ManeuverKind,
    /// Time since the telemetry sample in effect; `None` when no sample
    /// precedes the frame.
    pub telemetry_age_s: Option<f64>,
}

pub fn select_sensitivity(state: ManeuverKind, pair: &SensitivityPair) -> Sensitivity {
    match state {
        ManeuverKind::Sensitive => pair.sen_2,
        ManeuverKind::Normal => pair.sen_1,
    }
}

/// Both inputs must be sorted by timestamp.
pub fn align_telemetry(
    frame_timestamps: &[f64],
    states: &[ManeuverState],
    staleness_limit_s: f64,
) -> Vec<AlignedFrameContext> {
    let mut next = 0;
    frame_timestamps
        .iter()
        .map(|&t| {
            while next < states.len() && states[next].timestamp_s <= t {
                next += 1;
            }
            let latest = next.checked_sub(1).map(|i| &states[i]);
            let age = latest.map(|s| t - s.timestamp_s);
            let maneuver_state = match (latest, age) {
                (Some(s), Some(a)) if a <= staleness_limit_s => s.state,
                _ => ManeuverKind::Normal,
            };
            AlignedFrameContext {
                timestamp_s: t,
                maneuver_state,
                telemetry_age_s: age,
            }
        })
        .collect()
}

/// Classified maneuver states of a raw trace. Traces with fewer than two
/// samples yield no states.
pub fn maneuver_states(
    trace: &[GeoSample],
    thresholds: &ManeuverThresholds,
) -> Result<Vec<ManeuverState>> {
    Ok(classify_maneuver(&derive_states(trace)?, thresholds))
}

/// Detection over precomputed frames. `audio_start_s` places the first
/// audio sample on the telemetry clock.
pub fn detect_fused(
    pipeline: &Pipeline,
    frames: &UtteranceFrames,
    states: &[ManeuverState],
    config: &FusionConfig,
    audio_start_s: f64,
) -> Result<Vec<DetectionEvent>> {
    config.validate()?;
    let drive_times: Vec<f64> = frames
        .timestamps
        .iter()
        .map(|t| audio_start_s + t)
        .collect();
    let aligned = align_telemetry(&drive_times, states, config.staleness_limit_s);
    pipeline.detect_with(
        frames,
        config.smoothing,
        config.scoring,
        config.refractory_frames,
        |k, _| {
            let state = aligned[k].maneuver_state;
            (select_sensitivity(state, &config.pair), state)
        },
    )
}

/// Full fused run: telemetry classification, audio analysis and
/// per-frame sensitivity switching. An empty trace runs entirely at
/// `sen_1`.
pub fn run_fused(
    pipeline: &Pipeline,
    audio: &AudioBuffer,
    trace: &[GeoSample],
    config: &FusionConfig,
    audio_start_s: f64,
) -> Result<Vec<DetectionEvent>> {
    config.validate()?;
    let states = maneuver_states(trace, &config.thresholds)?;
    let frames = pipeline.analyze(audio)?;
    detect_fused(pipeline, &frames, &states, config, audio_start_s)
}
